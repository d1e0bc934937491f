use std::collections::BTreeMap;

use super::*;
use crate::features::VectorTable;

fn tiny_spec(activation: Activation) -> ModelSpec {
    ModelSpec { hidden: 8, layers: 2, word_dim: 2, user_dim: 3, time_dim: 4, activation }
}

fn word_table() -> VectorTable {
    let mut m = BTreeMap::new();
    m.insert("ab".to_string(), vec![0.5f32, -0.25]);
    m.insert("cab".to_string(), vec![-1.0f32, 0.75]);
    VectorTable::from_map(2, m).unwrap()
}

fn ts() -> chrono::NaiveDateTime {
    crate::corpus::parse_timestamp("2006-03-01 21:30:05").unwrap()
}

/// |V| = 12: nine regular characters plus the three reserved symbols.
fn tiny_model(activation: Activation, seed: u64) -> LmModel {
    let vocab = Vocabulary::from_chars("abcdefgh ".chars());
    assert_eq!(vocab.len(), 12);
    LmModel::new(tiny_spec(activation), vocab, seed).unwrap()
}

fn tiny_batch(model: &LmModel) -> Vec<EncodedQuery> {
    let words = word_table();
    let user = [0.3f32, -0.2, 0.9];
    vec![
        model.encode("ab cab", Some(&user), Some(&ts()), Some(&words)).unwrap(),
        model.encode("hgfe d", None, Some(&ts()), Some(&words)).unwrap(),
        model.encode("cab ab ga", Some(&user), None, Some(&words)).unwrap(),
    ]
}

/// Central differences against the analytic gradient for every parameter.
/// Parameters are f32, so the step actually taken is measured from the
/// rounded perturbed values.
fn finite_difference_check(model: &LmModel, batch: &[EncodedQuery], mode: Mode) -> f64 {
    let (_, analytic) = gradients(model, batch, mode).unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for (i, &a) in analytic.iter().enumerate() {
        let p = model.params()[i];
        let hi = (f64::from(p) + 1e-4) as f32;
        let lo = (f64::from(p) - 1e-4) as f32;
        probe.set_param(i, hi);
        let l_hi = loss(&probe, batch, mode).unwrap().per_query;
        probe.set_param(i, lo);
        let l_lo = loss(&probe, batch, mode).unwrap().per_query;
        probe.set_param(i, p);
        let numeric = (l_hi - l_lo) / (f64::from(hi) - f64::from(lo));
        let denom = a.abs().max(numeric.abs()).max(1e-7);
        let rel = (a - numeric).abs() / denom;
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn gradient_matches_finite_differences_relu() {
    let model = tiny_model(Activation::Relu, 3);
    let worst = finite_difference_check(&model, &tiny_batch(&model), Mode::Infer);
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn gradient_matches_finite_differences_tanh_with_fixed_dropout() {
    let model = tiny_model(Activation::Tanh, 5);
    let mode = Mode::Train { dropout: 0.3, seed: 11 };
    let worst = finite_difference_check(&model, &tiny_batch(&model), mode);
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn encode_places_previous_word_on_spaces() {
    let vocab = Vocabulary::from_chars("abc ".chars());
    let spec = ModelSpec { hidden: 4, layers: 2, word_dim: 2, user_dim: 30, time_dim: 4, activation: Activation::Relu };
    let model = LmModel::new(spec, vocab.clone(), 1).unwrap();
    let enc = model.encode("ab c", None, None, Some(&word_table())).unwrap();
    let dense = enc.dense(vocab.len(), 2, 5);
    let width = vocab.len() + 2 + 30 + 4;
    // hand-built expectation
    let mut expected = vec![vec![0.0; width]; 5];
    for (row, c) in ['a', 'b', ' ', 'c'].iter().enumerate() {
        expected[row][vocab.index(*c)] = 1.0;
    }
    expected[4][vocab.eoq()] = 1.0;
    expected[2][vocab.len()] = 0.5;
    expected[2][vocab.len() + 1] = -0.25;
    assert_eq!(dense, expected);
    // padded rows are entirely zero
    let padded = enc.dense(vocab.len(), 2, 8);
    assert!(padded[5..].iter().all(|r| r.iter().all(|&x| x == 0.0)));
}

#[test]
fn zero_user_vector_gives_zero_user_slot() {
    let model = tiny_model(Activation::Relu, 1);
    let zero = [0.0f32; 3];
    let enc = model.encode("abc", Some(&zero), None, None).unwrap();
    let v = model.vocab().len();
    for row in enc.dense(v, 2, 4) {
        assert!(row[v + 2..v + 5].iter().all(|&x| x == 0.0));
    }
    assert_eq!(enc, model.encode("abc", None, None, None).unwrap());
}

#[test]
fn softmax_rows_sum_to_one() {
    let model = tiny_model(Activation::Relu, 9);
    for q in tiny_batch(&model) {
        for p in model.forward(&q, Mode::Infer).unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn zero_parameters_give_uniform_predictions_and_known_loss() {
    let vocab = Vocabulary::from_chars("abcdefgh ".chars());
    let model = LmModel::zeros(tiny_spec(Activation::Relu), vocab).unwrap();
    let batch = tiny_batch(&model);
    for p in model.forward(&batch[0], Mode::Infer).unwrap() {
        for x in p {
            assert!((x - 1.0 / 12.0).abs() < 1e-12);
        }
    }
    let expected = batch.iter().map(|q| q.predicted_positions() as f64 * 12f64.ln()).sum::<f64>() / batch.len() as f64;
    let l = loss(&model, &batch, Mode::Infer).unwrap();
    assert!((l.per_query - expected).abs() < 1e-12);
    assert!((l.per_char - 12f64.ln()).abs() < 1e-12);
}

#[test]
fn loss_is_averaged_and_permutation_invariant() {
    let model = tiny_model(Activation::Relu, 2);
    let batch = tiny_batch(&model);
    let one = loss(&model, &batch[..1], Mode::Infer).unwrap();
    let two = loss(&model, &[batch[0].clone(), batch[0].clone()], Mode::Infer).unwrap();
    assert!((one.per_query - two.per_query).abs() < 1e-12);
    let mut rev = batch.clone();
    rev.reverse();
    let a = loss(&model, &batch, Mode::Infer).unwrap();
    let b = loss(&model, &rev, Mode::Infer).unwrap();
    assert!((a.per_query - b.per_query).abs() < 1e-12);
}

#[test]
fn confident_model_has_near_zero_loss() {
    // only the output bias is non-zero: a huge logit on the end marker
    let vocab = Vocabulary::from_chars("a".chars());
    let spec = ModelSpec { hidden: 2, layers: 1, word_dim: 0, user_dim: 0, time_dim: 0, activation: Activation::Relu };
    let mut model = LmModel::zeros(spec, vocab.clone()).unwrap();
    let bias = model.param_count() - vocab.len();
    model.set_param(bias + vocab.eoq(), 1e4);
    let q = model.encode("a", None, None, None).unwrap();
    assert!(loss(&model, &[q], Mode::Infer).unwrap().per_query < 1e-12);
}

#[test]
fn empty_batch_rejected_and_padding_has_no_gradient() {
    let model = tiny_model(Activation::Relu, 4);
    assert!(matches!(gradients(&model, &[], Mode::Infer), Err(LmError::EmptyBatch)));
    let q = &tiny_batch(&model)[0];
    let ig = input_gradients(&model, q, q.steps.len() + 3).unwrap();
    assert!(ig[q.steps.len()..].iter().all(|r| r.iter().all(|&x| x == 0.0)));
    // the final marker input predicts nothing either
    assert!(ig[q.steps.len() - 1].iter().all(|&x| x == 0.0));
    assert!(ig[0].iter().any(|&x| x != 0.0));
}

#[test]
fn dropout_is_reproducible_and_infer_is_deterministic() {
    let model = tiny_model(Activation::Relu, 6);
    let q = &tiny_batch(&model)[0];
    let m = Mode::Train { dropout: 0.5, seed: 3 };
    assert_eq!(model.forward(q, m).unwrap(), model.forward(q, m).unwrap());
    assert_ne!(model.forward(q, m).unwrap(), model.forward(q, Mode::Infer).unwrap());
    assert_eq!(model.forward(q, Mode::Infer).unwrap(), model.forward(q, Mode::Infer).unwrap());
}

#[test]
fn step_api_matches_sequence_forward() {
    let model = tiny_model(Activation::Relu, 8);
    let q = &tiny_batch(&model)[0];
    let probs = model.forward(q, Mode::Infer).unwrap();
    let ctx = model.context_preactivation(&q.context);
    let mut state = model.initial_state();
    for (t, step) in q.steps.iter().enumerate() {
        let lp = model.step(&mut state, step, &ctx);
        for (a, b) in lp.iter().zip(&probs[t]) {
            assert!((a.exp() - b).abs() < 1e-12);
        }
    }
}

#[test]
fn zeroed_slots_ignore_user_and_time() {
    let vocab = Vocabulary::from_chars("abcdefgh ".chars());
    let spec = ModelSpec { hidden: 8, layers: 2, word_dim: 0, user_dim: 0, time_dim: 0, activation: Activation::Relu };
    let model = LmModel::new(spec, vocab, 1).unwrap();
    let a = model.encode("abc", Some(&[1.0, 2.0, 3.0]), Some(&ts()), None).unwrap();
    let b = model.encode("abc", None, None, None).unwrap();
    assert_eq!(model.forward(&a, Mode::Infer).unwrap(), model.forward(&b, Mode::Infer).unwrap());
}

#[test]
fn save_load_round_trip() {
    let model = tiny_model(Activation::Tanh, 12);
    let mut buf = Vec::new();
    model.write_to(&mut buf).unwrap();
    let back = LmModel::read_from(buf.as_slice()).unwrap();
    assert_eq!(back, model);
    let max_delta = model.params().iter().zip(back.params()).map(|(a, b)| (a - b).abs()).fold(0f32, f32::max);
    assert_eq!(max_delta, 0.0);
    assert!(matches!(LmModel::read_from(&buf[..buf.len() - 5]), Err(LmError::Format(_))));
    let mut bad = buf.clone();
    bad[7] = b'2';
    assert!(matches!(LmModel::read_from(bad.as_slice()), Err(LmError::Format(_))));
}

#[test]
fn large_spec_metadata_survives_round_trip() {
    for hidden in [8, 1024] {
        let spec = ModelSpec { hidden, layers: 2, word_dim: 0, user_dim: 0, time_dim: 0, activation: Activation::Relu };
        let model = LmModel::zeros(spec.clone(), Vocabulary::from_chars("ab".chars())).unwrap();
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        assert_eq!(LmModel::read_from(buf.as_slice()).unwrap().spec(), &spec);
    }
}

fn examples(qs: &[&str]) -> Vec<TrainingExample> {
    qs.iter().map(|q| TrainingExample::plain(*q)).collect()
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let mut model = tiny_model(Activation::Relu, 1);
    let cfg = TrainConfig { learning_rate: 0.0, epochs: 4, batch_size: 2, dropout: 0.0, ..Default::default() };
    let report = train(&mut model, &examples(&["abc", "bad cab", "fade"]), &[], None, None, &cfg, None).unwrap();
    let first = report.history[0].train_loss;
    for e in &report.history {
        assert!((e.train_loss - first).abs() < 1e-12);
    }
}

#[test]
fn clipping_bounds_every_update() {
    let mut model = tiny_model(Activation::Relu, 1);
    let cfg = TrainConfig { learning_rate: 0.01, epochs: 3, batch_size: 1, dropout: 0.5, ..Default::default() };
    let report = train(&mut model, &examples(&["abc", "bad cab", "fade"]), &[], None, None, &cfg, None).unwrap();
    assert!(report.history.iter().all(|e| e.max_clipped_norm <= 0.5 + 1e-9));
}

#[test]
fn training_is_deterministic_and_logs_metrics() {
    let cfg = TrainConfig { learning_rate: 0.01, epochs: 3, batch_size: 2, ..Default::default() };
    let data = examples(&["abc", "bad cab", "fade", "head"]);
    let val = examples(&["bead"]);
    let mut a = tiny_model(Activation::Relu, 1);
    let mut b = tiny_model(Activation::Relu, 1);
    let mut log = Vec::new();
    let ra = train(&mut a, &data, &val, None, None, &cfg, Some(&mut log)).unwrap();
    train(&mut b, &data, &val, None, None, &cfg, None).unwrap();
    assert_eq!(a, b);
    let lines: Vec<serde_json::Value> = String::from_utf8(log).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    for key in ["epoch", "train_loss", "val_loss", "wall_seconds"] {
        assert!(lines[0].get(key).is_some(), "missing {key}");
    }
    assert!(ra.history.iter().all(|e| e.val_loss.is_some()));
}

#[test]
fn early_stop_threshold() {
    let mut model = tiny_model(Activation::Relu, 1);
    let cfg = TrainConfig { epochs: 50, dropout: 0.0, stop_below: Some(f64::INFINITY), ..Default::default() };
    let report = train(&mut model, &examples(&["abc"]), &[], None, None, &cfg, None).unwrap();
    assert_eq!(report.history.len(), 1);
}

#[test]
fn divergence_is_reported_with_epoch() {
    let mut model = tiny_model(Activation::Relu, 1);
    let last = model.param_count() - 1;
    model.set_param(last, f32::NAN);
    let cfg = TrainConfig { epochs: 2, dropout: 0.0, ..Default::default() };
    let err = train(&mut model, &examples(&["abc"]), &[], None, None, &cfg, None).unwrap_err();
    assert!(matches!(err, LmError::Diverged { epoch: 0, .. }), "{err}");
}
