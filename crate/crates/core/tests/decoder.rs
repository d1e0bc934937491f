use nqac::decoder::{beam_search, diverse_beam_search, prime, Completion, DecoderConfig};
use nqac::lm::{self, Activation, LmModel, ModelSpec, TrainConfig, TrainingExample, Vocabulary};

fn rank(list: &[Completion], text: &str) -> Option<usize> {
    list.iter().position(|c| c.text == text).map(|i| i + 1)
}

#[test]
fn distinct_query_is_not_pushed_down_by_near_duplicates() {
    let mut examples = Vec::new();
    for (q, n) in [("go red cars", 4), ("go red carts", 4), ("go red card", 4), ("go blue sky", 3)] {
        examples.extend((0..n).map(|_| TrainingExample::plain(q)));
    }
    let queries: Vec<&str> = examples.iter().map(|e| e.query.as_str()).collect();
    let spec = ModelSpec { hidden: 24, layers: 1, word_dim: 0, user_dim: 0, time_dim: 0, activation: Activation::Relu };
    let mut model = LmModel::new(spec, Vocabulary::build(&queries, 1), 5).unwrap();
    let config = TrainConfig { learning_rate: 2e-2, epochs: 300, batch_size: 10, dropout: 0.0, stop_below: Some(0.05), ..Default::default() };
    lm::train(&mut model, &examples, &[], None, None, &config, None).unwrap();

    let cfg = DecoderConfig { beam_width: 10, max_len: 20, diversity: 1.0, k: 3 };
    let primed = prime(&model, "go ", None, None, None).unwrap();
    let standard = beam_search(&primed, &cfg).unwrap();
    let diverse = diverse_beam_search(&primed, &cfg).unwrap();
    let texts = |v: &[Completion]| v.iter().map(|c| c.text.clone()).collect::<Vec<_>>();
    eprintln!("standard {:?}\ndiverse  {:?}", texts(&standard), texts(&diverse));

    let d = rank(&diverse, "go blue sky").expect("distinct query in diverse top-3");
    if let Some(s) = rank(&standard, "go blue sky") {
        assert!(d <= s, "diverse rank {d}, standard rank {s}");
    }
}
