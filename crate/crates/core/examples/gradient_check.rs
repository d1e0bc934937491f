//! Compare backprop-through-time gradients with central differences.
//!
//!     cargo run --release --example gradient_check

use nqac::lm::{self, Activation, LmModel, Mode, ModelSpec, Vocabulary};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ModelSpec { hidden: 6, layers: 2, word_dim: 0, user_dim: 0, time_dim: 0, activation: Activation::Tanh };
    let model = LmModel::new(spec, Vocabulary::from_chars("abc ".chars()), 1)?;
    let batch = vec![model.encode("ab ca", None, None, None)?, model.encode("cab", None, None, None)?];
    let (loss, analytic) = lm::gradients(&model, &batch, Mode::Infer)?;
    println!("{} parameters, loss {:.5} nats/query", model.param_count(), loss.per_query);

    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let p = model.params()[i];
        let (hi, lo) = ((f64::from(p) + 1e-4) as f32, (f64::from(p) - 1e-4) as f32);
        probe.set_param(i, hi);
        let l_hi = lm::loss(&probe, &batch, Mode::Infer)?.per_query;
        probe.set_param(i, lo);
        let l_lo = lm::loss(&probe, &batch, Mode::Infer)?.per_query;
        probe.set_param(i, p);
        let numeric = (l_hi - l_lo) / (f64::from(hi) - f64::from(lo));
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7));
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}
