//! Greedy, beam and diverse beam decoding side by side on a model trained
//! for a few seconds.
//!
//!     cargo run --release --example decode

use nqac::decoder::{beam_search, diverse_beam_search, greedy_decode, prime, DecoderConfig};
use nqac::lm::{self, Activation, LmModel, ModelSpec, TrainConfig, TrainingExample, Vocabulary};

mod common;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let split = common::toy_split();
    let queries: Vec<String> = split.background.iter().map(|r| r.query.clone()).collect();
    let examples: Vec<TrainingExample> = queries.iter().map(TrainingExample::plain).collect();
    let spec = ModelSpec { hidden: 48, layers: 1, word_dim: 0, user_dim: 0, time_dim: 0, activation: Activation::Relu };
    let mut model = LmModel::new(spec, Vocabulary::build(&queries, 1), 3)?;
    let config = TrainConfig { learning_rate: 1e-2, epochs: 15, batch_size: 16, dropout: 0.0, ..Default::default() };
    let report = lm::train(&mut model, &examples, &[], None, None, &config, None)?;
    println!("loss/char {:.3}", report.history.last().unwrap().train_loss_per_char);

    let cfg = DecoderConfig { beam_width: 10, max_len: 30, diversity: 1.0, k: 5 };
    for prefix in ["cheap ", "chicken s", "free g"] {
        let primed = prime(&model, prefix, None, None, None)?;
        println!("\n{prefix:?} greedy: {}", greedy_decode(&primed, cfg.max_len).text);
        let beam = beam_search(&primed, &cfg)?;
        let diverse = diverse_beam_search(&primed, &cfg)?;
        for (i, (b, d)) in beam.iter().zip(&diverse).enumerate() {
            println!("  {}  {:<28} {:>7.3}   {:<28} {:>7.3}", i + 1, b.text, b.score, d.text, d.score);
        }
    }
    Ok(())
}
