//! Train a small character model until it memorizes fifty queries, then save
//! it and decode a few prefixes.
//!
//!     cargo run --release --example train_lm [-- out.bin]

use std::time::Instant;

use nqac::decoder::{greedy_decode, prime};
use nqac::lm::{self, Activation, LmModel, ModelSpec, TrainConfig, TrainingExample, Vocabulary};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/memorize50.txt"))?;
    let queries: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
    let examples: Vec<TrainingExample> = queries.iter().map(|q| TrainingExample::plain(*q)).collect();

    let spec = ModelSpec { hidden: 64, layers: 2, word_dim: 0, user_dim: 0, time_dim: 0, activation: Activation::Relu };
    let mut model = LmModel::new(spec, Vocabulary::build(&queries, 1), 7)?;
    println!("{} parameters, {} symbols", model.param_count(), model.vocab().len());

    let config = TrainConfig { learning_rate: 1e-2, epochs: 500, batch_size: 10, dropout: 0.0, stop_below: Some(0.01), ..Default::default() };
    let start = Instant::now();
    let report = lm::train(&mut model, &examples, &[], None, None, &config, None)?;
    for e in report.history.iter().filter(|e| e.epoch % 25 == 0) {
        println!("epoch {:>3}  loss/char {:.4}", e.epoch, e.train_loss_per_char);
    }
    let last = report.history.last().expect("at least one epoch");
    println!("stopped after {} epochs at {:.4} nats/char in {:.1}s", last.epoch + 1, last.train_loss_per_char, start.elapsed().as_secs_f64());

    for prefix in ["cheap f", "weather f", "zoo h"] {
        let primed = prime(&model, prefix, None, None, None)?;
        let c = greedy_decode(&primed, 40);
        println!("{prefix:>10} -> {} ({:.3})", c.text, c.log_prob);
    }
    if let Some(path) = std::env::args().nth(1) {
        model.save(path.as_ref())?;
        println!("saved {path}");
    }
    Ok(())
}
