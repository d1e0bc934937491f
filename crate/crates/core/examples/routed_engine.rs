//! The engine routes seen prefixes to the trie and the rest to the model.
//!
//!     cargo run --release --example routed_engine

use nqac::decoder::DecoderConfig;
use nqac::engine::{Engine, Strategy, SuggestRequest};
use nqac::lm::{self, Activation, LmModel, ModelSpec, TrainConfig, TrainingExample, Vocabulary};
use nqac::mpc::CountedTrie;

mod common;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let split = common::toy_split();
    let trie = CountedTrie::build(&split.background_counts);
    let queries: Vec<String> = split.background.iter().map(|r| r.query.clone()).collect();
    let examples: Vec<TrainingExample> = queries.iter().map(TrainingExample::plain).collect();
    let spec = ModelSpec { hidden: 32, layers: 1, word_dim: 0, user_dim: 0, time_dim: 0, activation: Activation::Relu };
    let mut model = LmModel::new(spec, Vocabulary::build(&queries, 1), 3)?;
    lm::train(&mut model, &examples, &[], None, None, &TrainConfig { learning_rate: 1e-2, epochs: 10, dropout: 0.0, ..Default::default() }, None)?;

    let engine = Engine::new(Some(trie), Some(model), None, None, DecoderConfig { k: 3, ..Default::default() })?;
    for prefix in ["cheap f", "chess o", "chocolate m", "weather x"] {
        for strategy in [Strategy::Routed, Strategy::Neural] {
            let r = engine.suggest(&SuggestRequest::new(prefix, 3, strategy))?;
            let texts: Vec<&str> = r.suggestions.iter().map(|s| s.text.as_str()).collect();
            println!("{prefix:<12} {strategy:<7} -> {:<7} {:>6.2} ms  {texts:?}", r.strategy.as_str(), r.latency_ms);
        }
    }
    Ok(())
}
