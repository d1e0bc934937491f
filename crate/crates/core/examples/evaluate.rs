//! MRR by seen/unseen prefixes and a paired t-test between two strategies.
//!
//!     cargo run --release --example evaluate

use nqac::decoder::DecoderConfig;
use nqac::engine::{Engine, Strategy};
use nqac::eval::{evaluate, format_table, paired_t_test, EvalConfig};
use nqac::lm::{self, Activation, LmModel, ModelSpec, TrainConfig, TrainingExample, Vocabulary};
use nqac::mpc::CountedTrie;

mod common;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let split = common::toy_split();
    let queries: Vec<String> = split.background.iter().map(|r| r.query.clone()).collect();
    let examples: Vec<TrainingExample> = queries.iter().map(TrainingExample::plain).collect();
    let spec = ModelSpec { hidden: 32, layers: 1, word_dim: 0, user_dim: 0, time_dim: 0, activation: Activation::Relu };
    let mut model = LmModel::new(spec, Vocabulary::build(&queries, 1), 3)?;
    lm::train(&mut model, &examples, &[], None, None, &TrainConfig { learning_rate: 1e-2, epochs: 10, dropout: 0.0, ..Default::default() }, None)?;
    let engine = Engine::new(Some(CountedTrie::build(&split.background_counts)), Some(model), None, None, DecoderConfig::default())?;

    let mut reports = Vec::new();
    for strategy in [Strategy::Routed, Strategy::Mpc, Strategy::Neural] {
        reports.push(evaluate(&engine, &split.test, &EvalConfig { strategy, k: 10, passes: 1 })?);
    }
    print!("{}", format_table(&reports));
    if let Some(t) = paired_t_test(&reports[2].reciprocal_ranks, &reports[0].reciprocal_ranks) {
        println!("neural vs routed: {t:?}");
    }
    Ok(())
}
