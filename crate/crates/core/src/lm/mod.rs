//! Character-level GRU language model with context slots (previous word,
//! user, time), trained on whole queries with an averaged cross-entropy.

mod io;
mod model;
mod network;
mod train;
mod vocab;

pub use model::{decode_symbols, Activation, EncodedQuery, LmModel, ModelSpec, Step};
pub use network::{log_softmax, Mode, RecurrentState};
pub use train::{train, EpochMetrics, TrainConfig, TrainReport, TrainingExample};
pub use vocab::{Vocabulary, END_OF_QUERY};

use rayon::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum LmError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid model file: {0}")]
    Format(String),
}

/// Average cross-entropy over a batch, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    /// Summed over each query's predicted positions, averaged over queries.
    pub per_query: f64,
    /// Total loss over total predicted positions.
    pub per_char: f64,
}

const GRAD_CHUNK: usize = 4;

fn check_batch(model: &LmModel, batch: &[&EncodedQuery]) -> Result<usize, LmError> {
    if batch.is_empty() {
        return Err(LmError::EmptyBatch);
    }
    let mut chars = 0;
    for q in batch {
        model.check_shape(q)?;
        if q.predicted_positions() == 0 {
            return Err(LmError::Shape("query with no predicted positions".into()));
        }
        chars += q.predicted_positions();
    }
    Ok(chars)
}

/// Dropout seed for the `index`-th query of a batch.
pub(crate) fn query_mode(mode: Mode, index: usize) -> Mode {
    match mode {
        Mode::Train { dropout, seed } => Mode::Train { dropout, seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64) },
        Mode::Infer => Mode::Infer,
    }
}

pub fn loss(model: &LmModel, batch: &[EncodedQuery], mode: Mode) -> Result<LossValue, LmError> {
    loss_refs(model, &batch.iter().collect::<Vec<_>>(), mode)
}

pub(crate) fn loss_refs(model: &LmModel, batch: &[&EncodedQuery], mode: Mode) -> Result<LossValue, LmError> {
    let chars = check_batch(model, batch)?;
    let losses: Vec<f64> = batch.par_iter().enumerate().map(|(i, q)| model.sequence_loss(q, query_mode(mode, i))).collect();
    let total: f64 = losses.iter().sum();
    Ok(LossValue { per_query: total / batch.len() as f64, per_char: total / chars as f64 })
}

/// Exact gradient of [`loss`] with respect to every parameter, in the flat
/// parameter order.
pub fn gradients(model: &LmModel, batch: &[EncodedQuery], mode: Mode) -> Result<(LossValue, Vec<f64>), LmError> {
    gradients_refs(model, &batch.iter().collect::<Vec<_>>(), mode)
}

pub(crate) fn gradients_refs(model: &LmModel, batch: &[&EncodedQuery], mode: Mode) -> Result<(LossValue, Vec<f64>), LmError> {
    let chars = check_batch(model, batch)?;
    let scale = 1.0 / batch.len() as f64;
    // fixed-size chunks accumulate sequentially and are summed in order, so
    // the result does not depend on thread scheduling
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut g = vec![0.0; model.param_count()];
            let mut l = 0.0;
            for (j, q) in chunk.iter().enumerate() {
                l += model.sequence_backward(q, query_mode(mode, c * GRAD_CHUNK + j), scale, &mut g, None);
            }
            (l, g)
        })
        .collect();
    let mut parts = parts.into_iter();
    let (mut total, mut grad) = parts.next().expect("non-empty batch");
    for (l, g) in parts {
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((LossValue { per_query: total / batch.len() as f64, per_char: total / chars as f64 }, grad))
}

/// dL/dx for the dense input of one query, zero-padded to `rows` rows.
pub fn input_gradients(model: &LmModel, query: &EncodedQuery, rows: usize) -> Result<Vec<Vec<f64>>, LmError> {
    check_batch(model, &[query])?;
    let mut scratch = vec![0.0; model.param_count()];
    let mut ig = Vec::new();
    model.sequence_backward(query, Mode::Infer, 1.0, &mut scratch, Some(&mut ig));
    ig.resize(rows.max(ig.len()), vec![0.0; model.input_dim()]);
    Ok(ig)
}

#[cfg(test)]
mod tests;
