use std::io::Write;
use std::time::Instant;

use chrono::NaiveDateTime;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::{EncodedQuery, LmModel};
use super::network::Mode;
use super::{gradients_refs, loss_refs, LmError};
use crate::features::VectorTable;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global gradient-norm cap.
    pub clip_norm: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Queries are truncated to this many characters.
    pub max_len: usize,
    /// Adam moment decay rates and epsilon.
    pub betas: (f64, f64),
    pub epsilon: f64,
    /// Stop after the first epoch whose training loss per character falls
    /// below this.
    pub stop_below: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-3,
            epochs: 10,
            batch_size: 32,
            clip_norm: 0.5,
            dropout: 0.5,
            seed: 1,
            max_len: 100,
            betas: (0.9, 0.999),
            epsilon: 1e-8,
            stop_below: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(LmError::Config("clip norm must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(LmError::Config("dropout must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.max_len == 0 {
            return Err(LmError::Config("batch size and max length must be positive".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(LmError::Config("learning rate must be non-negative".into()));
        }
        Ok(())
    }
}

/// A query with the context it was issued in.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub query: String,
    pub user_id: Option<String>,
    pub timestamp: Option<NaiveDateTime>,
}

impl TrainingExample {
    pub fn plain(query: impl Into<String>) -> Self {
        Self { query: query.into(), user_id: None, timestamp: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_loss_per_char: f64,
    pub val_loss: Option<f64>,
    pub val_loss_per_char: Option<f64>,
    pub wall_seconds: f64,
    /// Largest gradient norm handed to the optimizer, after clipping.
    pub max_clipped_norm: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub history: Vec<EpochMetrics>,
}

fn encode_all(
    model: &LmModel,
    examples: &[TrainingExample],
    max_len: usize,
    words: Option<&VectorTable>,
    users: Option<&VectorTable>,
) -> Result<Vec<EncodedQuery>, LmError> {
    examples
        .iter()
        .filter(|e| !e.query.is_empty())
        .map(|e| {
            let query: String = e.query.chars().take(max_len).collect();
            let user = match (users, &e.user_id) {
                (Some(t), Some(u)) => Some(t.lookup(u)),
                _ => None,
            };
            model.encode(&query, user, e.timestamp.as_ref(), words)
        })
        .collect()
}

/// Minibatch Adam on the averaged cross-entropy with global-norm clipping.
/// Deterministic for a fixed seed. One JSON line per epoch goes to `metrics`
/// when given.
#[allow(clippy::too_many_arguments)]
pub fn train(
    model: &mut LmModel,
    examples: &[TrainingExample],
    validation: &[TrainingExample],
    words: Option<&VectorTable>,
    users: Option<&VectorTable>,
    config: &TrainConfig,
    mut metrics: Option<&mut dyn Write>,
) -> Result<TrainReport, LmError> {
    config.validate()?;
    let data = encode_all(model, examples, config.max_len, words, users)?;
    if data.is_empty() {
        return Err(LmError::EmptyBatch);
    }
    let val = encode_all(model, validation, config.max_len, words, users)?;
    let total_chars: usize = data.iter().map(EncodedQuery::predicted_positions).sum();

    let n = model.param_count();
    let (mut m, mut v) = (vec![0.0f64; n], vec![0.0f64; n]);
    let (b1, b2) = config.betas;
    let mut t = 0i32;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = TrainReport::default();

    for epoch in 0..config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut max_norm: f64 = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&EncodedQuery> = chunk.iter().map(|&i| &data[i]).collect();
            let seed = config.seed ^ ((epoch as u64) << 32) ^ (b as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
            let mode = if config.dropout > 0.0 { Mode::Train { dropout: config.dropout, seed } } else { Mode::Infer };
            let (loss, mut grad) = gradients_refs(model, &batch, mode)?;
            epoch_loss += loss.per_query * batch.len() as f64;
            if !loss.per_query.is_finite() {
                return Err(LmError::Diverged { epoch, loss: loss.per_query });
            }

            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > config.clip_norm {
                let s = config.clip_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            max_norm = max_norm.max(norm.min(config.clip_norm));

            t += 1;
            let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
            let lr = config.learning_rate;
            let eps = config.epsilon;
            model.update_params(|i, p| {
                m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
                v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
                p - lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps)
            });
        }

        let train_loss = epoch_loss / data.len() as f64;
        if !train_loss.is_finite() {
            return Err(LmError::Diverged { epoch, loss: train_loss });
        }
        let val_loss = if val.is_empty() {
            None
        } else {
            let refs: Vec<&EncodedQuery> = val.iter().collect();
            Some(loss_refs(model, &refs, Mode::Infer)?)
        };
        let row = EpochMetrics {
            epoch,
            train_loss,
            train_loss_per_char: epoch_loss / total_chars as f64,
            val_loss: val_loss.map(|l| l.per_query),
            val_loss_per_char: val_loss.map(|l| l.per_char),
            wall_seconds: start.elapsed().as_secs_f64(),
            max_clipped_norm: max_norm,
        };
        tracing::debug!(epoch, train_loss, "epoch done");
        if let Some(w) = metrics.as_deref_mut() {
            serde_json::to_writer(&mut *w, &row).map_err(|e| LmError::Io(e.into()))?;
            writeln!(w)?;
        }
        let done = config.stop_below.is_some_and(|s| row.train_loss_per_char < s);
        report.history.push(row);
        if done {
            break;
        }
    }
    Ok(report)
}
