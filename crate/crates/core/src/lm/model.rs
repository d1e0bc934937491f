use chrono::NaiveDateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, END_OF_QUERY};
use super::LmError;
use crate::features::{encode_time, VectorTable, TIME_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Candidate state uses x⁺; gates stay sigmoid.
    #[default]
    Relu,
    Tanh,
}

/// Shape of the network and its input encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hidden: usize,
    pub layers: usize,
    /// Previous-word embedding slot, 0 disables it.
    pub word_dim: usize,
    /// User vector slot, 0 disables it.
    pub user_dim: usize,
    /// Either 0 or 4.
    pub time_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { hidden: 1024, layers: 2, word_dim: 50, user_dim: 30, time_dim: TIME_DIM, activation: Activation::Relu }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), LmError> {
        if self.hidden == 0 || self.layers == 0 {
            return Err(LmError::Config("hidden size and layer count must be positive".into()));
        }
        if self.time_dim != 0 && self.time_dim != TIME_DIM {
            return Err(LmError::Config(format!("time slot must have 0 or {TIME_DIM} components")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerLayout {
    pub in_dim: usize,
    pub w_input: usize,
    pub w_hidden: usize,
    pub bias: usize,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub vocab: usize,
    pub hidden: usize,
    pub word_offset: usize,
    pub context_offset: usize,
    pub layers: Vec<LayerLayout>,
    pub out_weight: usize,
    pub out_bias: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(spec: &ModelSpec, vocab: usize) -> Self {
        let h = spec.hidden;
        let mut offset = 0;
        let mut layers = Vec::with_capacity(spec.layers);
        for l in 0..spec.layers {
            let in_dim = if l == 0 { vocab + spec.word_dim + spec.user_dim + spec.time_dim } else { h };
            let layer = LayerLayout { in_dim, w_input: offset, w_hidden: offset + 3 * h * in_dim, bias: offset + 3 * h * (in_dim + h) };
            offset = layer.bias + 3 * h;
            layers.push(layer);
        }
        let out_weight = offset;
        let out_bias = out_weight + vocab * h;
        Self { vocab, hidden: h, word_offset: vocab, context_offset: vocab + spec.word_dim, layers, out_weight, out_bias, total: out_bias + vocab }
    }

    /// (name, dims, offset) for every tensor, in file order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, usize)> {
        let h = self.hidden;
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("gru{l}.w_input"), vec![3 * h, layer.in_dim], layer.w_input));
            out.push((format!("gru{l}.w_hidden"), vec![3 * h, h], layer.w_hidden));
            out.push((format!("gru{l}.bias"), vec![3 * h], layer.bias));
        }
        out.push(("output.weight".into(), vec![self.vocab, h], self.out_weight));
        out.push(("output.bias".into(), vec![self.vocab], self.out_bias));
        out
    }
}

/// Character-level GRU language model. Parameters are stored as f32 (the
/// file format); all arithmetic runs on an f64 copy.
#[derive(Debug, Clone)]
pub struct LmModel {
    spec: ModelSpec,
    vocab: Vocabulary,
    params: Vec<f32>,
    pub(crate) layout: Layout,
    pub(crate) weights: Vec<f64>,
}

impl PartialEq for LmModel {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.vocab == other.vocab
            && self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl LmModel {
    /// Uniform(−a, a) initialization with a = 1/√fan_in, seeded.
    pub fn new(spec: ModelSpec, vocab: Vocabulary, seed: u64) -> Result<Self, LmError> {
        spec.validate()?;
        let layout = Layout::new(&spec, vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0f32; layout.total];
        let h = spec.hidden;
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize| {
            let a = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.gen_range(-a..a) as f32;
            }
        };
        for layer in &layout.layers {
            fill(layer.w_input..layer.w_hidden, layer.in_dim);
            fill(layer.w_hidden..layer.bias, h);
            fill(layer.bias..layer.bias + 3 * h, h);
        }
        fill(layout.out_weight..layout.out_bias, h);
        fill(layout.out_bias..layout.total, h);
        Self::from_parts(spec, vocab, params)
    }

    pub fn zeros(spec: ModelSpec, vocab: Vocabulary) -> Result<Self, LmError> {
        spec.validate()?;
        let total = Layout::new(&spec, vocab.len()).total;
        Self::from_parts(spec, vocab, vec![0.0; total])
    }

    pub fn from_parts(spec: ModelSpec, vocab: Vocabulary, params: Vec<f32>) -> Result<Self, LmError> {
        spec.validate()?;
        let layout = Layout::new(&spec, vocab.len());
        if params.len() != layout.total {
            return Err(LmError::Shape(format!("expected {} parameters, got {}", layout.total, params.len())));
        }
        let weights = params.iter().map(|&p| f64::from(p)).collect();
        Ok(Self { spec, vocab, params, layout, weights })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Named tensors as (name, dims, values).
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f32])> {
        self.layout
            .tensors()
            .into_iter()
            .map(|(name, dims, off)| {
                let n: usize = dims.iter().product();
                (name, dims, &self.params[off..off + n])
            })
            .collect()
    }

    pub fn set_param(&mut self, i: usize, value: f32) {
        self.params[i] = value;
        self.weights[i] = f64::from(value);
    }

    /// Apply `f` to every parameter (as f64) and store the f32 result.
    pub fn update_params(&mut self, mut f: impl FnMut(usize, f64) -> f64) {
        for (i, (p, w)) in self.params.iter_mut().zip(self.weights.iter_mut()).enumerate() {
            *p = f(i, f64::from(*p)) as f32;
            *w = f64::from(*p);
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layout.layers[0].in_dim
    }

    /// Context vector (user slot then time slot), fixed for a whole query.
    pub fn context_vector(&self, user_vec: Option<&[f32]>, timestamp: Option<&NaiveDateTime>) -> Result<Vec<f64>, LmError> {
        let mut ctx = Vec::with_capacity(self.spec.user_dim + self.spec.time_dim);
        match user_vec {
            Some(u) if self.spec.user_dim > 0 => {
                if u.len() != self.spec.user_dim {
                    return Err(LmError::Shape(format!("user vector has {} components, model expects {}", u.len(), self.spec.user_dim)));
                }
                ctx.extend(u.iter().map(|&x| f64::from(x)));
            }
            _ => ctx.extend(std::iter::repeat_n(0.0, self.spec.user_dim)),
        }
        if self.spec.time_dim > 0 {
            match timestamp {
                Some(ts) => ctx.extend(encode_time(ts).to_array()),
                None => ctx.extend([0.0; TIME_DIM]),
            }
        }
        Ok(ctx)
    }

    /// Word-slot contents for a step whose character is `c`, given the text
    /// before it: the embedding of the preceding word when `c` is a space.
    pub(crate) fn word_slot(&self, text_before: &str, c: char, words: Option<&VectorTable>) -> Option<Vec<f64>> {
        if c != ' ' || self.spec.word_dim == 0 {
            return None;
        }
        let table = words?;
        let word = text_before.rsplit(' ').next().unwrap_or("");
        if word.is_empty() {
            return None;
        }
        let v = table.get(word)?;
        (v.len() == self.spec.word_dim).then(|| v.iter().map(|&x| f64::from(x)).collect())
    }

    /// Encode `query` for training or scoring: one step per character plus
    /// the end-of-query marker.
    pub fn encode(
        &self,
        query: &str,
        user_vec: Option<&[f32]>,
        timestamp: Option<&NaiveDateTime>,
        words: Option<&VectorTable>,
    ) -> Result<EncodedQuery, LmError> {
        if let Some(t) = words {
            if self.spec.word_dim > 0 && t.dim() != self.spec.word_dim {
                return Err(LmError::Shape(format!("word table has dimension {}, model expects {}", t.dim(), self.spec.word_dim)));
            }
        }
        let context = self.context_vector(user_vec, timestamp)?;
        let mut steps = Vec::with_capacity(query.len() + 1);
        for (pos, c) in query.char_indices() {
            steps.push(Step { symbol: self.vocab.index(c), word: self.word_slot(&query[..pos], c, words) });
        }
        steps.push(Step { symbol: self.vocab.eoq(), word: None });
        Ok(EncodedQuery { steps, context })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub symbol: usize,
    pub word: Option<Vec<f64>>,
}

/// Sparse form of an encoded query: one-hot index and optional word vector
/// per step, plus the per-query context.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedQuery {
    pub steps: Vec<Step>,
    pub context: Vec<f64>,
}

impl EncodedQuery {
    /// Number of scored positions: every character after the first, then the
    /// end-of-query marker.
    pub fn predicted_positions(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    /// Dense input matrix zero-padded to `rows` (at least the step count).
    /// Columns: one-hot | word slot | user slot | time slot.
    pub fn dense(&self, vocab_len: usize, word_dim: usize, rows: usize) -> Vec<Vec<f64>> {
        let width = vocab_len + word_dim + self.context.len();
        let mut out = vec![vec![0.0; width]; rows.max(self.steps.len())];
        for (row, step) in out.iter_mut().zip(&self.steps) {
            row[step.symbol] = 1.0;
            if let Some(w) = &step.word {
                row[vocab_len..vocab_len + word_dim].copy_from_slice(w);
            }
            row[vocab_len + word_dim..].copy_from_slice(&self.context);
        }
        out
    }
}

/// Text for `steps`, used in error messages and tests.
pub fn decode_symbols(vocab: &Vocabulary, symbols: &[usize]) -> String {
    symbols.iter().map(|&s| if s == vocab.eoq() { END_OF_QUERY } else { vocab.char_at(s).unwrap_or('\u{fffd}') }).collect()
}
