//! Skip-gram with negative sampling over background queries.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FeatureError, WordEmbeddingTable};

#[derive(Debug, Clone)]
pub struct Word2VecConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub negative_samples: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Export input + output vectors instead of input vectors only. Queries
    /// are short, so two words that only ever appear next to each other share
    /// no other context; the summed vectors still place them together.
    pub sum_output_vectors: bool,
}

impl Default for Word2VecConfig {
    fn default() -> Self {
        Self { dim: 50, window: 3, epochs: 5, negative_samples: 5, learning_rate: 0.025, seed: 1, sum_output_vectors: true }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Train word vectors. Every word of the corpus gets a vector; the result is
/// a deterministic function of (queries, config).
pub fn train_word_embeddings<S: AsRef<str>>(queries: &[S], config: &Word2VecConfig) -> Result<WordEmbeddingTable, FeatureError> {
    if config.dim == 0 {
        return Err(FeatureError::Config("embedding dimension must be positive".into()));
    }
    let sentences: Vec<Vec<&str>> =
        queries.iter().map(|q| q.as_ref().split(' ').filter(|w| !w.is_empty()).collect::<Vec<_>>()).filter(|s| !s.is_empty()).collect();
    if sentences.is_empty() {
        return Err(FeatureError::Config("empty corpus".into()));
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for w in sentences.iter().flatten() {
        *counts.entry(w).or_default() += 1;
    }
    let words: Vec<&str> = counts.keys().copied().collect();
    let index: BTreeMap<&str, usize> = words.iter().enumerate().map(|(i, w)| (*w, i)).collect();
    let corpus: Vec<Vec<usize>> = sentences.iter().map(|s| s.iter().map(|w| index[w]).collect()).collect();

    // noise distribution ∝ count^0.75, sampled by inverse CDF
    let mut cdf: Vec<f64> = Vec::with_capacity(words.len());
    let mut acc = 0.0;
    for w in &words {
        acc += (counts[w] as f64).powf(0.75);
        cdf.push(acc);
    }

    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut input: Vec<f64> = (0..words.len() * dim).map(|_| (rng.gen::<f64>() - 0.5) / dim as f64).collect();
    let mut output = vec![0.0f64; words.len() * dim];

    let pairs_per_epoch: usize = corpus.iter().map(|s| s.len()).sum::<usize>().max(1);
    let total_steps = (pairs_per_epoch * config.epochs).max(1) as f64;
    let mut step = 0usize;
    let mut grad_in = vec![0.0f64; dim];

    for _ in 0..config.epochs {
        for sentence in &corpus {
            for (pos, &center) in sentence.iter().enumerate() {
                let lr = (config.learning_rate * (1.0 - step as f64 / total_steps)).max(config.learning_rate * 1e-4);
                step += 1;
                let lo = pos.saturating_sub(config.window);
                let hi = (pos + config.window + 1).min(sentence.len());
                for (ctx_pos, &context) in sentence.iter().enumerate().take(hi).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    grad_in.iter_mut().for_each(|g| *g = 0.0);
                    let c_in = center * dim;
                    for n in 0..=config.negative_samples {
                        let (target, label) = if n == 0 {
                            (context, 1.0)
                        } else {
                            let r = rng.gen::<f64>() * acc;
                            let t = cdf.partition_point(|&c| c <= r).min(words.len() - 1);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let t_out = target * dim;
                        let dot: f64 = (0..dim).map(|j| input[c_in + j] * output[t_out + j]).sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for j in 0..dim {
                            grad_in[j] += g * output[t_out + j];
                            output[t_out + j] += g * input[c_in + j];
                        }
                    }
                    for j in 0..dim {
                        input[c_in + j] += grad_in[j];
                    }
                }
            }
        }
    }

    let vectors = words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let v = (0..dim)
                .map(|j| {
                    let x = input[i * dim + j] + if config.sum_output_vectors { output[i * dim + j] } else { 0.0 };
                    x as f32
                })
                .collect();
            (w.to_string(), v)
        })
        .collect();
    WordEmbeddingTable::from_map(dim, vectors)
}
