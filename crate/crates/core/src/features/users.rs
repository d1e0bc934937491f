//! PV-DBOW style user vectors: each user is a "document" predicted from the
//! words of their past queries through a softmax over all users.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FeatureError, UserVectorTable};

pub const USER_DIM: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserTrainMode {
    /// Per step: pick a word uniformly from one user's history and ascend
    /// log P(user | word). The learning rate decays linearly over the epochs.
    Stochastic,
    /// One exact gradient step on the whole objective per epoch.
    FullBatch,
}

#[derive(Debug, Clone)]
pub struct UserTrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub mode: UserTrainMode,
    pub seed: u64,
}

impl Default for UserTrainConfig {
    fn default() -> Self {
        Self { dim: USER_DIM, epochs: 50, learning_rate: 0.01, mode: UserTrainMode::Stochastic, seed: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct UserTraining {
    pub table: UserVectorTable,
    /// Objective after each epoch: mean over users of the mean
    /// log P(user | word) over that user's words.
    pub objective: Vec<f64>,
    /// Per-user mean log-likelihood after each epoch, users in id order.
    pub per_user: Vec<Vec<f64>>,
    /// Internal word-side vectors, kept for inspection.
    word_vectors: BTreeMap<String, Vec<f64>>,
    user_vectors: Vec<Vec<f64>>,
    users: Vec<String>,
}

impl UserTraining {
    /// P(user | word) for every user, in id order. Unknown words give the
    /// uniform distribution.
    pub fn posterior(&self, word: &str) -> Vec<(String, f64)> {
        let zero = vec![0.0; self.user_vectors.first().map_or(0, Vec::len)];
        let w = self.word_vectors.get(word).unwrap_or(&zero);
        let probs = softmax_scores(&self.user_vectors, w);
        self.users.iter().cloned().zip(probs).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax_scores(users: &[Vec<f64>], word: &[f64]) -> Vec<f64> {
    let scores: Vec<f64> = users.iter().map(|u| dot(u, word)).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

struct Problem {
    /// Per user: (word index, multiplicity) pairs and the history size.
    histories: Vec<(Vec<(usize, f64)>, f64)>,
    /// Per user: flat list of word indices, for uniform sampling.
    samples: Vec<Vec<usize>>,
}

impl Problem {
    fn objective(&self, users: &[Vec<f64>], words: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let mut log_probs: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let per_user: Vec<f64> = self
            .histories
            .iter()
            .enumerate()
            .map(|(u, (hist, n))| {
                hist.iter()
                    .map(|&(w, m)| {
                        let lp = log_probs.entry(w).or_insert_with(|| softmax_scores(users, &words[w]).into_iter().map(f64::ln).collect());
                        m * lp[u]
                    })
                    .sum::<f64>()
                    / n
            })
            .collect();
        (per_user.iter().sum::<f64>() / per_user.len() as f64, per_user)
    }
}

/// Ascend on log P(u | w) with weight `scale`, updating all user vectors and
/// the word vector.
fn step(users: &mut [Vec<f64>], word: &mut [f64], owner: usize, scale: f64) {
    let probs = softmax_scores(users, word);
    let dim = word.len();
    let mut expected = vec![0.0; dim];
    for (u, p) in users.iter().zip(&probs) {
        for j in 0..dim {
            expected[j] += p * u[j];
        }
    }
    let word_grad: Vec<f64> = (0..dim).map(|j| scale * (users[owner][j] - expected[j])).collect();
    for (v, u) in users.iter_mut().enumerate() {
        let coef = scale * (if v == owner { 1.0 } else { 0.0 } - probs[v]);
        for j in 0..dim {
            u[j] += coef * word[j];
        }
    }
    for j in 0..dim {
        word[j] += word_grad[j];
    }
}

/// Train user vectors from per-user word multisets. Users with empty
/// histories are left out and read as the zero vector.
pub fn train_user_vectors(histories: &BTreeMap<String, Vec<String>>, config: &UserTrainConfig) -> Result<UserTraining, FeatureError> {
    if config.dim == 0 {
        return Err(FeatureError::Config("user vector dimension must be positive".into()));
    }
    let users: Vec<String> = histories.iter().filter(|(_, h)| !h.is_empty()).map(|(u, _)| u.clone()).collect();
    if users.is_empty() {
        return Err(FeatureError::Config("no user has a non-empty history".into()));
    }
    let mut vocab: BTreeMap<&str, usize> = BTreeMap::new();
    for u in &users {
        for w in &histories[u] {
            let next = vocab.len();
            vocab.entry(w).or_insert(next);
        }
    }
    let problem = Problem {
        histories: users
            .iter()
            .map(|u| {
                let mut m: BTreeMap<usize, f64> = BTreeMap::new();
                for w in &histories[u] {
                    *m.entry(vocab[w.as_str()]).or_default() += 1.0;
                }
                (m.into_iter().collect(), histories[u].len() as f64)
            })
            .collect(),
        samples: users.iter().map(|u| histories[u].iter().map(|w| vocab[w.as_str()]).collect()).collect(),
    };

    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // user (output) side starts at zero as in word2vec; word side random
    let mut user_vecs = vec![vec![0.0f64; dim]; users.len()];
    let mut word_vecs: Vec<Vec<f64>> = (0..vocab.len()).map(|_| (0..dim).map(|_| (rng.gen::<f64>() - 0.5) / (dim as f64).sqrt()).collect()).collect();

    let n_users = users.len() as f64;
    let mut objective = Vec::with_capacity(config.epochs);
    let mut per_user: Vec<Vec<f64>> = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..users.len()).collect();
    for epoch in 0..config.epochs {
        match config.mode {
            UserTrainMode::Stochastic => {
                // linear decay as in word2vec
                let lr = config.learning_rate * (1.0 - epoch as f64 / config.epochs as f64).max(1e-4);
                order.shuffle(&mut rng);
                for &u in &order {
                    let hist = &problem.samples[u];
                    for _ in 0..hist.len() {
                        let w = hist[rng.gen_range(0..hist.len())];
                        step(&mut user_vecs, &mut word_vecs[w], u, lr);
                    }
                }
            }
            UserTrainMode::FullBatch => {
                // exact gradient of the objective at the current point
                let mut g_users = vec![vec![0.0; dim]; users.len()];
                let mut g_words = vec![vec![0.0; dim]; word_vecs.len()];
                for (u, (hist, n)) in problem.histories.iter().enumerate() {
                    for &(w, m) in hist {
                        let a = m / (n * n_users);
                        let probs = softmax_scores(&user_vecs, &word_vecs[w]);
                        for (v, uv) in user_vecs.iter().enumerate() {
                            let coef = a * (if v == u { 1.0 } else { 0.0 } - probs[v]);
                            for j in 0..dim {
                                g_users[v][j] += coef * word_vecs[w][j];
                                g_words[w][j] += coef * uv[j];
                            }
                        }
                    }
                }
                for (p, g) in user_vecs.iter_mut().zip(&g_users).chain(word_vecs.iter_mut().zip(&g_words)) {
                    for j in 0..dim {
                        p[j] += config.learning_rate * g[j];
                    }
                }
            }
        }
        let (obj, per) = problem.objective(&user_vecs, &word_vecs);
        if !obj.is_finite() {
            return Err(FeatureError::Config(format!("user-vector training diverged at epoch {}", objective.len())));
        }
        objective.push(obj);
        per_user.push(per);
    }

    let table = UserVectorTable::from_map(dim, users.iter().zip(&user_vecs).map(|(u, v)| (u.clone(), v.iter().map(|x| *x as f32).collect())).collect())?;
    let word_vectors = vocab.iter().map(|(w, &i)| (w.to_string(), word_vecs[i].clone())).collect();
    Ok(UserTraining { table, objective, per_user, word_vectors, user_vectors: user_vecs, users })
}
