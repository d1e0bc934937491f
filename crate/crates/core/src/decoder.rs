//! Completion decoders over a trained language model: greedy, standard beam
//! search and balanced diverse beam search.
//!
//! Candidates are ordered by cumulative log-probability, ties broken by the
//! generated symbol sequence (vocabulary order, end marker last).

use std::cmp::Ordering;

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::VectorTable;
use crate::lm::{LmError, LmModel, RecurrentState, Step};

#[derive(Debug, thiserror::Error)]
pub enum DecoderError {
    #[error("prefix is empty")]
    EmptyPrefix,
    #[error("invalid decoder configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] LmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub beam_width: usize,
    /// Generated steps, the end marker included.
    pub max_len: usize,
    /// Diversity weight λ.
    pub diversity: f64,
    pub k: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { beam_width: 10, max_len: 40, diversity: 1.0, k: 10 }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<(), DecoderError> {
        if self.k == 0 || self.beam_width < self.k {
            return Err(DecoderError::Config(format!("need beam width ≥ k ≥ 1, got B={} k={}", self.beam_width, self.k)));
        }
        if !(self.diversity >= 0.0 && self.diversity.is_finite()) {
            return Err(DecoderError::Config(format!("diversity weight must be finite and ≥ 0, got {}", self.diversity)));
        }
        Ok(())
    }
}

/// A partial completion.
#[derive(Debug, Clone)]
pub struct BeamCandidate {
    /// Prefix followed by the generated characters, without the end marker.
    pub text: String,
    /// Generated symbols, the end marker included once finished.
    pub symbols: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
    prefix_len: usize,
    state: RecurrentState,
    next: Vec<f64>,
}

impl BeamCandidate {
    pub fn suffix(&self) -> &str {
        &self.text[self.prefix_len..]
    }

    /// Log-probabilities of the next symbol; empty once finished.
    pub fn next_log_probs(&self) -> &[f64] {
        &self.next
    }

    pub fn state(&self) -> &RecurrentState {
        &self.state
    }
}

/// A ranked decoder output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Completion {
    pub text: String,
    pub log_prob: f64,
    /// Ranking score: the log-probability, or the diversity-adjusted score.
    pub score: f64,
    pub finished: bool,
}

/// Model state after reading a prefix, plus what is needed to extend it.
pub struct Primed<'a> {
    model: &'a LmModel,
    words: Option<&'a VectorTable>,
    ctx_pre: Vec<f64>,
    root: BeamCandidate,
}

pub fn prime<'a>(
    model: &'a LmModel,
    prefix: &str,
    user_vec: Option<&[f32]>,
    timestamp: Option<&NaiveDateTime>,
    words: Option<&'a VectorTable>,
) -> Result<Primed<'a>, DecoderError> {
    if prefix.is_empty() {
        return Err(DecoderError::EmptyPrefix);
    }
    if let Some(t) = words {
        let want = model.spec().word_dim;
        if want > 0 && t.dim() != want {
            return Err(LmError::Shape(format!("word table has dimension {}, model expects {want}", t.dim())).into());
        }
    }
    let context = model.context_vector(user_vec, timestamp)?;
    let ctx_pre = model.context_preactivation(&context);
    let mut state = model.initial_state();
    let mut next = Vec::new();
    for (pos, c) in prefix.char_indices() {
        let step = Step { symbol: model.vocab().index(c), word: model.word_slot(&prefix[..pos], c, words) };
        next = model.step(&mut state, &step, &ctx_pre);
    }
    let root = BeamCandidate { text: prefix.to_string(), symbols: Vec::new(), log_prob: 0.0, finished: false, prefix_len: prefix.len(), state, next };
    Ok(Primed { model, words, ctx_pre, root })
}

impl Primed<'_> {
    pub fn candidate(&self) -> &BeamCandidate {
        &self.root
    }

    fn extend(&self, parent: &BeamCandidate, symbol: usize) -> BeamCandidate {
        let vocab = self.model.vocab();
        let log_prob = parent.log_prob + parent.next[symbol];
        let mut symbols = parent.symbols.clone();
        symbols.push(symbol);
        if symbol == vocab.eoq() {
            return BeamCandidate {
                text: parent.text.clone(),
                symbols,
                log_prob,
                finished: true,
                prefix_len: parent.prefix_len,
                state: RecurrentState { hidden: Vec::new() },
                next: Vec::new(),
            };
        }
        let c = vocab.char_at(symbol).expect("emittable symbol");
        let mut state = parent.state.clone();
        let step = Step { symbol, word: self.model.word_slot(&parent.text, c, self.words) };
        let next = self.model.step(&mut state, &step, &self.ctx_pre);
        let mut text = parent.text.clone();
        text.push(c);
        BeamCandidate { text, symbols, log_prob, finished: false, prefix_len: parent.prefix_len, state, next }
    }
}

impl From<BeamCandidate> for Completion {
    fn from(c: BeamCandidate) -> Self {
        Completion { text: c.text, log_prob: c.log_prob, score: c.log_prob, finished: c.finished }
    }
}

/// Most likely symbol at every step, lowest index on ties.
pub fn greedy_decode(primed: &Primed, max_len: usize) -> Completion {
    let mut cand = primed.root.clone();
    for _ in 0..max_len {
        let mut best = 0;
        for s in primed.model.vocab().emittable() {
            if cand.next[s] > cand.next[best] {
                best = s;
            }
        }
        cand = primed.extend(&cand, best);
        if cand.finished {
            break;
        }
    }
    cand.into()
}

pub fn normalized_levenshtein(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    strsim::levenshtein(a, b) as f64 / longest as f64
}

/// One pool entry: a carried finished candidate or a one-symbol extension.
struct Entry {
    parent: usize,
    symbol: Option<usize>,
    score: f64,
    symbols: Vec<usize>,
    suffix: String,
}

fn rank_order(a: &Entry, b: &Entry) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.symbols.cmp(&b.symbols))
}

/// Pick up to `width` entries from `pool` (sorted by [`rank_order`]). Rank 1
/// is taken first; each further pick maximizes score minus
/// λ·(1 − mean distance to the picks so far). Rank 1 then pays the mean of
/// the other penalties. Returns (pool index, adjusted score), best first.
fn select(pool: &[Entry], width: usize, lambda: f64) -> Vec<(usize, f64)> {
    let n = pool.len().min(width);
    if n == 0 {
        return Vec::new();
    }
    let mut taken = vec![false; pool.len()];
    let mut dist = vec![0.0; pool.len()];
    let mut penalty = vec![0.0; pool.len()];
    let mut chosen = vec![0];
    taken[0] = true;
    let add_distances = |dist: &mut [f64], taken: &[bool], pick: usize| {
        if lambda > 0.0 {
            for j in 0..pool.len() {
                if !taken[j] {
                    dist[j] += normalized_levenshtein(&pool[j].suffix, &pool[pick].suffix);
                }
            }
        }
    };
    add_distances(&mut dist, &taken, 0);
    while chosen.len() < n {
        let count = chosen.len() as f64;
        let mut best: Option<(usize, f64, f64)> = None;
        for j in (0..pool.len()).filter(|&j| !taken[j]) {
            let p = lambda * (1.0 - dist[j] / count);
            let adj = pool[j].score - p;
            if best.is_none_or(|(_, b, _)| adj > b) {
                best = Some((j, adj, p));
            }
        }
        let (j, _, p) = best.expect("pool larger than selection");
        penalty[j] = p;
        taken[j] = true;
        chosen.push(j);
        add_distances(&mut dist, &taken, j);
    }
    if n > 1 {
        penalty[0] = chosen[1..].iter().map(|&j| penalty[j]).sum::<f64>() / (n - 1) as f64;
    }
    let mut out: Vec<(usize, f64)> = chosen.into_iter().map(|j| (j, pool[j].score - penalty[j])).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

fn entries_of(beam: &[BeamCandidate]) -> Vec<Entry> {
    let mut pool: Vec<Entry> = beam
        .iter()
        .enumerate()
        .map(|(i, c)| Entry { parent: i, symbol: None, score: c.log_prob, symbols: c.symbols.clone(), suffix: c.suffix().to_string() })
        .collect();
    pool.sort_by(rank_order);
    pool
}

fn search(primed: &Primed, config: &DecoderConfig, lambda: f64) -> Result<Vec<Completion>, DecoderError> {
    config.validate()?;
    let vocab = primed.model.vocab();
    let mut beam = vec![primed.root.clone()];
    for _ in 0..config.max_len {
        if beam.iter().all(|c| c.finished) {
            break;
        }
        let mut pool = Vec::with_capacity(beam.len() * vocab.len());
        for (i, c) in beam.iter().enumerate() {
            if c.finished {
                pool.push(Entry { parent: i, symbol: None, score: c.log_prob, symbols: c.symbols.clone(), suffix: c.suffix().to_string() });
                continue;
            }
            for s in vocab.emittable() {
                let mut symbols = c.symbols.clone();
                symbols.push(s);
                let mut suffix = c.suffix().to_string();
                if let Some(ch) = vocab.char_at(s) {
                    suffix.push(ch);
                }
                pool.push(Entry { parent: i, symbol: Some(s), score: c.log_prob + c.next[s], symbols, suffix });
            }
        }
        pool.sort_by(rank_order);
        let chosen = select(&pool, config.beam_width, lambda);
        beam = chosen
            .par_iter()
            .map(|&(j, _)| match pool[j].symbol {
                Some(s) => primed.extend(&beam[pool[j].parent], s),
                None => beam[pool[j].parent].clone(),
            })
            .collect();
    }

    let (finished, unfinished): (Vec<_>, Vec<_>) = beam.into_iter().partition(|c| c.finished);
    let mut out = Vec::with_capacity(config.k);
    for group in [finished, unfinished] {
        if out.len() >= config.k {
            break;
        }
        let pool = entries_of(&group);
        for (j, adjusted) in select(&pool, config.k - out.len(), lambda) {
            let c = &group[pool[j].parent];
            // padded unfinished entries never outrank a finished one
            let score = out.last().map_or(adjusted, |p: &Completion| adjusted.min(p.score));
            out.push(Completion { text: c.text.clone(), log_prob: c.log_prob, score, finished: c.finished });
        }
    }
    Ok(out)
}

/// Breadth-B search over cumulative log-probability. Finished candidates
/// stay in the pool; up to k finished completions are returned, padded with
/// unfinished ones only when too few finish within `max_len`.
pub fn beam_search(primed: &Primed, config: &DecoderConfig) -> Result<Vec<Completion>, DecoderError> {
    search(primed, config, 0.0)
}

/// Beam search where each step's selection is penalized by suffix similarity
/// to the candidates already picked, with the top candidate rebalanced by the
/// mean penalty of the others. Uses `config.diversity` as λ; λ = 0 gives
/// exactly [`beam_search`].
pub fn diverse_beam_search(primed: &Primed, config: &DecoderConfig) -> Result<Vec<Completion>, DecoderError> {
    search(primed, config, config.diversity)
}

/// Mean normalized edit distance over all pairs of `texts`.
pub fn mean_pairwise_distance<S: AsRef<str>>(texts: &[S]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..texts.len() {
        for j in i + 1..texts.len() {
            total += normalized_levenshtein(texts[i].as_ref(), texts[j].as_ref());
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::lm::{Activation, Mode, ModelSpec, Vocabulary};

    fn dp_levenshtein(a: &[char], b: &[char]) -> usize {
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in d[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
            }
        }
        d[a.len()][b.len()]
    }

    fn model(chars: &str, hidden: usize, seed: u64) -> LmModel {
        let spec = ModelSpec { hidden, layers: 2, word_dim: 2, user_dim: 3, time_dim: 4, activation: Activation::Relu };
        LmModel::new(spec, Vocabulary::from_chars(chars.chars()), seed).unwrap()
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(normalized_levenshtein("abc", "abc"), 0.0);
        assert!((normalized_levenshtein("abc", "abd") - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(normalized_levenshtein("", "ab"), 1.0);
        assert_eq!(normalized_levenshtein("", ""), 0.0);
        assert_eq!(normalized_levenshtein("héllo", "hello"), 0.2);
    }

    proptest::proptest! {
        #[test]
        fn levenshtein_matches_dp(a in "[abc é]{0,8}", b in "[abc é]{0,8}") {
            let (ca, cb): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
            let longest = ca.len().max(cb.len());
            let expected = if longest == 0 { 0.0 } else { dp_levenshtein(&ca, &cb) as f64 / longest as f64 };
            let got = normalized_levenshtein(&a, &b);
            proptest::prop_assert_eq!(got, expected);
            proptest::prop_assert!((0.0..=1.0).contains(&got));
            proptest::prop_assert_eq!(got, normalized_levenshtein(&b, &a));
        }
    }

    #[test]
    fn config_validation() {
        assert!(DecoderConfig::default().validate().is_ok());
        assert!(DecoderConfig { k: 0, ..Default::default() }.validate().is_err());
        assert!(DecoderConfig { beam_width: 3, k: 4, ..Default::default() }.validate().is_err());
        assert!(DecoderConfig { diversity: -0.1, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn priming_matches_sequence_forward_including_word_slot() {
        let m = model("abc ", 8, 3);
        let mut w = BTreeMap::new();
        w.insert("ab".to_string(), vec![2.0f32, -3.0]);
        let words = VectorTable::from_map(2, w).unwrap();
        let user = [0.5f32, 0.1, -0.4];
        let prefix = "ab ";
        let primed = prime(&m, prefix, Some(&user), None, Some(&words)).unwrap();
        let root = primed.candidate();
        assert_eq!(root.suffix(), "");
        assert!(!root.finished);
        assert_eq!(root.log_prob, 0.0);

        let enc = m.encode(prefix, Some(&user), None, Some(&words)).unwrap();
        assert!(enc.steps[2].word.is_some());
        let probs = m.forward(&enc, Mode::Infer).unwrap();
        for (lp, p) in root.next_log_probs().iter().zip(&probs[2]) {
            assert!((lp.exp() - p).abs() < 1e-12);
        }
        let without = prime(&m, prefix, Some(&user), None, None).unwrap();
        assert_ne!(without.candidate().next_log_probs(), root.next_log_probs());
        let again = prime(&m, prefix, Some(&user), None, Some(&words)).unwrap();
        assert_eq!(again.candidate().state(), root.state());
    }

    #[test]
    fn unknown_characters_and_empty_prefix() {
        let m = model("ab", 4, 1);
        assert!(prime(&m, "xyz", None, None, None).is_ok());
        assert!(matches!(prime(&m, "", None, None, None), Err(DecoderError::EmptyPrefix)));
    }

    #[test]
    fn greedy_on_uniform_model_repeats_first_symbol() {
        let spec = ModelSpec { hidden: 4, layers: 2, word_dim: 0, user_dim: 0, time_dim: 0, activation: Activation::Relu };
        let m = LmModel::zeros(spec, Vocabulary::from_chars("xyz".chars())).unwrap();
        let primed = prime(&m, "z", None, None, None).unwrap();
        let out = greedy_decode(&primed, 5);
        assert_eq!(out.text, "zxxxxx");
        assert!(!out.finished);
        assert!((out.log_prob - 5.0 * (1.0f64 / 6.0).ln()).abs() < 1e-12);
        let bare = greedy_decode(&primed, 0);
        assert_eq!((bare.text.as_str(), bare.finished, bare.log_prob), ("z", false, 0.0));
    }

    #[test]
    fn width_one_beam_equals_greedy() {
        for seed in 0..6 {
            let m = model("abc d", 6, seed);
            for prefix in ["a", "db", "c a"] {
                let primed = prime(&m, prefix, None, None, None).unwrap();
                let g = greedy_decode(&primed, 12);
                let cfg = DecoderConfig { beam_width: 1, k: 1, max_len: 12, diversity: 0.0 };
                let b = beam_search(&primed, &cfg).unwrap();
                assert_eq!(b.len(), 1);
                assert_eq!(b[0].text, g.text);
                assert_eq!(b[0].log_prob, g.log_prob);
                assert_eq!(b[0].finished, g.finished);
            }
        }
    }

    /// Every finished completion within `max_len` steps, scored by summing
    /// per-step log-probabilities of the sequence forward pass.
    fn brute_force(m: &LmModel, prefix: &str, max_len: usize) -> Vec<(String, f64)> {
        let chars = m.vocab().regular_chars().to_vec();
        let mut suffixes = vec![String::new()];
        let mut frontier = vec![String::new()];
        for _ in 1..max_len {
            frontier = frontier.iter().flat_map(|s| chars.iter().map(move |c| format!("{s}{c}"))).collect();
            suffixes.extend(frontier.iter().cloned());
        }
        let p = prefix.chars().count();
        let mut out: Vec<(String, f64)> = suffixes
            .into_iter()
            .map(|s| {
                let text = format!("{prefix}{s}");
                let enc = m.encode(&text, None, None, None).unwrap();
                let probs = m.forward(&enc, Mode::Infer).unwrap();
                let lp: f64 = (p - 1..enc.steps.len() - 1).map(|t| probs[t][enc.steps[t + 1].symbol].ln()).sum();
                (text, lp)
            })
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }

    #[test]
    fn exhaustive_beam_matches_brute_force() {
        let spec = ModelSpec { hidden: 6, layers: 2, word_dim: 0, user_dim: 0, time_dim: 0, activation: Activation::Tanh };
        let m = LmModel::new(spec, Vocabulary::from_chars("ab".chars()), 4).unwrap();
        let primed = prime(&m, "b", None, None, None).unwrap();
        let cfg = DecoderConfig { beam_width: 64, k: 7, max_len: 3, diversity: 0.0 };
        let got = beam_search(&primed, &cfg).unwrap();
        let want = brute_force(&m, "b", 3);
        assert_eq!(want.len(), 7);
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.text, w.0);
            assert!((g.log_prob - w.1).abs() < 1e-9);
            assert!(g.finished);
        }
    }

    #[test]
    fn ranking_is_non_increasing_and_extends_prefix() {
        let m = model("abc d", 8, 9);
        let primed = prime(&m, "ab", None, None, None).unwrap();
        for lambda in [0.0, 0.7, 3.0] {
            let cfg = DecoderConfig { beam_width: 6, k: 6, max_len: 8, diversity: lambda };
            let out = diverse_beam_search(&primed, &cfg).unwrap();
            assert_eq!(out.len(), 6);
            for w in out.windows(2) {
                assert!(w[0].score >= w[1].score);
            }
            for c in &out {
                assert!(c.text.starts_with("ab"));
                assert!(c.log_prob <= 0.0 && c.score <= c.log_prob + 1e-12);
                assert!(!c.text.contains('\n'));
            }
        }
    }

    #[test]
    fn zero_diversity_is_standard_beam() {
        for seed in 0..4 {
            let m = model("abcd ", 8, seed);
            let primed = prime(&m, "a", None, None, None).unwrap();
            let cfg = DecoderConfig { beam_width: 5, k: 3, max_len: 10, diversity: 0.0 };
            assert_eq!(diverse_beam_search(&primed, &cfg).unwrap(), beam_search(&primed, &cfg).unwrap());
        }
    }

    fn entry(score: f64, suffix: &str, id: usize) -> Entry {
        Entry { parent: 0, symbol: None, score, symbols: vec![id], suffix: suffix.to_string() }
    }

    #[test]
    fn selection_penalizes_near_duplicates_and_rebalances_top() {
        // rank 2 duplicates rank 1; rank 3 is fully distinct
        let pool = vec![entry(-1.0, "abc", 0), entry(-1.1, "abc", 1), entry(-1.5, "xyz", 2)];
        let picked = select(&pool, 2, 1.0);
        // candidate 2 pays 0, candidate 1 would pay 1.0; rank 1 pays the mean of {0}
        assert_eq!(picked, vec![(0, -1.0), (2, -1.5)]);
        let plain = select(&pool, 2, 0.0);
        assert_eq!(plain, vec![(0, -1.0), (1, -1.1)]);

        // penalties: rank 2 gets λ(1 − 1/3), rank 3 gets λ(1 − (1+1)/2)=0
        let pool = vec![entry(-1.0, "abc", 0), entry(-1.2, "abd", 1), entry(-1.3, "xyz", 2)];
        let lambda = 0.9;
        let picked = select(&pool, 3, lambda);
        let p_xyz = 0.0;
        let p_abd = lambda * (1.0 - (1.0 / 3.0 + 1.0) / 2.0);
        let top = -1.0 - (p_xyz + p_abd) / 2.0;
        let expected = [(0, top), (2, -1.3 - p_xyz), (1, -1.2 - p_abd)];
        for (g, w) in picked.iter().zip(&expected) {
            assert_eq!(g.0, w.0);
            assert!((g.1 - w.1).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_distances_keep_top_choice() {
        let pool = vec![entry(-0.5, "a", 0), entry(-0.7, "b", 1), entry(-0.9, "c", 2), entry(-1.0, "d", 3)];
        for lambda in [0.1, 1.0, 10.0] {
            assert_eq!(select(&pool, 4, lambda)[0].0, 0);
            let order: Vec<usize> = select(&pool, 4, lambda).iter().map(|p| p.0).collect();
            assert_eq!(order, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn decoding_is_deterministic() {
        let m = model("abc d", 8, 2);
        let primed = prime(&m, "a", None, None, None).unwrap();
        let cfg = DecoderConfig { beam_width: 8, k: 5, max_len: 9, diversity: 1.5 };
        assert_eq!(diverse_beam_search(&primed, &cfg).unwrap(), diverse_beam_search(&primed, &cfg).unwrap());
    }

    #[test]
    fn pairwise_distance() {
        assert_eq!(mean_pairwise_distance(&["ab", "ab", "ab"]), 0.0);
        assert_eq!(mean_pairwise_distance(&["a"]), 0.0);
        assert!((mean_pairwise_distance(&["ab", "ac", "xy"]) - (0.5 + 1.0 + 1.0) / 3.0).abs() < 1e-15);
    }
}
