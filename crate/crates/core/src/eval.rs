//! Mean reciprocal rank with a seen/unseen breakdown and per-prefix latency.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{normalize, PrefixSample};
use crate::engine::{Engine, EngineError, Strategy, SuggestRequest};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("empty test set")]
    Empty,
    #[error("invalid evaluation setting: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// 1/r for the first suggestion equal to `target` after normalization, 0 if
/// absent.
pub fn reciprocal_rank<S: AsRef<str>>(suggestions: &[S], target: &str) -> f64 {
    let target = normalize(target);
    suggestions.iter().position(|s| normalize(s.as_ref()) == target).map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub strategy: Strategy,
    pub k: usize,
    /// Timed repetitions over the whole test set.
    pub passes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { strategy: Strategy::Routed, k: 10, passes: 10 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub strategy: Strategy,
    pub k: usize,
    pub mrr_all: f64,
    pub mrr_seen: f64,
    pub mrr_unseen: f64,
    pub n_seen: usize,
    pub n_unseen: usize,
    /// Seconds per prefix.
    pub latency_mean_s: f64,
    pub latency_p95_s: f64,
    pub passes: usize,
    /// Per-prefix reciprocal ranks in test-set order.
    #[serde(skip)]
    pub reciprocal_ranks: Vec<f64>,
    #[serde(skip)]
    pub seen: Vec<bool>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

fn request(sample: &PrefixSample, config: &EvalConfig) -> SuggestRequest {
    SuggestRequest {
        prefix: sample.prefix.clone(),
        user_id: Some(sample.user_id.clone()),
        timestamp: Some(sample.timestamp),
        k: config.k,
        strategy: config.strategy,
    }
}

/// Reciprocal ranks combined into an [`EvalReport`] without latency.
pub fn summarize(strategy: Strategy, k: usize, reciprocal_ranks: Vec<f64>, seen: Vec<bool>) -> EvalReport {
    let pick = |want: bool| reciprocal_ranks.iter().zip(&seen).filter(move |(_, &s)| s == want).map(|(r, _)| *r);
    let n_seen = seen.iter().filter(|&&s| s).count();
    EvalReport {
        strategy,
        k,
        mrr_all: mean(reciprocal_ranks.iter().copied()),
        mrr_seen: mean(pick(true)),
        mrr_unseen: mean(pick(false)),
        n_seen,
        n_unseen: seen.len() - n_seen,
        latency_mean_s: 0.0,
        latency_p95_s: 0.0,
        passes: 0,
        reciprocal_ranks,
        seen,
    }
}

/// MRR over all samples (normalized by the number of prefixes), split by
/// whether the engine's trie has the prefix. Ranks come from one parallel
/// pass; latency is then timed single-threaded over `passes` passes.
pub fn evaluate(engine: &Engine, samples: &[PrefixSample], config: &EvalConfig) -> Result<EvalReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    if config.k == 0 {
        return Err(EvalError::Config("k must be at least 1".into()));
    }
    let ranks: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let r = engine.suggest(&request(s, config))?;
            let texts: Vec<&str> = r.suggestions.iter().map(|x| x.text.as_str()).collect();
            Ok(reciprocal_rank(&texts, &s.target))
        })
        .collect::<Result<_, EngineError>>()?;
    let seen: Vec<bool> = samples.iter().map(|s| engine.is_seen(&s.prefix)).collect();
    let mut report = summarize(config.strategy, config.k, ranks, seen);

    let mut timings = Vec::with_capacity(samples.len() * config.passes);
    for _ in 0..config.passes {
        for s in samples {
            let req = request(s, config);
            let start = Instant::now();
            engine.suggest(&req)?;
            timings.push(start.elapsed().as_secs_f64());
        }
    }
    report.latency_mean_s = mean(timings.iter().copied());
    report.latency_p95_s = percentile(&timings, 95.0);
    report.passes = config.passes;
    Ok(report)
}

/// Two-sided paired t-test on per-prefix values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedTTest {
    pub mean_difference: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// `None` when there are fewer than two pairs or every difference is equal.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Option<PairedTTest> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return None;
    }
    let t = m / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).ok()?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Some(PairedTTest { mean_difference: m, t, df: n - 1.0, p_value: p })
}

/// Aligned text table with Seen / Unseen / All / Time columns.
pub fn format_table(reports: &[EvalReport]) -> String {
    let name_width = reports.iter().map(|r| r.strategy.as_str().len()).max().unwrap_or(0).max("Model".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<name_width$}  {:>7}  {:>7}  {:>7}  {:>10}", "Model", "Seen", "Unseen", "All", "Time (s)");
    for r in reports {
        let _ =
            writeln!(out, "{:<name_width$}  {:>7.3}  {:>7.3}  {:>7.3}  {:>10.4}", r.strategy.as_str(), r.mrr_seen, r.mrr_unseen, r.mrr_all, r.latency_mean_s);
    }
    let _ = write!(out, "prefixes: {} seen, {} unseen", reports.first().map_or(0, |r| r.n_seen), reports.first().map_or(0, |r| r.n_unseen));
    out.push('\n');
    out
}
