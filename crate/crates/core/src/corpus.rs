//! Query-log ingestion: parsing, normalization, background filtering,
//! prefix extraction and dataset splitting.
//!
//! Logs are tab-separated with (user id, query, timestamp) columns, the layout
//! of the public AOL logs. Extra columns are ignored.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::NaiveDateTime;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid split policy: {0}")]
    Policy(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One normalized log line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub user_id: String,
    pub query: String,
    pub timestamp: NaiveDateTime,
}

/// A (prefix, target) pair. The prefix always extends past the first word
/// of the target and is strictly shorter than it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixSample {
    pub prefix: String,
    pub target: String,
    pub user_id: String,
    pub timestamp: NaiveDateTime,
}

/// Column layout of a raw log.
#[derive(Debug, Clone)]
pub struct LogFormat {
    pub user_column: usize,
    pub query_column: usize,
    pub time_column: usize,
    pub time_format: String,
}

impl Default for LogFormat {
    fn default() -> Self {
        Self { user_column: 0, query_column: 1, time_column: 2, time_format: TIMESTAMP_FORMAT.to_string() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub lines: usize,
    pub records: usize,
    pub malformed: usize,
    pub header_skipped: bool,
}

/// Lowercase, collapse whitespace runs to one space, trim. Control
/// characters that are not whitespace are dropped.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().filter(|c| !c.is_control()).flat_map(char::to_lowercase));
    }
    out
}

/// Normalization for a typed prefix. Same as [`normalize`] except that a
/// trailing whitespace run is kept as a single space, since "new " and "new"
/// are different prefixes.
pub fn normalize_prefix(text: &str) -> String {
    let mut out = normalize(text);
    if !out.is_empty() && text.ends_with(char::is_whitespace) {
        out.push(' ');
    }
    out
}

/// Length of the first word, in characters.
pub fn first_word_len(query: &str) -> usize {
    query.chars().take_while(|c| *c != ' ').count()
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT).ok()
}

fn parse_line(line: &str, format: &LogFormat) -> Option<QueryRecord> {
    let cols: Vec<&str> = line.split('\t').collect();
    let user = cols.get(format.user_column)?.trim();
    let query = normalize(cols.get(format.query_column)?);
    let time = NaiveDateTime::parse_from_str(cols.get(format.time_column)?.trim(), &format.time_format).ok()?;
    if user.is_empty() || query.is_empty() {
        return None;
    }
    Some(QueryRecord { user_id: user.to_string(), query, timestamp: time })
}

/// Parse a raw log. Malformed lines are skipped and counted; a first line
/// that does not parse is taken as a header.
pub fn parse_log<R: BufRead>(reader: R, format: &LogFormat) -> Result<(Vec<QueryRecord>, ParseReport), CorpusError> {
    let mut records = Vec::new();
    let mut report = ParseReport::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        match parse_line(line, format) {
            Some(rec) => records.push(rec),
            None if idx == 0 && line.contains('\t') => report.header_skipped = true,
            None => report.malformed += 1,
        }
    }
    report.records = records.len();
    Ok((records, report))
}

/// Count query multiplicities and keep those seen at least `min_count` times
/// and no longer than `max_len` characters.
pub fn filter_background(records: &[QueryRecord], min_count: u64, max_len: usize) -> BTreeMap<String, u64> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for r in records {
        *counts.entry(r.query.clone()).or_default() += 1;
    }
    counts.retain(|q, c| *c >= min_count && q.chars().count() <= max_len);
    counts
}

/// Every character prefix of the query with length in
/// `first_word_len + 1 ..= len - 1`.
pub fn extract_prefixes(record: &QueryRecord) -> Vec<PrefixSample> {
    let chars: Vec<char> = record.query.chars().collect();
    let start = first_word_len(&record.query) + 1;
    let end = chars.len().saturating_sub(1);
    (start..=end)
        .map(|len| PrefixSample {
            prefix: chars[..len].iter().collect(),
            target: record.query.clone(),
            user_id: record.user_id.clone(),
            timestamp: record.timestamp,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SplitPolicy {
    /// Shuffle with `seed`, then cut by fractions (background, train,
    /// validation, test).
    Random { fractions: [f64; 4], seed: u64 },
    /// Sort by timestamp (stable), then cut by fractions.
    Chronological { fractions: [f64; 4] },
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub background: Vec<QueryRecord>,
    pub background_counts: BTreeMap<String, u64>,
    pub train: Vec<PrefixSample>,
    pub validation: Vec<PrefixSample>,
    pub test: Vec<PrefixSample>,
    /// Record counts of the four parts before prefix expansion.
    pub sizes: [usize; 4],
}

#[derive(Debug, Clone, Copy)]
pub struct BackgroundFilter {
    pub min_count: u64,
    pub max_len: usize,
}

impl Default for BackgroundFilter {
    fn default() -> Self {
        Self { min_count: 3, max_len: 100 }
    }
}

fn cut_points(n: usize, fractions: &[f64; 4]) -> Result<[usize; 4], CorpusError> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(CorpusError::Policy(format!("fractions must lie in [0,1]: {fractions:?}")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(CorpusError::Policy(format!("fractions sum to {total}, expected 1")));
    }
    let mut cuts = [0usize; 4];
    let mut acc = 0.0;
    for (i, f) in fractions.iter().enumerate().take(3) {
        acc += f;
        cuts[i] = ((acc * n as f64).round() as usize).min(n);
    }
    cuts[3] = n;
    Ok(cuts)
}

/// Split records into background / train / validation / test. Background
/// records are kept as-is (filtered counts alongside); the other parts are
/// expanded into prefix samples.
pub fn split_dataset(records: &[QueryRecord], policy: &SplitPolicy, filter: BackgroundFilter) -> Result<DatasetSplit, CorpusError> {
    let mut ordered: Vec<QueryRecord> = records.to_vec();
    let fractions = match policy {
        SplitPolicy::Random { fractions, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            ordered.shuffle(&mut rng);
            fractions
        }
        SplitPolicy::Chronological { fractions } => {
            ordered.sort_by_key(|r| r.timestamp);
            fractions
        }
    };
    let cuts = cut_points(ordered.len(), fractions)?;
    let bounds = [(0, cuts[0]), (cuts[0], cuts[1]), (cuts[1], cuts[2]), (cuts[2], cuts[3])];
    let expand = |(a, b): (usize, usize)| ordered[a..b].iter().flat_map(extract_prefixes).collect::<Vec<_>>();
    let background = ordered[..cuts[0]].to_vec();
    let background_counts = filter_background(&background, filter.min_count, filter.max_len);
    Ok(DatasetSplit {
        background_counts,
        train: expand(bounds[1]),
        validation: expand(bounds[2]),
        test: expand(bounds[3]),
        sizes: bounds.map(|(a, b)| b - a),
        background,
    })
}

pub fn write_records<W: Write>(mut w: W, records: &[QueryRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}\t{}\t{}", r.user_id, r.query, r.timestamp.format(TIMESTAMP_FORMAT))?;
    }
    Ok(())
}

/// Prefix samples as TSV: prefix, target, user_id, timestamp. The prefix may
/// end with a space, so fields are never trimmed on read.
pub fn write_samples<W: Write>(mut w: W, samples: &[PrefixSample]) -> std::io::Result<()> {
    for s in samples {
        writeln!(w, "{}\t{}\t{}\t{}", s.prefix, s.target, s.user_id, s.timestamp.format(TIMESTAMP_FORMAT))?;
    }
    Ok(())
}

pub fn read_samples<R: BufRead>(reader: R) -> Result<Vec<PrefixSample>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |reason: &str| CorpusError::Parse { line: i + 1, reason: reason.to_string() };
        if cols.len() < 4 {
            return Err(bad("expected 4 tab-separated columns"));
        }
        let timestamp = parse_timestamp(cols[3]).ok_or_else(|| bad("invalid timestamp"))?;
        out.push(PrefixSample { prefix: cols[0].to_string(), target: cols[1].to_string(), user_id: cols[2].to_string(), timestamp });
    }
    Ok(out)
}

pub fn write_counts<W: Write>(mut w: W, counts: &BTreeMap<String, u64>) -> std::io::Result<()> {
    for (q, c) in counts {
        writeln!(w, "{q}\t{c}")?;
    }
    Ok(())
}

pub fn read_counts<R: BufRead>(reader: R) -> Result<BTreeMap<String, u64>, CorpusError> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (q, c) = line.rsplit_once('\t').ok_or_else(|| CorpusError::Parse { line: i + 1, reason: "expected query<TAB>count".into() })?;
        let c: u64 = c.trim().parse().map_err(|_| CorpusError::Parse { line: i + 1, reason: format!("invalid count {c:?}") })?;
        *out.entry(q.to_string()).or_default() += c;
    }
    Ok(out)
}

/// Background words per user, each query contributing its words, most recent
/// `limit` queries only when given.
pub fn user_histories(records: &[QueryRecord], limit: Option<usize>) -> BTreeMap<String, Vec<String>> {
    let mut by_user: BTreeMap<&str, Vec<&QueryRecord>> = BTreeMap::new();
    for r in records {
        by_user.entry(&r.user_id).or_default().push(r);
    }
    by_user
        .into_iter()
        .map(|(u, mut recs)| {
            recs.sort_by_key(|r| std::cmp::Reverse(r.timestamp));
            let take = limit.unwrap_or(recs.len());
            let words = recs.iter().take(take).flat_map(|r| r.query.split(' ').map(str::to_string)).collect();
            (u.to_string(), words)
        })
        .filter(|(_, w): &(String, Vec<String>)| !w.is_empty())
        .collect()
}
