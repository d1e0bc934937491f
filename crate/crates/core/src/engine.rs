//! One suggest interface over the trie and the language model, including the
//! seen/unseen router.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::corpus::normalize_prefix;
use crate::decoder::{beam_search, diverse_beam_search, prime, DecoderConfig, DecoderError};
use crate::features::VectorTable;
use crate::lm::LmModel;
use crate::mpc::CountedTrie;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("cannot load {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    Request(String),
    #[error("decoding failed: {0}")]
    Decode(#[from] DecoderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Mpc,
    Neural,
    NeuralDiverse,
    Routed,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Mpc, Strategy::Neural, Strategy::NeuralDiverse, Strategy::Routed];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Mpc => "mpc",
            Strategy::Neural => "neural",
            Strategy::NeuralDiverse => "neural_diverse",
            Strategy::Routed => "routed",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| format!("unknown strategy {s:?} (expected mpc, neural, neural_diverse or routed)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuggestRequest {
    pub prefix: String,
    pub user_id: Option<String>,
    pub timestamp: Option<NaiveDateTime>,
    pub k: usize,
    pub strategy: Strategy,
}

impl SuggestRequest {
    pub fn new(prefix: impl Into<String>, k: usize, strategy: Strategy) -> Self {
        Self { prefix: prefix.into(), user_id: None, timestamp: None, k, strategy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuggestResponse {
    /// The normalized prefix.
    pub prefix: String,
    /// The branch that produced the suggestions.
    pub strategy: Strategy,
    pub latency_ms: f64,
    pub suggestions: Vec<Suggestion>,
}

/// Artifact locations; every one is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactPaths {
    pub trie: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub words: Option<PathBuf>,
    pub users: Option<PathBuf>,
}

pub struct Engine {
    trie: Option<CountedTrie>,
    model: Option<LmModel>,
    words: Option<VectorTable>,
    users: Option<VectorTable>,
    decoder: DecoderConfig,
}

fn artifact_error(path: &Path, e: impl fmt::Display) -> EngineError {
    EngineError::Artifact { path: path.to_path_buf(), reason: e.to_string() }
}

/// Load whatever artifacts are given. Tables without a model are accepted
/// and ignored.
pub fn build_engine(paths: &ArtifactPaths, decoder: DecoderConfig) -> Result<Engine, EngineError> {
    let trie = paths.trie.as_deref().map(|p| CountedTrie::load(p).map_err(|e| artifact_error(p, e))).transpose()?;
    let model = paths.model.as_deref().map(|p| LmModel::load(p).map_err(|e| artifact_error(p, e))).transpose()?;
    let words = paths.words.as_deref().map(|p| VectorTable::load(p).map_err(|e| artifact_error(p, e))).transpose()?;
    let users = paths.users.as_deref().map(|p| VectorTable::load(p).map_err(|e| artifact_error(p, e))).transpose()?;
    if let (Some(m), Some(t), Some(p)) = (&model, &words, &paths.words) {
        if m.spec().word_dim > 0 && t.dim() != m.spec().word_dim {
            return Err(artifact_error(p, format!("dimension {} does not match the model's word slot ({})", t.dim(), m.spec().word_dim)));
        }
    }
    if let (Some(m), Some(t), Some(p)) = (&model, &users, &paths.users) {
        if m.spec().user_dim > 0 && t.dim() != m.spec().user_dim {
            return Err(artifact_error(p, format!("dimension {} does not match the model's user slot ({})", t.dim(), m.spec().user_dim)));
        }
    }
    Engine::new(trie, model, words, users, decoder)
}

impl Engine {
    pub fn new(
        trie: Option<CountedTrie>,
        model: Option<LmModel>,
        words: Option<VectorTable>,
        users: Option<VectorTable>,
        decoder: DecoderConfig,
    ) -> Result<Self, EngineError> {
        if trie.is_none() && model.is_none() {
            return Err(EngineError::Config("an engine needs a trie, a model, or both".into()));
        }
        decoder.validate()?;
        Ok(Self { trie, model, words, users, decoder })
    }

    pub fn trie(&self) -> Option<&CountedTrie> {
        self.trie.as_ref()
    }

    pub fn model(&self) -> Option<&LmModel> {
        self.model.as_ref()
    }

    pub fn decoder(&self) -> &DecoderConfig {
        &self.decoder
    }

    /// A copy of this engine's artifacts with another decoder configuration.
    pub fn with_decoder(&self, decoder: DecoderConfig) -> Result<Self, EngineError> {
        decoder.validate()?;
        Ok(Self { trie: self.trie.clone(), model: self.model.clone(), words: self.words.clone(), users: self.users.clone(), decoder })
    }

    /// Whether every request with `strategy` can be answered.
    pub fn supports(&self, strategy: Strategy) -> bool {
        match strategy {
            Strategy::Mpc => self.trie.is_some(),
            Strategy::Neural | Strategy::NeuralDiverse => self.model.is_some(),
            Strategy::Routed => self.trie.is_some() && self.model.is_some(),
        }
    }

    pub fn is_seen(&self, prefix: &str) -> bool {
        self.trie.as_ref().is_some_and(|t| t.is_seen(&normalize_prefix(prefix)))
    }

    pub fn suggest(&self, request: &SuggestRequest) -> Result<SuggestResponse, EngineError> {
        let start = Instant::now();
        if request.k == 0 {
            return Err(EngineError::Request("k must be at least 1".into()));
        }
        let prefix = normalize_prefix(&request.prefix);
        if prefix.is_empty() {
            return Err(EngineError::Request("prefix is empty".into()));
        }
        let branch = match request.strategy {
            Strategy::Routed => {
                let trie = self.trie.as_ref().ok_or_else(|| missing("routed", "trie"))?;
                if trie.is_seen(&prefix) {
                    Strategy::Mpc
                } else if self.model.is_some() {
                    Strategy::Neural
                } else {
                    return Err(missing("routed on an unseen prefix", "model"));
                }
            }
            s => s,
        };
        let suggestions = match branch {
            Strategy::Mpc => {
                let trie = self.trie.as_ref().ok_or_else(|| missing("mpc", "trie"))?;
                trie.complete(&prefix, request.k).into_iter().map(|(text, count)| Suggestion { text, score: count as f64 }).collect()
            }
            _ => self.neural(&prefix, request, branch == Strategy::NeuralDiverse)?,
        };
        Ok(SuggestResponse { prefix, strategy: branch, latency_ms: start.elapsed().as_secs_f64() * 1e3, suggestions })
    }

    fn neural(&self, prefix: &str, request: &SuggestRequest, diverse: bool) -> Result<Vec<Suggestion>, EngineError> {
        let model = self.model.as_ref().ok_or_else(|| missing(request.strategy.as_str(), "model"))?;
        let user = match (&self.users, &request.user_id) {
            (Some(t), Some(u)) if model.spec().user_dim > 0 => Some(t.lookup(u)),
            _ => None,
        };
        let primed = prime(model, prefix, user, request.timestamp.as_ref(), self.words.as_ref())?;
        let config = DecoderConfig { k: request.k, beam_width: self.decoder.beam_width.max(request.k), ..self.decoder.clone() };
        let out = if diverse { diverse_beam_search(&primed, &config)? } else { beam_search(&primed, &config)? };
        Ok(out.into_iter().map(|c| Suggestion { text: c.text, score: c.score }).collect())
    }
}

fn missing(strategy: &str, artifact: &str) -> EngineError {
    EngineError::Config(format!("strategy {strategy} needs a {artifact}, none was loaded"))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::lm::{Activation, ModelSpec, Vocabulary};

    fn trie() -> CountedTrie {
        let mut counts = BTreeMap::new();
        counts.insert("new york".to_string(), 5);
        counts.insert("new york times".to_string(), 3);
        counts.insert("news".to_string(), 2);
        CountedTrie::build(&counts)
    }

    fn model() -> LmModel {
        let spec = ModelSpec { hidden: 8, layers: 2, word_dim: 0, user_dim: 2, time_dim: 4, activation: Activation::Relu };
        LmModel::new(spec, Vocabulary::from_chars("abcdefghijklmnopqrstuvwxyz ".chars()), 1).unwrap()
    }

    fn small() -> DecoderConfig {
        DecoderConfig { beam_width: 4, k: 3, max_len: 8, diversity: 1.0 }
    }

    fn users() -> VectorTable {
        let mut m = BTreeMap::new();
        m.insert("u1".to_string(), vec![0.5f32, -1.0]);
        VectorTable::from_map(2, m).unwrap()
    }

    fn strip(mut r: SuggestResponse) -> SuggestResponse {
        r.latency_ms = 0.0;
        r
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{s}\""));
        }
        assert!("popular".parse::<Strategy>().is_err());
    }

    #[test]
    fn routing_follows_trie_membership() {
        let e = Engine::new(Some(trie()), Some(model()), None, None, small()).unwrap();
        let seen = e.suggest(&SuggestRequest::new("New  y", 3, Strategy::Routed)).unwrap();
        let mpc = e.suggest(&SuggestRequest::new("new y", 3, Strategy::Mpc)).unwrap();
        assert_eq!(seen.strategy, Strategy::Mpc);
        assert_eq!(strip(seen), strip(mpc.clone()));
        assert_eq!(mpc.suggestions.iter().map(|s| s.text.as_str()).collect::<Vec<_>>(), ["new york", "new york times"]);

        let unseen = e.suggest(&SuggestRequest::new("zebra c", 3, Strategy::Routed)).unwrap();
        let neural = e.suggest(&SuggestRequest::new("zebra c", 3, Strategy::Neural)).unwrap();
        assert_eq!(strip(unseen), strip(neural.clone()));
        assert_eq!(neural.suggestions.len(), 3);
        assert!(neural.suggestions.iter().all(|s| s.text.starts_with("zebra c")));
    }

    #[test]
    fn missing_user_equals_zero_vector() {
        let mut m = BTreeMap::new();
        m.insert("zero".to_string(), vec![0.0f32, 0.0]);
        let zero_users = VectorTable::from_map(2, m).unwrap();
        let e = Engine::new(None, Some(model()), None, Some(zero_users), small()).unwrap();
        let mut with = SuggestRequest::new("ab", 3, Strategy::NeuralDiverse);
        with.user_id = Some("zero".into());
        let without = SuggestRequest::new("ab", 3, Strategy::NeuralDiverse);
        assert_eq!(strip(e.suggest(&with).unwrap()), strip(e.suggest(&without).unwrap()));
        // unknown users read as zero too
        with.user_id = Some("nobody".into());
        assert_eq!(strip(e.suggest(&with).unwrap()), strip(e.suggest(&without).unwrap()));

        let e = Engine::new(None, Some(model()), None, Some(users()), small()).unwrap();
        with.user_id = Some("u1".into());
        assert_ne!(strip(e.suggest(&with).unwrap()), strip(e.suggest(&without).unwrap()));
    }

    #[test]
    fn capability_gating() {
        assert!(matches!(Engine::new(None, None, None, None, small()), Err(EngineError::Config(_))));
        let t = Engine::new(Some(trie()), None, None, None, small()).unwrap();
        assert!(t.suggest(&SuggestRequest::new("new", 2, Strategy::Mpc)).is_ok());
        assert_eq!(t.suggest(&SuggestRequest::new("new", 2, Strategy::Routed)).unwrap().strategy, Strategy::Mpc);
        for s in [Strategy::Neural, Strategy::NeuralDiverse, Strategy::Routed] {
            assert!(matches!(t.suggest(&SuggestRequest::new("zzz", 2, s)), Err(EngineError::Config(_))), "{s}");
        }
        let m = Engine::new(None, Some(model()), None, None, small()).unwrap();
        assert!(matches!(m.suggest(&SuggestRequest::new("new", 2, Strategy::Mpc)), Err(EngineError::Config(_))));
        assert!(m.suggest(&SuggestRequest::new("new", 2, Strategy::Neural)).is_ok());
        let both = Engine::new(Some(trie()), Some(model()), None, None, small()).unwrap();
        assert!(Strategy::ALL.iter().all(|&s| both.supports(s) && both.suggest(&SuggestRequest::new("new", 2, s)).is_ok()));
    }

    #[test]
    fn invalid_requests() {
        let e = Engine::new(Some(trie()), None, None, None, small()).unwrap();
        assert!(matches!(e.suggest(&SuggestRequest::new("   ", 2, Strategy::Mpc)), Err(EngineError::Request(_))));
        assert!(matches!(e.suggest(&SuggestRequest::new("new", 0, Strategy::Mpc)), Err(EngineError::Request(_))));
    }

    #[test]
    fn large_k_widens_beam_and_scores_descend() {
        let e = Engine::new(None, Some(model()), None, None, small()).unwrap();
        let r = e.suggest(&SuggestRequest::new("q", 7, Strategy::Neural)).unwrap();
        assert_eq!(r.suggestions.len(), 7);
        assert!(r.suggestions.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn build_names_the_bad_file() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("trie.bin");
        std::fs::write(&bad, b"garbage").unwrap();
        let paths = ArtifactPaths { trie: Some(bad.clone()), ..Default::default() };
        match build_engine(&paths, small()) {
            Err(EngineError::Artifact { path, .. }) => assert_eq!(path, bad),
            other => panic!("unexpected {:?}", other.err()),
        }
        let good = dir.path().join("good.bin");
        trie().save(&good).unwrap();
        let users_path = dir.path().join("users.vec");
        users().save(&users_path).unwrap();
        let paths = ArtifactPaths { trie: Some(good), users: Some(users_path), ..Default::default() };
        assert!(build_engine(&paths, small()).unwrap().supports(Strategy::Mpc));
    }
}
