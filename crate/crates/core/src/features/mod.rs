//! Context features for the language model: cyclic time encoding, word
//! embeddings for the previous-word slot, and per-user vectors.

mod time;
mod users;
mod vectors;
mod word2vec;

pub use time::{encode_time, TimeFeatures, TIME_DIM};
pub use users::{train_user_vectors, UserTrainConfig, UserTrainMode, UserTraining, USER_DIM};
pub use vectors::{UserVectorTable, VectorTable, WordEmbeddingTable};
pub use word2vec::{train_word_embeddings, Word2VecConfig};

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}
