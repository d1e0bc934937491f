//! Query auto-completion: a popularity trie (MPC), a personalized and
//! time-aware character-level GRU language model, greedy / beam / balanced
//! diverse beam decoding, a seen/unseen router, MRR evaluation and an HTTP
//! suggest service.

pub mod cli;
pub mod corpus;
pub mod decoder;
pub mod engine;
pub mod eval;
pub mod features;
pub mod lm;
pub mod mpc;
pub mod service;
