//! Next-token distribution sources.

mod dist;
mod external;
mod ngram;

pub use dist::{entry_order, quantize, ConditionalDistribution, Entry, DENOMINATOR};
pub use external::{parse_reply, ExternalProvider, Reply, Request};
pub use ngram::{CachedNGram, NGramLm, BACKOFF};

use thiserror::Error;

use crate::TokenId;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("probability {0} is negative or not finite")]
    InvalidProbability(f64),
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("{ids} ids but {probs} probabilities")]
    LengthMismatch { ids: usize, probs: usize },
    #[error("token {0} listed twice")]
    DuplicateToken(TokenId),
    #[error("zero-mass entry in quantized distribution")]
    ZeroMass,
    #[error("masses sum to {0}, expected 2^31")]
    BadTotal(u64),
    #[error("n-gram order must be at least 2, got {0}")]
    BadOrder(usize),
    #[error("smoothing constant must be positive, got {0}")]
    BadSmoothing(f64),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("context must begin with _BOS")]
    MissingBos,
    #[error("token id {0} outside the vocabulary")]
    UnknownToken(TokenId),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("vocabulary hash mismatch: expected {expected}, found {found}")]
    VocabMismatch { expected: String, found: String },
    #[error("provider: {0}")]
    Provider(String),
}

/// Anything that maps a token context to a quantized next-token
/// distribution. Contexts start with `_BOS`.
pub trait LmProvider {
    fn next_distribution(&mut self, context: &[TokenId]) -> Result<ConditionalDistribution, LmError>;

    /// End-of-sentence id, when the provider has one.
    fn eos(&self) -> Option<TokenId>;
}
