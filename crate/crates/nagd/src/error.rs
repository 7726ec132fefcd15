use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NagdError {
    #[error("d_k={d_k} must be even and divisible by heads={heads}")]
    BadDims { d_k: usize, heads: usize },
    #[error("positional encoding needs an even dimension, got {0}")]
    OddDimension(usize),
    #[error("unknown token '{0}' (the vocabulary is closed)")]
    UnknownToken(String),
    #[error("empty token list")]
    EmptyTokens,
    #[error("number placeholder N{0} missing from the token list")]
    MissingPlaceholder(usize),
    #[error("goal has {0} children; at most 8 slots are available")]
    TooManyChildren(usize),
    #[error("leaf value {0} is neither a problem quantity nor a configured constant")]
    UnmappedLeaf(String),
    #[error("gold tree depth {depth} exceeds the decoder depth cap {cap}")]
    DepthExceeded { depth: usize, cap: usize },
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}
