use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds context length {context}")]
    ContextOverflow { len: usize, context: usize },
    #[error("{field} has width {got}, model width is {expected}")]
    WidthMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("shape encoder expects {expected} points, got {got}")]
    PointCountMismatch { expected: usize, got: usize },
    #[error("main prefix is not a single GROUP block: {0}")]
    BadPrefix(String),
    #[error("token {token} outside vocabulary of {size}")]
    TokenOutOfRange { token: u32, size: usize },
    #[error("non-finite loss at step {step}: {detail}")]
    NaNLoss { step: usize, detail: String },
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty token sequence")]
    EmptyTokens,
    #[error("training sequence needs at least two tokens")]
    ShortSequence,
    #[error("max length {0} cannot hold BOS, one group, one joint and EOS")]
    MaxLenTooSmall(usize),
    #[error("preparing example: {0}")]
    Data(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
