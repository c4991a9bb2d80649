use thiserror::Error;

use crate::vocab::TokenId;

/// Errors raised by trace, ledger, and encoding operations.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("insertion offset {offset} out of range for trace of length {len}")]
    OffsetOutOfRange { offset: usize, len: usize },
    #[error("token {0} is forbidden and may not be inserted")]
    ForbiddenToken(TokenId),
    #[error("token {0} is not in the vocabulary")]
    UnknownToken(TokenId),
    #[error("window already holds the maximum of {0} active insertions")]
    WindowCapExceeded(usize),
    #[error("no such insertion record: {0}")]
    NoSuchRecord(usize),
    #[error("window length {got} does not match expected {expected}")]
    WindowLengthMismatch { got: usize, expected: usize },
    #[error("vocabulary must contain at least the null token and one API type")]
    EmptyVocabulary,
    #[error("unknown token name in vocabulary file: {0}")]
    UnknownTokenName(String),
    #[error("invalid corpus record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Errors raised while training or using a target classifier.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training set has no {0} samples")]
    EmptyClass(&'static str),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("window size must be at least 1")]
    BadWindowSize,
    #[error("model was trained for window size {expected}, got {got}")]
    WindowSizeMismatch { expected: usize, got: usize },
    #[error("static feature vector has dimension {got}, model expects {expected}")]
    StaticDimMismatch { expected: usize, got: usize },
    #[error("model file has vocabulary hash {file}, supplied vocabulary hashes to {supplied}")]
    VocabHashMismatch { file: String, supplied: String },
    #[error("unsupported model file version {0}")]
    BadVersion(u32),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Errors surfaced by an oracle, local or remote.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("score knowledge requested from a decision-only backend")]
    ScoreUnavailable,
    #[error("client is throttled by the service")]
    Throttled,
    #[error("network error talking to the classification service: {0}")]
    Network(String),
    #[error("protocol mismatch: {0}")]
    Protocol(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
