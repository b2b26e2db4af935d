use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },
    #[error("token id {token} out of range for vocabulary of size {size}")]
    InvalidToken { token: usize, size: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("vocabulary mismatch: checkpoint expects {expected}, data uses {actual}")]
    VocabMismatch { expected: String, actual: String },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(
    context: impl Into<String>,
    expected: impl ToString,
    actual: impl ToString,
) -> Error {
    Error::Shape {
        context: context.into(),
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
