//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated (shape mismatch, empty
    /// input, out-of-range value, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An input is structurally valid but numerically degenerate for the
    /// requested operation (e.g. a zero-norm vector fed to a cosine).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A computation produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A file could not be parsed; `row` is 1-based where applicable.
    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },

    /// A serialized artifact (checkpoint, record file) is malformed.
    #[error("format error: {0}")]
    BadFile(String),

    /// An operation was called before its required state was prepared.
    #[error("state error: {0}")]
    State(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
