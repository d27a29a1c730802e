//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A text input could not be parsed. Line numbers are 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An argument or input violated a precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A dyad value was requested at an index marked unobserved. Estimation
    /// code must sum over observed dyads only, so reading a masked value is
    /// always a bug in the caller.
    #[error("dyad (layer {k}, step {t}, {i}, {j}) is unobserved and has no value")]
    UnobservedDyad { k: usize, t: usize, i: usize, j: usize },

    /// A numerical operation degenerated (non-positive-definite matrix,
    /// invalid second moment, all restarts failing, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
