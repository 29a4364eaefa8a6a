use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed configuration text.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A named quantity violates a physical or structural bound.
    #[error("{key}: {message}")]
    Constraint { key: String, message: String },

    /// Argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("trajectory has no stored snapshots at sample {0}")]
    MissingSnapshot(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn constraint(key: impl Into<String>, message: impl fmt::Display) -> Self {
        Error::Constraint {
            key: key.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn domain(message: impl fmt::Display) -> Self {
        Error::Domain(message.to_string())
    }
}
