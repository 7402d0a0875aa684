use std::io;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or generator parameter is invalid.
    #[error("parameter error in `{field}`: {reason}")]
    Parameter { field: String, reason: String },

    /// Malformed input file or text record.
    #[error("format error at line {line}: {reason}")]
    Format { line: usize, reason: String },

    /// Input text is not valid UTF-8.
    #[error("invalid UTF-8 at byte offset {offset}")]
    Encoding { offset: usize },

    /// Too few usable points for a fit.
    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// A numerical routine failed (factorization, rooting, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn format(line: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            line,
            reason: reason.into(),
        }
    }
}
