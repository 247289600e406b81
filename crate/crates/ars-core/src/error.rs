//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by generators, fitters and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The normal equations are rank deficient and no ridge was requested.
    #[error("singular normal equations: {0}; retry with a positive ridge")]
    SingularMatrix(String),

    /// An iterated map or integrator produced a non-finite state.
    #[error("numeric overflow at step {step}: {context}")]
    NumericOverflow {
        /// Index of the first non-finite step.
        step: usize,
        /// What was being iterated.
        context: String,
    },

    /// Malformed CSV or JSON input.
    #[error("parse error at line {line}: {message}")]
    Parse {
        /// 1-based line number in the input.
        line: usize,
        /// Description of the offending content.
        message: String,
    },

    /// Underlying I/O failure (experiment harness outputs).
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn singular(msg: impl Into<String>) -> Self {
        Error::SingularMatrix(msg.into())
    }
}
