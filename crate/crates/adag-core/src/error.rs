//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by corpus generation, model evaluation, training and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Two operands (or an operand and a contract) disagree on shape.
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: String,
        right: String,
    },

    /// A caller-supplied parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A tape node id does not exist on the tape.
    #[error("tape node {0} not found (tape has {1} nodes)")]
    NodeNotFound(usize, usize),

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A support matrix that must be acyclic contains a cycle.
    #[error("support contains a cycle: acyclicity value {0:.6e}")]
    CyclicSupport(f64),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A persisted file (matrix, manifest, checkpoint) is missing or corrupt.
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },
}

impl Error {
    pub(crate) fn dim(context: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub(crate) fn format(path: impl ToString, reason: impl ToString) -> Self {
        Error::Format {
            path: path.to_string(),
            reason: reason.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
