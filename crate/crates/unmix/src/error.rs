//! Crate-wide error type.

use thiserror::Error;

use crate::solver::TraceRecord;

/// Errors produced by unmixing operations.
#[derive(Debug, Error)]
pub enum UnmixError {
    /// Matrix dimensions do not conform.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data cannot support the requested operation.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Both input vectors of an angle computation must have nonzero norm.
    #[error("undefined angle: zero-norm vector")]
    UndefinedAngle,

    /// Non-finite values appeared in the factors during iteration.
    #[error("numerical divergence at iteration {iteration}: non-finite entries in factors")]
    Diverged {
        iteration: usize,
        /// Per-iteration records captured up to the failure.
        trace: Vec<TraceRecord>,
    },

    /// A text input failed to parse.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// File contents are inconsistent with their declared metadata.
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, UnmixError>;
