//! Error types shared by all modules.

use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range (e.g. non-positive looks).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data violates a structural precondition (dimensions, emptiness, bounds).
    #[error("invalid input: {0}")]
    Input(String),

    /// A value is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A statistical estimator could not produce a result.
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// An iterative numerical method failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A caller violated an internal contract (e.g. non-symmetric matrix).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed file content.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Evaluation harness error (e.g. single-class ROC truth).
    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
