//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by model construction, synthesis, estimation, and the
/// scenario harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// The design inequalities admit no solution for a sensor subset.
    #[error("no observer exists for sensor subset {{{subset}}}: {detail}")]
    Infeasible { subset: String, detail: String },

    /// The SDP solver could not reach a conclusive status.
    #[error("solver failure: {0}")]
    Solver(String),

    /// A scenario assertion failed during a harness run.
    #[error("scenario check failed: {0}")]
    Check(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Shorthand for dimension errors.
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// Shorthand for invalid-argument errors.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
