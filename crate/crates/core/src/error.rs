use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the inference engine and its evaluation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("numerical divergence at iteration {iteration}, particle {particle} during {stage}")]
    Divergence {
        iteration: u64,
        particle: usize,
        stage: &'static str,
    },

    #[error("problem too large for the exact solver ({size} cells > {limit}); use the Sinkhorn evaluator")]
    TooLarge { size: usize, limit: usize },

    #[error("solver did not converge after {iterations} iterations (marginal violation {violation:e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
