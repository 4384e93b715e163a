use thiserror::Error;

use crate::mdp::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {index} out of range (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("invalid MDP: {0}")]
    InvalidMdp(ValidationReport),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("configuration error: {0}")]
    Config(String),

    /// Feature covariance is singular or too badly conditioned to invert.
    #[error(
        "feature covariance is not invertible (smallest eigenvalue {lambda_min:e}, condition number {condition:e})"
    )]
    SingularCovariance { lambda_min: f64, condition: f64 },

    /// The state-action distribution does not cover every pair.
    #[error("state-action distribution is not full-support (mu_min = {0})")]
    NotFullSupport(f64),

    #[error("value iteration stopped after {iterations} iterations with residual {residual:e}")]
    IterationLimit { iterations: usize, residual: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("exact enumeration needs {paths:e} outcome paths, above the limit of {limit:e}")]
    EnumerationTooLarge { paths: f64, limit: f64 },

    #[error("invalid state: {0}")]
    State(String),

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("non-finite parameters at step {step}")]
    Divergence { step: usize },

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
