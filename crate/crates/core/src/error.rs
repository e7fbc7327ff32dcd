use thiserror::Error;

/// Errors produced by the estimators, oracles and simulation harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("infeasible lower bound: c = {c} must be below {limit}")]
    InfeasibleBound { c: f64, limit: f64 },

    #[error("infeasible model: {0}")]
    InfeasibleModel(String),

    #[error("unsupported sample: {0}")]
    UnsupportedSample(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
