use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    /// No staggered-rollout distribution of the requested shape reaches the
    /// target treatment fraction.
    #[error("infeasible rollout distribution: target p = {target}, feasible p range for this shape is [{low}, {high}]")]
    Infeasible { target: f64, low: f64, high: f64 },

    #[error("estimator undefined: {0}")]
    UndefinedEstimator(String),

    #[error("analytic reference unavailable: {0}; use the Monte Carlo reference instead")]
    AnalyticInvalid(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
