use thiserror::Error;

/// Errors surfaced by the simulation and verification layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or sampler was handed parameters outside its domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A closed-form evaluation was requested outside the region where the
    /// formula is defined (poles, divergent integrals).
    #[error("domain error: {0}")]
    Domain(String),

    /// An estimator precondition failed (too few replicas, degenerate input).
    #[error("statistics error: {0}")]
    Statistics(String),

    /// Two ensembles that must share a noise realization do not.
    #[error("coupling error: {0}")]
    Coupling(String),

    /// A quadrature or other numerical routine failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An index or lag fell outside the sampled grid.
    #[error("range error: {0}")]
    Range(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
