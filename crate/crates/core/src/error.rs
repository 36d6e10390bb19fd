use thiserror::Error;

/// Errors produced by the rate engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("truncation too small: tail mass {tail:e} exceeds {limit:e} (n_max = {n_max})")]
    Truncation { n_max: usize, tail: f64, limit: f64 },

    #[error("quadrature capacity exceeded: {0}")]
    Quadrature(String),

    #[error("no convergence in {what} after {iterations} iterations")]
    Convergence { what: &'static str, iterations: usize },

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("numerical check failed: {0}")]
    Numerical(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
