use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("solver failed: {0}")]
    SolverFailure(String),

    #[error("mixture solver exhausted {iterations} iterations with certified gap {gap:.3e}")]
    MixtureStalled {
        iterations: usize,
        gap: f64,
        /// Best iterate found before stalling: (weights, objective value).
        best: (Vec<f64>, f64),
    },

    #[error("horizon search did not converge within the cap of {cap} steps")]
    HorizonCap { cap: usize },

    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(
    context: &'static str,
    expected: impl ToString,
    actual: impl ToString,
) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
