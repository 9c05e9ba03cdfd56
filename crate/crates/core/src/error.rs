use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range input.
    #[error("invalid input: {0}")]
    Input(String),

    /// A matrix or law failed a structural check (stochasticity, symmetry, ...).
    #[error("validation failed: {0}")]
    Validation(String),

    /// An iterative procedure hit its iteration cap.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// A log or reciprocal was requested at a non-positive point.
    #[error("domain error: {0}")]
    Domain(String),

    /// Eigensolver trouble or another numerical instability.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Target rate cannot be resolved by the available sample count.
    #[error("quantile index {index} outside 1..={samples} for beta={beta}")]
    QuantileResolution {
        beta: f64,
        samples: usize,
        index: usize,
    },

    /// Inconsistent detector or schedule configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
