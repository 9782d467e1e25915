use thiserror::Error;

/// Errors raised by the precision-limit toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("dimension {dim} exceeds the configured cap {cap}")]
    CapacityError { dim: usize, cap: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("Kraus completeness violated (residual {residual:.3e})")]
    CompletenessViolation { residual: f64 },

    #[error("matrix is not unitary (residual {residual:.3e})")]
    NotUnitary { residual: f64 },

    #[error("eigen-angle spread {spread} exceeds pi")]
    AngleSpreadExceeded { spread: f64 },

    #[error("finite-difference step {dx:e} is outside the supported range")]
    DegenerateStep { dx: f64 },

    #[error("solver did not converge after {iterations} iterations (gap {gap:.3e})")]
    NotConverged { gap: f64, iterations: usize },

    #[error("channel spec: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
