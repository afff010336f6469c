use thiserror::Error;

/// Errors raised by the simulation core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("field basis does not match the discretization: {0}")]
    BasisMismatch(String),

    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "Newton iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("singular pivot at row {0} in tridiagonal solve")]
    SingularPivot(usize),

    #[error("no sign change of the threshold polynomial on [{lo:e}, {hi:e}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("rate fit needs at least 3 strictly positive pairs: {0}")]
    InvalidRateData(String),

    #[error("noise increments cannot be coupled: {0}")]
    CouplingMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
