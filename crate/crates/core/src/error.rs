use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {dim}: a truncated mode needs at least 2 Fock levels")]
    InvalidDimension { dim: usize },

    #[error("duplicate mode label `{0}`")]
    DuplicateMode(String),

    #[error("unknown mode label `{0}`")]
    UnknownMode(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("wrong mode layout: expected modes {expected:?}, got {actual:?}")]
    ModeLayout {
        expected: Vec<String>,
        actual: Vec<String>,
    },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("steady state is not unique: {0}")]
    NonUniqueSteadyState(String),

    #[error("steady-state solve did not converge: relative residual {residual:.3e}")]
    SteadyStateResidual { residual: f64 },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("step size underflow at t = {time:.6} µs (h = {step:.3e}); the problem is stiff, use the steady-state solver instead")]
    StepSizeUnderflow { time: f64, step: f64 },

    #[error("time grid must start at 0 and be strictly increasing")]
    InvalidTimeGrid,

    #[error("Fock index {n} out of range for dimension {dim}")]
    FockIndexOutOfRange { n: usize, dim: usize },

    #[error("phase-space maps do not share a grid")]
    GridMismatch,

    #[error("polarization undefined: P(0) + P(1) = 0")]
    UndefinedPolarization,

    #[error("infinite effective temperature (p = 0)")]
    InfiniteTemperature,

    #[error("zero effective temperature (|p| = 1)")]
    ZeroTemperature,

    #[error("degenerate rate matrix: {0}")]
    DegenerateRateMatrix(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
