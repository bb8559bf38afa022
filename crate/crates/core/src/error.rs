use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("negative spectral density {value:e} at omega = {omega} (peak {peak:e})")]
    NegativeSpectralDensity { omega: f64, value: f64, peak: f64 },

    #[error("observable eigenvalues {index} and {} coincide within {gap:e}", index + 1)]
    DegenerateObservable { index: usize, gap: f64 },

    #[error("probe eigenvalue {a_j} is too small to normalise by (|a_j| < {threshold})")]
    ProbeTooSmall { a_j: f64, threshold: f64 },

    #[error("density matrix lost positivity at t = {time}: minimum eigenvalue {min_eigenvalue:e}")]
    PositivityLost { time: f64, min_eigenvalue: f64 },

    #[error("dimension {dimension} exceeds the dense propagation limit {limit}")]
    DimensionTooLarge { dimension: usize, limit: usize },

    #[error("signal starts at {a0:e}; a memory kernel needs |a(0)| >= 1e-6")]
    SignalStartsAtZero { a0: f64 },

    #[error("kernel deconvolution diverged at lag index {index} (value {value:e})")]
    ExtractionUnstable { index: usize, value: f64 },

    #[error("step too large for the implicit Volterra update: gamma*dt*g(0)/2 = {ratio}")]
    StepTooLarge { ratio: f64 },

    #[error("observable has zero norm (Tr A^2 = {norm:e})")]
    ZeroNormObservable { norm: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
