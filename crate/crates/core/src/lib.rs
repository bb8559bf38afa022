//! ETH random-matrix ensembles, closed and dephased dynamics, and the
//! memory-kernel transforms that connect them.

pub mod benchmark;
pub mod closed_dynamics;
pub mod kernel;
pub mod error;
pub mod io;
pub mod linalg;
pub mod open_dynamics;
pub mod harness;
pub mod signal;
pub mod spectral_model;

pub use closed_dynamics::{autocorrelation, check_condition2, expectation_closed, CollapseReport, DiagonalState};
pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
pub use open_dynamics::{oracle_decohered, DensityMatrix, Hygiene, LindbladConfig, OracleRun, Stepper};
pub use signal::{Signal, TimeGrid};
pub use spectral_model::{
    Ensemble, EthEnsembleConfig, EthObservable, ReferenceFunction, ReferenceKind, SpectralFilter, Spectrum,
};
pub use kernel::{
    damp_kernel, extract_kernel, mori_initial_value, predict_integral, predict_scheme, solve_volterra,
    zeno_approximation, KernelModel, LaplacePoint,
};
