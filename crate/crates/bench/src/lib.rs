//! Shared fixtures for the criterion benches.

use memk_core::spectral_model::select_initial_levels;
use memk_core::{DiagonalState, Ensemble, EthEnsembleConfig, ReferenceFunction, ReferenceKind, Signal, TimeGrid};

/// `g(t)` of the standard reference sampled on `[0, horizon]`.
pub fn reference_signal(kind: ReferenceKind, dt: f64, horizon: f64) -> Signal {
    let grid = TimeGrid::covering(dt, horizon).expect("valid grid");
    ReferenceFunction::standard(kind).sample(&grid)
}

/// Narrow-band oscillation ensemble of dimension `n`, seed 1.
pub fn ensemble(n: usize) -> Ensemble {
    let cfg = EthEnsembleConfig::new(n, ReferenceFunction::standard(ReferenceKind::Oscillation), 1).with_half_width(1.0);
    Ensemble::generate(&cfg).expect("valid ensemble")
}

/// Pure state on the level closest to `a_j = 0.9`.
pub fn probe_state(ensemble: &Ensemble) -> DiagonalState {
    let j = select_initial_levels(&ensemble.observable, &[0.9]).expect("probe in range")[0];
    DiagonalState::pure(ensemble.observable.dimension(), j).expect("level in range")
}
