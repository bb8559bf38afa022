//! Isolated-system dynamics by exact spectral propagation.
//!
//! All quantities reduce to `sum_{m,n} B_mn cos((E_m - E_n) t)` for a
//! suitable real matrix `B` in the energy basis, so there is no time-step
//! error: each grid point is evaluated independently.

use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{gemm, phase_quadratic_form};
use crate::signal::{Signal, TimeGrid};
use crate::spectral_model::{EthObservable, Spectrum};

/// Probes with `|a_j|` below this cannot be normalised reliably.
pub const PROBE_THRESHOLD: f64 = 0.05;

/// Initial state diagonal in the observable eigenbasis.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalState {
    weights: Vec<f64>,
}

impl DiagonalState {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::input("empty state"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::input(format!("state weight {w} is not a non-negative number")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::input(format!("state weights sum to {total}, not 1")));
        }
        Ok(Self { weights })
    }

    /// `|j><j|`.
    pub fn pure(dimension: usize, level: usize) -> Result<Self> {
        if level >= dimension {
            return Err(Error::DimensionMismatch { expected: dimension, found: level });
        }
        let mut weights = vec![0.0; dimension];
        weights[level] = 1.0;
        Ok(Self { weights })
    }

    /// Equal-weight mixture of the given levels.
    pub fn uniform_over(dimension: usize, levels: &[usize]) -> Result<Self> {
        let mut weights = vec![0.0; dimension];
        for &j in levels {
            if j >= dimension {
                return Err(Error::DimensionMismatch { expected: dimension, found: j });
            }
            weights[j] += 1.0 / levels.len() as f64;
        }
        Self::new(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    /// `Tr{A rho_0} = sum_j c_j a_j`.
    pub fn expectation(&self, eigenvalues: &[f64]) -> f64 {
        self.weights.iter().zip(eigenvalues).map(|(c, a)| c * a).sum()
    }
}

fn check_dimensions(spectrum: &Spectrum, observable: &EthObservable) -> Result<()> {
    if spectrum.dimension() != observable.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spectrum.dimension(),
            found: observable.dimension(),
        });
    }
    Ok(())
}

/// `a(t) = sum_j c_j <j|A(t)|j>` for a state diagonal in the `A` eigenbasis.
pub fn expectation_closed(
    spectrum: &Spectrum,
    observable: &EthObservable,
    state: &DiagonalState,
    grid: &TimeGrid,
) -> Result<Signal> {
    check_dimensions(spectrum, observable)?;
    let n = observable.dimension();
    if state.dimension() != n {
        return Err(Error::DimensionMismatch { expected: n, found: state.dimension() });
    }
    // rho_0 in the energy basis: sum_j c_j v_j v_j^T over occupied levels
    let occupied: Vec<usize> = (0..n).filter(|&j| state.weights()[j] > 0.0).collect();
    let basis = observable.eigenbasis();
    let w = Mat::from_fn(n, occupied.len(), |m, k| {
        let j = occupied[k];
        basis[(m, j)] * state.weights()[j].sqrt()
    });
    let mut rho = Mat::<f64>::zeros(n, n);
    gemm(&mut rho, faer::Accum::Replace, w.as_ref(), w.transpose(), 1.0);
    // <A(t)> = sum_mn A_mn rho_nm e^{i(E_m - E_n)t}; A and rho are symmetric
    let a = observable.matrix();
    let b = Mat::from_fn(n, n, |i, j| a[(i, j)] * rho[(i, j)]);
    let mut values = phase_quadratic_form(b.as_ref(), spectrum.energies(), &grid.times())?;
    // a(0) is known exactly; keep it free of GEMM rounding
    values[0] = state.expectation(observable.eigenvalues());
    Signal::new(*grid, values)
}

/// Normalised autocorrelation `Tr{A(t)A} / Tr{A^2}`.
pub fn autocorrelation(spectrum: &Spectrum, observable: &EthObservable, grid: &TimeGrid) -> Result<Signal> {
    check_dimensions(spectrum, observable)?;
    let a = observable.matrix();
    let n = observable.dimension();
    let norm = observable.norm_sq();
    if norm <= 0.0 {
        return Err(Error::ZeroNormObservable { norm });
    }
    let b = Mat::from_fn(n, n, |i, j| a[(i, j)] * a[(i, j)] / norm);
    let mut values = phase_quadratic_form(b.as_ref(), spectrum.energies(), &grid.times())?;
    values[0] = 1.0;
    Signal::new(*grid, values)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeDeviation {
    pub a_j: f64,
    pub max_deviation: f64,
}

/// Result of comparing `<j|A(t)|j> / a_j` against a common `g(t)`.
#[derive(Clone, Debug, Serialize)]
pub struct CollapseReport {
    pub probes: Vec<ProbeDeviation>,
    pub worst: f64,
}

/// Per-probe `max_t |signal(t)/a_j - g(t)|` and the worst case.
pub fn check_condition2(signals: &[(Signal, f64)], g: &Signal) -> Result<CollapseReport> {
    check_condition2_until(signals, g, g.grid().horizon())
}

/// [`check_condition2`] restricted to `t <= until`.
pub fn check_condition2_until(signals: &[(Signal, f64)], g: &Signal, until: f64) -> Result<CollapseReport> {
    let mut probes = Vec::with_capacity(signals.len());
    for (signal, a_j) in signals {
        if a_j.abs() < PROBE_THRESHOLD {
            return Err(Error::ProbeTooSmall { a_j: *a_j, threshold: PROBE_THRESHOLD });
        }
        let scaled = signal.scaled(1.0 / a_j)?;
        probes.push(ProbeDeviation { a_j: *a_j, max_deviation: scaled.max_abs_diff_until(g, until)? });
    }
    let worst = probes.iter().fold(0.0f64, |m, p| m.max(p.max_deviation));
    Ok(CollapseReport { probes, worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::two_level;
    use crate::spectral_model::{Ensemble, EthEnsembleConfig, ReferenceFunction, ReferenceKind};

    #[test]
    fn two_level_expectation_is_cos_2t() {
        let sys = two_level();
        let grid = TimeGrid::new(0.01, 500).unwrap();
        let up = sys.level_of(1.0);
        let state = DiagonalState::pure(2, up).unwrap();
        let a = expectation_closed(&sys.spectrum, &sys.observable, &state, &grid).unwrap();
        let exact = Signal::from_fn(grid, |t| (2.0 * t).cos()).unwrap();
        assert!(a.max_abs_diff(&exact).unwrap() < 1e-14);
        let c = autocorrelation(&sys.spectrum, &sys.observable, &grid).unwrap();
        assert!(c.max_abs_diff(&exact).unwrap() < 1e-14);
    }

    #[test]
    fn two_level_collapse_is_exact() {
        let sys = two_level();
        let grid = TimeGrid::new(0.01, 300).unwrap();
        let g = Signal::from_fn(grid, |t| (2.0 * t).cos()).unwrap();
        let signals: Vec<(Signal, f64)> = (0..2)
            .map(|j| {
                let s = DiagonalState::pure(2, j).unwrap();
                let a = sys.observable.eigenvalues()[j];
                (expectation_closed(&sys.spectrum, &sys.observable, &s, &grid).unwrap(), a)
            })
            .collect();
        let report = check_condition2(&signals, &g).unwrap();
        assert!(report.worst < 1e-14, "{report:?}");
    }

    #[test]
    fn collapse_of_exact_multiple_is_zero_and_small_probe_rejected() {
        let grid = TimeGrid::new(0.1, 50).unwrap();
        let g = Signal::from_fn(grid, |t| (-t).exp()).unwrap();
        let report = check_condition2(&[(g.scaled(0.5).unwrap(), 0.5)], &g).unwrap();
        assert_eq!(report.worst, 0.0);
        assert!(matches!(
            check_condition2(&[(g.scaled(0.01).unwrap(), 0.01)], &g),
            Err(Error::ProbeTooSmall { .. })
        ));
    }

    #[test]
    fn diagonal_state_validation() {
        assert!(DiagonalState::new(vec![0.5, 0.6]).is_err());
        assert!(DiagonalState::new(vec![-0.1, 1.1]).is_err());
        assert!(DiagonalState::new(vec![0.25, 0.75]).is_ok());
        assert!(DiagonalState::pure(3, 3).is_err());
    }

    fn ensemble() -> Ensemble {
        let g = ReferenceFunction::standard(ReferenceKind::Oscillation);
        Ensemble::generate(&EthEnsembleConfig::new(150, g, 4).with_half_width(3.0)).unwrap()
    }

    #[test]
    fn closed_dynamics_properties() {
        let ens = ensemble();
        let grid = TimeGrid::new(0.2, 100).unwrap();
        let levels = [10, 75, 140];
        let state = DiagonalState::uniform_over(150, &levels).unwrap();
        let a = expectation_closed(&ens.spectrum, &ens.observable, &state, &grid).unwrap();
        assert_eq!(a.first(), state.expectation(ens.observable.eigenvalues()));
        assert!(a.max_abs() <= 1.0 + 1e-12);
        // linearity in the state weights
        let sum: Vec<f64> = levels
            .iter()
            .map(|&j| {
                let s = DiagonalState::pure(150, j).unwrap();
                expectation_closed(&ens.spectrum, &ens.observable, &s, &grid).unwrap()
            })
            .fold(vec![0.0; grid.len()], |mut acc, s| {
                acc.iter_mut().zip(s.values()).for_each(|(x, y)| *x += y / 3.0);
                acc
            });
        let sum = Signal::new(grid, sum).unwrap();
        assert!(a.max_abs_diff(&sum).unwrap() < 1e-12);
        // per-point evaluation: halving dt reproduces shared points
        let fine = expectation_closed(&ens.spectrum, &ens.observable, &state, &grid.refined()).unwrap();
        assert!(fine.decimated().max_abs_diff(&a).unwrap() < 1e-12);
    }

    #[test]
    fn autocorrelation_is_even_and_normalised() {
        let ens = ensemble();
        let times = [0.0, 0.7, 3.1, 12.0];
        let n = ens.observable.dimension();
        let a = ens.observable.matrix();
        let b = Mat::from_fn(n, n, |i, j| a[(i, j)] * a[(i, j)]);
        let plus = phase_quadratic_form(b.as_ref(), ens.spectrum.energies(), &times).unwrap();
        let neg: Vec<f64> = times.iter().map(|t| -t).collect();
        let minus = phase_quadratic_form(b.as_ref(), ens.spectrum.energies(), &neg).unwrap();
        for (p, m) in plus.iter().zip(&minus) {
            assert!((p - m).abs() < 1e-12 * p.abs().max(1.0));
        }
        let c = autocorrelation(&ens.spectrum, &ens.observable, &TimeGrid::new(0.5, 4).unwrap()).unwrap();
        assert_eq!(c.first(), 1.0);
    }
}
