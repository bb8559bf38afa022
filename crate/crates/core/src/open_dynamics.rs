//! Brute-force propagation of the dephasing master equation
//!
//! ```text
//! d rho/dt = -i[H, rho] + gamma/2 sum_j (2 L_j rho L_j - L_j L_j rho - rho L_j L_j),  L_j = |j><j|
//! ```
//!
//! on full density matrices. Everything is expressed in the eigenbasis of
//! the observable, where the dissipator only damps off-diagonal entries.

use faer::{Accum, Mat};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::closed_dynamics::DiagonalState;
use crate::error::{Error, Result};
use crate::linalg::{gemm, rotate_diagonal, ComplexMatrix};
use crate::signal::{Signal, TimeGrid};
use crate::spectral_model::{EthObservable, Spectrum};

/// Largest dimension accepted by [`oracle_decohered`].
pub const ORACLE_DIMENSION_LIMIT: usize = 1024;
/// Minimum eigenvalue below which propagation is aborted.
pub const POSITIVITY_TOLERANCE: f64 = 1e-6;
/// Grid points between two eigenvalue checks.
pub const EIGEN_CHECK_INTERVAL: usize = 100;

/// Density matrix in the observable eigenbasis, stored as `re + i im`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    re: Mat<f64>,
    im: Mat<f64>,
}

impl DensityMatrix {
    pub const HERMITICITY_TOLERANCE: f64 = 1e-10;
    pub const TRACE_TOLERANCE: f64 = 1e-10;
    pub const EIGENVALUE_TOLERANCE: f64 = 1e-8;

    pub fn diagonal(state: &DiagonalState) -> Self {
        let n = state.dimension();
        let w = state.weights();
        Self {
            re: Mat::from_fn(n, n, |i, j| if i == j { w[i] } else { 0.0 }),
            im: Mat::zeros(n, n),
        }
    }

    /// Validates Hermiticity, unit trace and positivity.
    pub fn from_complex(m: &ComplexMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let rho = Self { re: m.re().to_owned(), im: m.im().to_owned() };
        let defect = rho.hermiticity_defect();
        if defect > Self::HERMITICITY_TOLERANCE {
            return Err(Error::input(format!("density matrix not Hermitian (defect {defect:e})")));
        }
        let drift = (rho.trace() - 1.0).norm();
        if drift > Self::TRACE_TOLERANCE {
            return Err(Error::input(format!("density matrix trace off by {drift:e}")));
        }
        let min = rho.min_eigenvalue()?;
        if min < -Self::EIGENVALUE_TOLERANCE {
            return Err(Error::input(format!("density matrix has eigenvalue {min:e}")));
        }
        Ok(rho)
    }

    pub fn dimension(&self) -> usize {
        self.re.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.re[(i, j)], self.im[(i, j)])
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dimension()).map(|j| self.get(j, j)).sum()
    }

    /// Diagonal entries `rho_jj`.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dimension()).map(|j| self.re[(j, j)]).collect()
    }

    /// `Tr{A rho}` for `A = diag(a)` in this basis.
    pub fn expectation_diagonal(&self, a: &[f64]) -> f64 {
        (0..self.dimension()).map(|j| a[j] * self.re[(j, j)]).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dimension();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..=j {
                let dr = self.re[(i, j)] - self.re[(j, i)];
                let di = self.im[(i, j)] + self.im[(j, i)];
                worst = worst.max(dr.hypot(di));
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let eig = self.to_complex().hermitian_eigenvalues()?;
        Ok(eig[0])
    }

    pub fn to_complex(&self) -> ComplexMatrix {
        ComplexMatrix::from_parts(self.re.clone(), self.im.clone()).expect("square")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepper {
    RungeKutta4,
    DiscreteMap,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LindbladConfig {
    pub gamma: f64,
    /// Output grid; the integrator subdivides each interval as needed.
    pub grid: TimeGrid,
    pub stepper: Stepper,
    /// Bound on `h (rho(H) + gamma)` for RK4 and on `gamma h` for the
    /// discrete map, `h` being the internal step.
    pub step_bound: f64,
}

impl LindbladConfig {
    pub const DEFAULT_STEP_BOUND: f64 = 0.1;

    pub fn new(gamma: f64, grid: TimeGrid, stepper: Stepper) -> Self {
        Self { gamma, grid, stepper, step_bound: Self::DEFAULT_STEP_BOUND }
    }

    pub fn with_step_bound(mut self, bound: f64) -> Self {
        self.step_bound = bound;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::config(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if !(self.step_bound > 0.0 && self.step_bound <= 0.1) {
            return Err(Error::config(format!("step bound must lie in (0, 0.1], got {}", self.step_bound)));
        }
        Ok(())
    }

    /// Internal steps per grid interval for a Hamiltonian of spectral radius `radius`.
    pub fn substeps(&self, radius: f64) -> usize {
        let dt = self.grid.dt();
        let rate = match self.stepper {
            Stepper::RungeKutta4 => radius + self.gamma,
            Stepper::DiscreteMap => self.gamma,
        };
        ((dt * rate / self.step_bound) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }
}

/// Worst invariant violations seen during a propagation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Hygiene {
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    pub substeps: usize,
    pub internal_dt: f64,
}

fn check_shapes(rho: &DensityMatrix, h: &ComplexMatrix) -> Result<()> {
    if h.nrows() != rho.dimension() || h.ncols() != rho.dimension() {
        return Err(Error::DimensionMismatch { expected: rho.dimension(), found: h.nrows() });
    }
    Ok(())
}

/// Scratch space for the right-hand side evaluation.
struct Workspace {
    xr: Mat<f64>,
    xi: Mat<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self { xr: Mat::zeros(n, n), xi: Mat::zeros(n, n) }
    }
}

/// Writes `-i[H, rho] + gamma (P rho - rho)` into `(dr, di)`.
///
/// With `L_j = |j><j|` we have `sum_j L_j rho L_j = P rho` (the diagonal
/// part of `rho`) and `sum_j L_j^dag L_j = sum_j L_j = 1`, so the
/// dissipator collapses to `gamma/2 (2 P rho - 2 rho) = gamma (P rho - rho)`:
/// every off-diagonal entry decays at rate `gamma`, populations are untouched.
fn rhs_into(
    h: &ComplexMatrix,
    gamma: f64,
    r: &Mat<f64>,
    i: &Mat<f64>,
    dr: &mut Mat<f64>,
    di: &mut Mat<f64>,
    ws: &mut Workspace,
) {
    let n = r.nrows();
    // X = H rho; rho H = X^dag for Hermitian H and rho
    gemm(&mut ws.xr, Accum::Replace, h.re(), r.as_ref(), 1.0);
    gemm(&mut ws.xi, Accum::Replace, h.re(), i.as_ref(), 1.0);
    if !h.is_real() {
        gemm(&mut ws.xr, Accum::Add, h.im(), i.as_ref(), -1.0);
        gemm(&mut ws.xi, Accum::Add, h.im(), r.as_ref(), 1.0);
    }
    // -i (X - X^dag) = (Xi + Xi^T) - i (Xr - Xr^T)
    for col in 0..n {
        for row in 0..n {
            let mut vr = ws.xi[(row, col)] + ws.xi[(col, row)];
            let mut vi = ws.xr[(col, row)] - ws.xr[(row, col)];
            if row != col {
                vr -= gamma * r[(row, col)];
                vi -= gamma * i[(row, col)];
            }
            dr[(row, col)] = vr;
            di[(row, col)] = vi;
        }
    }
}

/// Time derivative of `rho` under the dephasing master equation with
/// Hamiltonian `h` (given in the observable eigenbasis).
pub fn lindblad_rhs(rho: &DensityMatrix, h: &ComplexMatrix, gamma: f64) -> Result<ComplexMatrix> {
    check_shapes(rho, h)?;
    let n = rho.dimension();
    let mut ws = Workspace::new(n);
    let mut dr = Mat::zeros(n, n);
    let mut di = Mat::zeros(n, n);
    rhs_into(h, gamma, &rho.re, &rho.im, &mut dr, &mut di, &mut ws);
    ComplexMatrix::from_parts(dr, di)
}

struct Rk4 {
    ws: Workspace,
    acc: (Mat<f64>, Mat<f64>),
    tmp: (Mat<f64>, Mat<f64>),
    k: (Mat<f64>, Mat<f64>),
}

impl Rk4 {
    fn new(n: usize) -> Self {
        let z = || (Mat::zeros(n, n), Mat::zeros(n, n));
        Self { ws: Workspace::new(n), acc: z(), tmp: z(), k: z() }
    }

    fn step(&mut self, rho: &mut DensityMatrix, h: &ComplexMatrix, gamma: f64, dt: f64) {
        let n = rho.dimension();
        let Rk4 { ws, acc, tmp, k } = self;
        rhs_into(h, gamma, &rho.re, &rho.im, &mut acc.0, &mut acc.1, ws);
        let stage = |tmp: &mut (Mat<f64>, Mat<f64>), src: &(Mat<f64>, Mat<f64>), scale: f64, rho: &DensityMatrix| {
            for c in 0..n {
                for r in 0..n {
                    tmp.0[(r, c)] = rho.re[(r, c)] + scale * src.0[(r, c)];
                    tmp.1[(r, c)] = rho.im[(r, c)] + scale * src.1[(r, c)];
                }
            }
        };
        let accumulate = |acc: &mut (Mat<f64>, Mat<f64>), src: &(Mat<f64>, Mat<f64>), weight: f64| {
            for c in 0..n {
                for r in 0..n {
                    acc.0[(r, c)] += weight * src.0[(r, c)];
                    acc.1[(r, c)] += weight * src.1[(r, c)];
                }
            }
        };
        stage(tmp, acc, dt / 2.0, rho);
        rhs_into(h, gamma, &tmp.0, &tmp.1, &mut k.0, &mut k.1, ws);
        accumulate(acc, k, 2.0);
        stage(tmp, k, dt / 2.0, rho);
        rhs_into(h, gamma, &tmp.0, &tmp.1, &mut k.0, &mut k.1, ws);
        accumulate(acc, k, 2.0);
        stage(tmp, k, dt, rho);
        rhs_into(h, gamma, &tmp.0, &tmp.1, &mut k.0, &mut k.1, ws);
        accumulate(acc, k, 1.0);
        for c in 0..n {
            for r in 0..n {
                rho.re[(r, c)] += dt / 6.0 * acc.0[(r, c)];
                rho.im[(r, c)] += dt / 6.0 * acc.1[(r, c)];
            }
        }
    }
}

/// One step of `rho -> (1 - gamma T) U rho U^dag + gamma T P(U rho U^dag)`.
pub fn step_discrete_map(rho: &DensityMatrix, u: &ComplexMatrix, gamma: f64, step: f64) -> Result<DensityMatrix> {
    check_shapes(rho, u)?;
    let keep = 1.0 - gamma * step;
    if !(gamma >= 0.0 && step > 0.0 && keep > 0.0) {
        return Err(Error::input(format!("discrete map needs 0 <= gamma T < 1, got {}", gamma * step)));
    }
    let rotated = u.mul(&rho.to_complex()).mul(&u.adjoint());
    let n = rho.dimension();
    let mut out = DensityMatrix { re: rotated.re().to_owned(), im: rotated.im().to_owned() };
    for c in 0..n {
        for r in 0..n {
            if r != c {
                out.re[(r, c)] *= keep;
                out.im[(r, c)] *= keep;
            }
        }
    }
    Ok(out)
}

fn hamiltonian_radius(h: &ComplexMatrix) -> Result<f64> {
    let ev = h.hermitian_eigenvalues()?;
    Ok(ev.iter().fold(0.0, |m, e| m.max(e.abs())))
}

/// Propagates `rho0` over `config.grid`, calling `observe(k, rho(t_k))` at
/// every grid point (including `k = 0`).
pub fn propagate_lindblad<F>(
    rho0: &DensityMatrix,
    h: &ComplexMatrix,
    config: &LindbladConfig,
    mut observe: F,
) -> Result<Hygiene>
where
    F: FnMut(usize, &DensityMatrix),
{
    config.validate()?;
    check_shapes(rho0, h)?;
    let n = rho0.dimension();
    let substeps = config.substeps(hamiltonian_radius(h)?);
    let dt = config.grid.dt() / substeps as f64;
    let mut hygiene = Hygiene { min_eigenvalue: f64::INFINITY, substeps, internal_dt: dt, ..Default::default() };
    let mut rho = rho0.clone();

    let unitary = match config.stepper {
        Stepper::DiscreteMap => Some(h.unitary_propagator(dt)?),
        Stepper::RungeKutta4 => None,
    };
    let mut rk4 = Rk4::new(n);

    for k in 0..config.grid.len() {
        if k > 0 {
            for _ in 0..substeps {
                match &unitary {
                    Some(u) => rho = step_discrete_map(&rho, u, config.gamma, dt)?,
                    None => rk4.step(&mut rho, h, config.gamma, dt),
                }
            }
        }
        hygiene.max_trace_drift = hygiene.max_trace_drift.max((rho.trace() - 1.0).norm());
        hygiene.max_hermiticity_defect = hygiene.max_hermiticity_defect.max(rho.hermiticity_defect());
        if k % EIGEN_CHECK_INTERVAL == 0 || k == config.grid.steps() {
            let min = rho.min_eigenvalue()?;
            hygiene.min_eigenvalue = hygiene.min_eigenvalue.min(min);
            if min < -POSITIVITY_TOLERANCE {
                return Err(Error::PositivityLost { time: config.grid.time(k), min_eigenvalue: min });
            }
        }
        observe(k, &rho);
    }
    Ok(hygiene)
}

/// Collects every grid-point snapshot. Memory grows as `N^2` per point.
pub fn propagate_lindblad_snapshots(
    rho0: &DensityMatrix,
    h: &ComplexMatrix,
    config: &LindbladConfig,
) -> Result<(Vec<DensityMatrix>, Hygiene)> {
    let mut out = Vec::with_capacity(config.grid.len());
    let hygiene = propagate_lindblad(rho0, h, config, |_, rho| out.push(rho.clone()))?;
    Ok((out, hygiene))
}

/// `H` rotated into the observable eigenbasis: `V^T diag(E) V`.
pub fn hamiltonian_in_observable_basis(spectrum: &Spectrum, observable: &EthObservable) -> Result<ComplexMatrix> {
    if spectrum.dimension() != observable.dimension() {
        return Err(Error::DimensionMismatch { expected: spectrum.dimension(), found: observable.dimension() });
    }
    let h = rotate_diagonal(observable.eigenbasis().as_ref(), spectrum.energies());
    // symmetrise away GEMM rounding so the generator stays exactly Hermitian
    let n = h.nrows();
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (h[(i, j)] + h[(j, i)]));
    Ok(ComplexMatrix::from_real(sym))
}

/// Decohered expectation value together with the propagation diagnostics.
#[derive(Clone, Debug)]
pub struct OracleRun {
    pub signal: Signal,
    pub hygiene: Hygiene,
}

/// `Tr{A rho(t)}` from full master-equation propagation starting at the
/// diagonal state.
pub fn oracle_decohered(
    observable: &EthObservable,
    spectrum: &Spectrum,
    state: &DiagonalState,
    config: &LindbladConfig,
) -> Result<OracleRun> {
    let n = observable.dimension();
    if n > ORACLE_DIMENSION_LIMIT {
        return Err(Error::DimensionTooLarge { dimension: n, limit: ORACLE_DIMENSION_LIMIT });
    }
    if state.dimension() != n {
        return Err(Error::DimensionMismatch { expected: n, found: state.dimension() });
    }
    let h = hamiltonian_in_observable_basis(spectrum, observable)?;
    let rho0 = DensityMatrix::diagonal(state);
    let a = observable.eigenvalues();
    let mut values = vec![0.0; config.grid.len()];
    let hygiene = propagate_lindblad(&rho0, &h, config, |k, rho| values[k] = rho.expectation_diagonal(a))?;
    Ok(OracleRun { signal: Signal::new(config.grid, values)?, hygiene })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{damped_oscillator, two_level};
    use crate::closed_dynamics::expectation_closed;
    use crate::spectral_model::{Ensemble, EthEnsembleConfig, ReferenceFunction, ReferenceKind};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_real(Mat::from_fn(2, 2, |i, j| if i != j { 1.0 } else { 0.0 }))
    }

    fn up() -> DensityMatrix {
        DensityMatrix::diagonal(&DiagonalState::pure(2, 0).unwrap())
    }

    /// `(x, y, z)` with `rho_01 = (x + i y)/2`, i.e. `y = -<sigma_y>`; in these
    /// coordinates `H = sigma_x` gives `y' = 2z`, `z' = -2y`.
    fn bloch(rho: &DensityMatrix) -> (f64, f64, f64) {
        let r01 = rho.get(0, 1);
        (2.0 * r01.re, 2.0 * r01.im, (rho.get(0, 0) - rho.get(1, 1)).re)
    }

    #[test]
    fn stationary_when_everything_is_diagonal() {
        let h = ComplexMatrix::from_real(Mat::from_fn(3, 3, |i, j| if i == j { i as f64 } else { 0.0 }));
        let rho = DensityMatrix::diagonal(&DiagonalState::new(vec![0.2, 0.3, 0.5]).unwrap());
        let d = lindblad_rhs(&rho, &h, 0.7).unwrap();
        assert_eq!(d.frobenius_norm_sq(), 0.0);
    }

    #[test]
    fn zero_gamma_is_von_neumann() {
        let h = ComplexMatrix::from_fn(2, |i, j| match (i, j) {
            (0, 0) => c(0.3, 0.0),
            (0, 1) => c(0.5, -0.2),
            (1, 0) => c(0.5, 0.2),
            _ => c(-0.4, 0.0),
        });
        let rho = DensityMatrix::from_complex(&ComplexMatrix::from_fn(2, |i, j| match (i, j) {
            (0, 0) => c(0.6, 0.0),
            (0, 1) => c(0.1, 0.2),
            (1, 0) => c(0.1, -0.2),
            _ => c(0.4, 0.0),
        }))
        .unwrap();
        let d = lindblad_rhs(&rho, &h, 0.0).unwrap();
        let r = rho.to_complex();
        let comm = h.mul(&r).sub(&r.mul(&h));
        for i in 0..2 {
            for j in 0..2 {
                let expected = c(0.0, -1.0) * comm.get(i, j);
                assert!((d.get(i, j) - expected).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn two_level_rhs_matches_bloch_equations() {
        let gamma = 1.0;
        // generic state: x=0.3, y=-0.2, z=0.5
        let (x, y, z) = (0.3, -0.2, 0.5);
        let rho = DensityMatrix::from_complex(&ComplexMatrix::from_fn(2, |i, j| match (i, j) {
            (0, 0) => c((1.0 + z) / 2.0, 0.0),
            (1, 1) => c((1.0 - z) / 2.0, 0.0),
            (0, 1) => c(x / 2.0, y / 2.0),
            _ => c(x / 2.0, -y / 2.0),
        }))
        .unwrap();
        let d = lindblad_rhs(&rho, &sigma_x(), gamma).unwrap();
        let (dx, dy, dz) = bloch(&DensityMatrix { re: d.re().to_owned(), im: d.im().to_owned() });
        assert!((dx - (-gamma * x)).abs() < 1e-15);
        assert!((dy - (2.0 * z - gamma * y)).abs() < 1e-15);
        assert!((dz - (-2.0 * y)).abs() < 1e-15);
        // from |up>: populations frozen at first order, coherence born along y
        let d0 = lindblad_rhs(&up(), &sigma_x(), gamma).unwrap();
        let (dx, dy, dz) = bloch(&DensityMatrix { re: d0.re().to_owned(), im: d0.im().to_owned() });
        assert_eq!((dx, dz), (0.0, 0.0));
        assert!((dy - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rk4_two_level_matches_damped_oscillator() {
        let grid = TimeGrid::new(1e-3, 10_000).unwrap();
        let config = LindbladConfig::new(1.0, grid, Stepper::RungeKutta4);
        let mut z = vec![0.0; grid.len()];
        let hygiene = propagate_lindblad(&up(), &sigma_x(), &config, |k, rho| z[k] = bloch(rho).2).unwrap();
        let z = Signal::new(grid, z).unwrap();
        let exact = damped_oscillator(1.0, 1.0, &grid);
        assert!(z.max_abs_diff(&exact).unwrap() < 1e-6);
        assert!(hygiene.max_trace_drift < 1e-9, "{hygiene:?}");
        assert!(hygiene.max_hermiticity_defect < 1e-10);
        assert!(hygiene.min_eigenvalue > -1e-8);
    }

    #[test]
    fn discrete_map_tracks_rk4_to_first_order() {
        let grid = TimeGrid::new(1e-3, 10_000).unwrap();
        let run = |stepper| {
            let config = LindbladConfig::new(1.0, grid, stepper);
            let mut z = vec![0.0; grid.len()];
            propagate_lindblad(&up(), &sigma_x(), &config, |k, rho| z[k] = bloch(rho).2).unwrap();
            Signal::new(grid, z).unwrap()
        };
        let dev = run(Stepper::RungeKutta4).max_abs_diff(&run(Stepper::DiscreteMap)).unwrap();
        assert!(dev < 5e-3, "deviation {dev}");
    }

    #[test]
    fn stepper_errors_scale_with_their_order() {
        let exact_at = |grid: TimeGrid| damped_oscillator(1.0, 1.0, &grid);
        let err = |stepper, dt: f64, bound: f64| {
            let grid = TimeGrid::covering(dt, 4.0).unwrap();
            let config = LindbladConfig::new(1.0, grid, stepper).with_step_bound(bound);
            let mut z = vec![0.0; grid.len()];
            propagate_lindblad(&up(), &sigma_x(), &config, |k, rho| z[k] = bloch(rho).2).unwrap();
            Signal::new(grid, z).unwrap().max_abs_diff(&exact_at(grid)).unwrap()
        };
        let (rk_coarse, rk_fine) = (err(Stepper::RungeKutta4, 0.04, 0.1), err(Stepper::RungeKutta4, 0.02, 0.1));
        let ratio = rk_coarse / rk_fine;
        assert!((12.0..20.0).contains(&ratio), "rk4 ratio {ratio}");
        let (dm_coarse, dm_fine) = (err(Stepper::DiscreteMap, 0.01, 0.1), err(Stepper::DiscreteMap, 0.005, 0.1));
        let ratio = dm_coarse / dm_fine;
        assert!((1.7..2.3).contains(&ratio), "discrete ratio {ratio}");
    }

    #[test]
    fn discrete_map_special_cases() {
        let rho = DensityMatrix::diagonal(&DiagonalState::new(vec![0.3, 0.7]).unwrap());
        let id = ComplexMatrix::from_real(Mat::identity(2, 2));
        assert_eq!(step_discrete_map(&rho, &id, 2.0, 0.01).unwrap(), rho);
        let u = sigma_x().unitary_propagator(0.1).unwrap();
        let a = step_discrete_map(&up(), &u, 0.0, 0.1).unwrap();
        let b = u.mul(&up().to_complex()).mul(&u.adjoint());
        for i in 0..2 {
            for j in 0..2 {
                assert!((a.get(i, j) - b.get(i, j)).norm() < 1e-15);
            }
        }
        assert!(step_discrete_map(&rho, &id, 20.0, 0.1).is_err());
    }

    #[test]
    fn pure_dephasing_decays_coherences_exponentially() {
        let gamma = 0.8;
        let grid = TimeGrid::new(0.01, 500).unwrap();
        let plus = DensityMatrix::from_complex(&ComplexMatrix::from_fn(2, |_, _| c(0.5, 0.0))).unwrap();
        let config = LindbladConfig::new(gamma, grid, Stepper::RungeKutta4);
        let zero = ComplexMatrix::zeros(2);
        let mut worst = 0.0f64;
        propagate_lindblad(&plus, &zero, &config, |k, rho| {
            let expected = 0.5 * (-gamma * grid.time(k)).exp();
            worst = worst.max((rho.get(0, 1).re - expected).abs());
        })
        .unwrap();
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn trace_drift_over_many_steps() {
        let grid = TimeGrid::new(1e-3, 10_000).unwrap();
        let config = LindbladConfig::new(0.3, grid, Stepper::RungeKutta4);
        let hygiene = propagate_lindblad(&up(), &sigma_x(), &config, |_, _| {}).unwrap();
        assert!(hygiene.max_trace_drift <= 1e-9);
    }

    #[test]
    fn invalid_density_matrices_are_rejected() {
        let bad_trace = ComplexMatrix::from_fn(2, |i, j| if i == j { c(0.6, 0.0) } else { c(0.0, 0.0) });
        assert!(DensityMatrix::from_complex(&bad_trace).is_err());
        let negative = ComplexMatrix::from_fn(2, |i, j| if i == j { c(0.5, 0.0) } else { c(0.9, 0.0) });
        assert!(DensityMatrix::from_complex(&negative).is_err());
        let non_herm = ComplexMatrix::from_fn(2, |i, j| match (i, j) {
            (0, 1) => c(0.1, 0.1),
            (1, 0) => c(0.1, 0.1),
            _ => c(0.5, 0.0),
        });
        assert!(DensityMatrix::from_complex(&non_herm).is_err());
    }

    #[test]
    fn oracle_guards_dimension() {
        let g = ReferenceFunction::standard(ReferenceKind::Exponential);
        let ens = Ensemble::generate(&EthEnsembleConfig::new(1025, g, 0).with_half_width(3.0)).unwrap();
        let state = DiagonalState::pure(1025, 0).unwrap();
        let config = LindbladConfig::new(0.1, TimeGrid::new(0.1, 1).unwrap(), Stepper::RungeKutta4);
        assert!(matches!(
            oracle_decohered(&ens.observable, &ens.spectrum, &state, &config),
            Err(Error::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn oracle_at_zero_gamma_is_closed_dynamics() {
        let g = ReferenceFunction::standard(ReferenceKind::Oscillation);
        let ens = Ensemble::generate(&EthEnsembleConfig::new(40, g, 2).with_half_width(3.0)).unwrap();
        let grid = TimeGrid::new(0.05, 200).unwrap();
        let state = DiagonalState::pure(40, 37).unwrap();
        let config = LindbladConfig::new(0.0, grid, Stepper::RungeKutta4).with_step_bound(0.02);
        let run = oracle_decohered(&ens.observable, &ens.spectrum, &state, &config).unwrap();
        let closed = expectation_closed(&ens.spectrum, &ens.observable, &state, &grid).unwrap();
        let dev = run.signal.max_abs_diff(&closed).unwrap();
        assert!(dev < 1e-8, "{dev}");

        let sys = two_level();
        let grid = TimeGrid::new(1e-3, 3000).unwrap();
        let s = DiagonalState::pure(2, sys.level_of(1.0)).unwrap();
        let config = LindbladConfig::new(0.0, grid, Stepper::RungeKutta4);
        let run = oracle_decohered(&sys.observable, &sys.spectrum, &s, &config).unwrap();
        let closed = expectation_closed(&sys.spectrum, &sys.observable, &s, &grid).unwrap();
        assert!(run.signal.max_abs_diff(&closed).unwrap() < 1e-8);
    }
}
