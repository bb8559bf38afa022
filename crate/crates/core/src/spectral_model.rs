//! Random-matrix models of an observable obeying the eigenstate
//! thermalization ansatz.
//!
//! Energies are i.i.d. uniform on `[-W/2, W/2]`. In the energy eigenbasis
//! the observable is `a_jl = f(E_j - E_l) R_jl` with `R_jl = R_lj` standard
//! normal, and the envelope `f` is chosen so that the ensemble
//! autocorrelation `Tr{A(t)A}` follows a prescribed relaxation function
//! `g(t)`.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::signal::{Signal, TimeGrid};

/// RNG stream used for the level energies.
const ENERGY_STREAM: u64 = 0;
/// RNG stream used for the Gaussian factors `R_jl`.
const COUPLING_STREAM: u64 = 1;

/// Below this fraction of `g^(0)` a negative transform is rounding noise.
const CLAMP_FRACTION: f64 = 1e-12;
/// Below this fraction of `-g^(0)` a negative transform is an error.
const NEGATIVE_FRACTION: f64 = 1e-9;
/// Pair densities below this fraction of the peak are treated as empty.
const PAIR_DENSITY_FLOOR: f64 = 1e-6;
/// Eigenvalue gap below which the observable counts as degenerate.
const DEGENERACY_GAP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    Exponential,
    Oscillation,
    Linear,
    Recurrence,
}

impl ReferenceKind {
    pub const ALL: [ReferenceKind; 4] = [
        ReferenceKind::Exponential,
        ReferenceKind::Oscillation,
        ReferenceKind::Linear,
        ReferenceKind::Recurrence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReferenceKind::Exponential => "exponential",
            ReferenceKind::Oscillation => "oscillation",
            ReferenceKind::Linear => "linear",
            ReferenceKind::Recurrence => "recurrence",
        }
    }
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exp" | "exponential" => Ok(ReferenceKind::Exponential),
            "osc" | "oscillation" => Ok(ReferenceKind::Oscillation),
            "lin" | "linear" => Ok(ReferenceKind::Linear),
            "rec" | "recurrence" => Ok(ReferenceKind::Recurrence),
            other => Err(Error::config(format!("unknown reference function '{other}'"))),
        }
    }
}

/// One of the four target relaxation functions `g(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFunction {
    pub kind: ReferenceKind,
    pub tau: f64,
    /// Gaussian width of the recurrence peaks; unused by the other kinds.
    pub v: f64,
}

impl ReferenceFunction {
    pub const DEFAULT_TAU: f64 = 10.0;
    pub const DEFAULT_V: f64 = 0.016;

    pub fn new(kind: ReferenceKind, tau: f64, v: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::config(format!("tau must be positive, got {tau}")));
        }
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::config(format!("v must be positive, got {v}")));
        }
        Ok(Self { kind, tau, v })
    }

    /// The published parameter set: `tau = 10`, `v = 0.016`.
    pub fn standard(kind: ReferenceKind) -> Self {
        Self { kind, tau: Self::DEFAULT_TAU, v: Self::DEFAULT_V }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let tau = self.tau;
        match self.kind {
            ReferenceKind::Exponential => (-LN_2 / tau * t.abs()).exp(),
            ReferenceKind::Oscillation => (2.0 * PI / tau * t).cos() * (-t.abs() / (2.0 * tau)).exp(),
            ReferenceKind::Linear => {
                if t.abs() <= 2.0 * tau {
                    1.0 - t.abs() / (2.0 * tau)
                } else {
                    0.0
                }
            }
            ReferenceKind::Recurrence => {
                let v = self.v;
                (-t * t / v).exp() + 0.5 * (-(t - tau).powi(2) / v).exp() + 0.5 * (-(t + tau).powi(2) / v).exp()
            }
        }
    }

    pub fn sample(&self, grid: &TimeGrid) -> Signal {
        Signal::from_fn(*grid, |t| self.eval(t)).expect("reference functions are finite")
    }

    /// Closed-form `g^(w) = \int g(t) exp(-i w t) dt` (real, since `g` is even).
    pub fn fourier_transform(&self, omega: f64) -> f64 {
        let tau = self.tau;
        match self.kind {
            ReferenceKind::Exponential => {
                let lambda = LN_2 / tau;
                2.0 * lambda / (lambda * lambda + omega * omega)
            }
            ReferenceKind::Oscillation => {
                let mu = 1.0 / (2.0 * tau);
                let carrier = 2.0 * PI / tau;
                let lorentz = |x: f64| mu / (mu * mu + x * x);
                lorentz(omega - carrier) + lorentz(omega + carrier)
            }
            ReferenceKind::Linear => {
                // triangle of half-width 2 tau
                let x = omega * tau;
                let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
                2.0 * tau * sinc * sinc
            }
            ReferenceKind::Recurrence => {
                let v = self.v;
                (PI * v).sqrt() * (-v * omega * omega / 4.0).exp() * (1.0 + (omega * tau).cos())
            }
        }
    }
}

/// `g^(w)` with rounding-level negatives clamped to zero.
pub fn spectral_density_of_g(reference: &ReferenceFunction, omega: f64) -> Result<f64> {
    clamp_spectral_density(reference.fourier_transform(omega), reference.fourier_transform(0.0), omega)
}

fn clamp_spectral_density(value: f64, peak: f64, omega: f64) -> Result<f64> {
    if value < -NEGATIVE_FRACTION * peak.abs() {
        return Err(Error::NegativeSpectralDensity { omega, value, peak });
    }
    if value < CLAMP_FRACTION * peak.abs() && value < 0.0 {
        return Ok(0.0);
    }
    Ok(value.max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EthEnsembleConfig {
    pub dimension: usize,
    pub half_width: f64,
    pub reference: ReferenceFunction,
    pub seed: u64,
    /// Envelope cutoff in units of `half_width`.
    pub spectral_cutoff: f64,
}

impl EthEnsembleConfig {
    pub const DEFAULT_HALF_WIDTH: f64 = 30.0;
    pub const DEFAULT_CUTOFF: f64 = 1.5;

    pub fn new(dimension: usize, reference: ReferenceFunction, seed: u64) -> Self {
        Self {
            dimension,
            half_width: Self::DEFAULT_HALF_WIDTH,
            reference,
            seed,
            spectral_cutoff: Self::DEFAULT_CUTOFF,
        }
    }

    pub fn with_half_width(mut self, half_width: f64) -> Self {
        self.half_width = half_width;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension < 2 {
            return Err(Error::config(format!("ensemble dimension must be >= 2, got {}", self.dimension)));
        }
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::config(format!("half_width must be positive, got {}", self.half_width)));
        }
        if !(self.spectral_cutoff > 0.0 && self.spectral_cutoff <= 2.0) {
            return Err(Error::config(format!(
                "spectral_cutoff must lie in (0, 2], got {}",
                self.spectral_cutoff
            )));
        }
        ReferenceFunction::new(self.reference.kind, self.reference.tau, self.reference.v)?;
        Ok(())
    }
}

/// Sorted energy eigenvalues of the model Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    energies: Vec<f64>,
    half_width: f64,
}

impl Spectrum {
    pub fn new(mut energies: Vec<f64>, half_width: f64) -> Result<Self> {
        if energies.len() < 2 {
            return Err(Error::input("a spectrum needs at least two levels"));
        }
        if let Some(e) = energies.iter().find(|e| e.is_nan() || e.abs() > half_width) {
            return Err(Error::input(format!("energy {e} outside [-{half_width}, {half_width}]")));
        }
        energies.sort_by(f64::total_cmp);
        Ok(Self { energies, half_width })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dimension(&self) -> usize {
        self.energies.len()
    }

    /// Largest `|E_j|`.
    pub fn spectral_radius(&self) -> f64 {
        self.energies.iter().fold(0.0, |m, e| m.max(e.abs()))
    }
}

pub fn sample_spectrum(config: &EthEnsembleConfig) -> Result<Spectrum> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(ENERGY_STREAM);
    let h = config.half_width;
    let energies = (0..config.dimension).map(|_| rng.random_range(-h..=h)).collect();
    Spectrum::new(energies, h)
}

/// Envelope `f(w) = sqrt(g^(w) / nu(w))`, with `nu` the level-pair gap
/// density of a uniform spectrum.
#[derive(Clone, Copy, Debug)]
pub struct SpectralFilter {
    reference: ReferenceFunction,
    half_width: f64,
    cutoff: f64,
}

impl SpectralFilter {
    pub fn new(reference: ReferenceFunction, half_width: f64, cutoff: f64) -> Self {
        Self { reference, half_width, cutoff }
    }

    pub fn for_config(config: &EthEnsembleConfig) -> Self {
        Self::new(config.reference, config.half_width, config.spectral_cutoff)
    }

    /// Probability density of `E_j - E_l` for two independent uniform levels.
    pub fn pair_density(&self, omega: f64) -> f64 {
        let w = 2.0 * self.half_width;
        ((w - omega.abs()) / (w * w)).max(0.0)
    }

    pub fn value(&self, omega: f64) -> Result<f64> {
        if omega.abs() > self.cutoff * self.half_width {
            return Ok(0.0);
        }
        let nu = self.pair_density(omega);
        if nu < PAIR_DENSITY_FLOOR * self.pair_density(0.0) {
            return Ok(0.0);
        }
        let g = spectral_density_of_g(&self.reference, omega)?;
        Ok((g / nu).sqrt())
    }
}

/// Observable matrix in the energy basis with its own eigendecomposition.
#[derive(Clone, Debug)]
pub struct EthObservable {
    matrix: Mat<f64>,
    eigenvalues: Vec<f64>,
    eigenbasis: Mat<f64>,
}

impl EthObservable {
    /// Diagonalises a real symmetric matrix given in the energy basis.
    pub fn from_matrix(matrix: Mat<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: matrix.ncols() });
        }
        for j in 0..n {
            for i in 0..j {
                if matrix[(i, j)] != matrix[(j, i)] {
                    return Err(Error::input(format!("observable not symmetric at ({i}, {j})")));
                }
            }
        }
        let (eigenvalues, eigenbasis) = symmetric_eigen(matrix.as_ref())?;
        let obs = Self { matrix, eigenvalues, eigenbasis };
        obs.check_nondegenerate()?;
        Ok(obs)
    }

    /// Reassembles a stored decomposition without recomputing it.
    pub(crate) fn from_parts(matrix: Mat<f64>, eigenvalues: Vec<f64>, eigenbasis: Mat<f64>) -> Result<Self> {
        let n = eigenvalues.len();
        for (r, c) in [(matrix.nrows(), matrix.ncols()), (eigenbasis.nrows(), eigenbasis.ncols())] {
            if r != n || c != n {
                return Err(Error::DimensionMismatch { expected: n, found: r.max(c) });
            }
        }
        let obs = Self { matrix, eigenvalues, eigenbasis };
        obs.check_nondegenerate()?;
        Ok(obs)
    }

    fn check_nondegenerate(&self) -> Result<()> {
        for (index, pair) in self.eigenvalues.windows(2).enumerate() {
            let gap = pair[1] - pair[0];
            if gap < DEGENERACY_GAP {
                return Err(Error::DegenerateObservable { index, gap });
            }
        }
        Ok(())
    }

    /// Rescales so that the largest `|a_j|` is exactly one.
    fn normalize(mut self) -> Result<Self> {
        let scale = self.spectral_radius();
        if scale == 0.0 {
            return Err(Error::ZeroNormObservable { norm: 0.0 });
        }
        for j in 0..self.matrix.ncols() {
            for x in self.matrix.col_as_slice_mut(j) {
                *x /= scale;
            }
        }
        for a in &mut self.eigenvalues {
            *a /= scale;
        }
        self.check_nondegenerate()?;
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Matrix elements `a_jl` in the energy basis.
    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    /// `a_j`, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Columns are the eigenvectors `|j>` in the energy basis.
    pub fn eigenbasis(&self) -> &Mat<f64> {
        &self.eigenbasis
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dimension()).map(|j| self.matrix[(j, j)]).sum()
    }

    /// `Tr{A^2}`.
    pub fn norm_sq(&self) -> f64 {
        (0..self.dimension())
            .map(|j| self.matrix.col_as_slice(j).iter().map(|x| x * x).sum::<f64>())
            .sum()
    }
}

pub fn build_observable(spectrum: &Spectrum, config: &EthEnsembleConfig) -> Result<EthObservable> {
    config.validate()?;
    let n = spectrum.dimension();
    if n != config.dimension {
        return Err(Error::DimensionMismatch { expected: config.dimension, found: n });
    }
    let filter = SpectralFilter::for_config(config);
    let energies = spectrum.energies();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(COUPLING_STREAM);
    let mut matrix = Mat::<f64>::zeros(n, n);
    for l in 0..n {
        for j in 0..=l {
            let r: f64 = rng.sample(StandardNormal);
            let a = filter.value(energies[j] - energies[l])? * r;
            matrix[(j, l)] = a;
            matrix[(l, j)] = a;
        }
    }
    EthObservable::from_matrix(matrix)?.normalize()
}

/// For each target value, the index `j` minimising `|a_j - target|`
/// (smaller index on ties).
pub fn select_initial_levels(observable: &EthObservable, targets: &[f64]) -> Result<Vec<usize>> {
    targets
        .iter()
        .map(|&target| {
            if !(-1.0..=1.0).contains(&target) {
                return Err(Error::input(format!("probe target {target} outside [-1, 1]")));
            }
            let mut best = 0;
            let mut best_dist = f64::INFINITY;
            for (j, a) in observable.eigenvalues().iter().enumerate() {
                let d = (a - target).abs();
                if d < best_dist {
                    best = j;
                    best_dist = d;
                }
            }
            Ok(best)
        })
        .collect()
}

/// Level density of the reference setting: `N = 20000` levels on `[-30, 30]`.
pub const REFERENCE_LEVEL_DENSITY: f64 = 20000.0 / 60.0;
/// Share of the spectral weight of `g` a desk-scale envelope must retain.
pub const RETAINED_WEIGHT: f64 = 0.99;

/// `(1/pi) int_0^w g^(omega) d omega`, the share of `g(0)` carried by `|omega| <= w`.
pub fn spectral_weight_within(reference: &ReferenceFunction, w: f64) -> f64 {
    // g^ oscillates with period 2 pi / tau at most, so resolve that scale
    let n = (((w / (0.01 * reference.tau.min(1.0))).ceil() as usize).max(64) + 1) & !1;
    let h = w / n as f64;
    let f = |x: f64| reference.fourier_transform(x);
    let mut sum = f(0.0) + f(w);
    for k in 1..n {
        sum += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    sum * h / 3.0 / PI
}

/// Half-width for `dimension` levels at reduced scale.
///
/// Starts from the reference level density and widens the band until the
/// envelope cutoff keeps [`RETAINED_WEIGHT`] of `g`; capped at 30.
pub fn desk_half_width(reference: &ReferenceFunction, dimension: usize, cutoff: f64) -> f64 {
    const CAP: f64 = 30.0;
    let dense = dimension as f64 / (2.0 * REFERENCE_LEVEL_DENSITY);
    let keeps = |h: f64| spectral_weight_within(reference, cutoff * h) >= RETAINED_WEIGHT;
    if keeps(dense) {
        return dense.min(CAP);
    }
    if !keeps(CAP) {
        return CAP;
    }
    let (mut lo, mut hi) = (dense, CAP);
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if keeps(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// A sampled spectrum together with its observable.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub config: EthEnsembleConfig,
    pub spectrum: Spectrum,
    pub observable: EthObservable,
}

impl Ensemble {
    pub fn generate(config: &EthEnsembleConfig) -> Result<Self> {
        let spectrum = sample_spectrum(config)?;
        let observable = build_observable(&spectrum, config)?;
        Ok(Self { config: *config, spectrum, observable })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `2 \int_0^L g(t) cos(w t) dt` by composite Simpson, independent of the
    /// closed forms above.
    fn quadrature_transform(reference: &ReferenceFunction, omega: f64, upper: f64, h: f64) -> f64 {
        let n = ((upper / h).round() as usize) & !1;
        let h = upper / n as f64;
        let f = |t: f64| reference.eval(t) * (omega * t).cos();
        let mut sum = f(0.0) + f(upper);
        for k in 1..n {
            sum += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
        }
        2.0 * sum * h / 3.0
    }

    #[test]
    fn spectral_weight_matches_closed_forms() {
        // exponential: (2/pi) atan(w / lambda)
        let g = ReferenceFunction::standard(ReferenceKind::Exponential);
        let lambda = LN_2 / g.tau;
        for w in [0.05, 1.0, 10.0] {
            let exact = 2.0 / PI * (w / lambda).atan();
            assert!((spectral_weight_within(&g, w) - exact).abs() < 1e-8, "w {w}");
        }
        for kind in ReferenceKind::ALL {
            let g = ReferenceFunction::standard(kind);
            assert!((spectral_weight_within(&g, 400.0) - 1.0).abs() < 5e-3, "{kind}");
        }
    }

    #[test]
    fn desk_half_width_rule() {
        let exp = ReferenceFunction::standard(ReferenceKind::Exponential);
        let rec = ReferenceFunction::standard(ReferenceKind::Recurrence);
        // reference scale is left alone
        assert_eq!(desk_half_width(&rec, 20000, 1.5), 30.0);
        // the Lorentzian keeps 99% already at the reference level density
        assert_eq!(desk_half_width(&exp, 2000, 1.5), 3.0);
        // the Gaussian peaks of the recurrence need a wider band, and no wider
        let h = desk_half_width(&rec, 2000, 1.5);
        assert!(h > 5.0 * 3.0 && h < 30.0, "{h}");
        assert!(spectral_weight_within(&rec, 1.5 * h) >= RETAINED_WEIGHT);
        assert!(spectral_weight_within(&rec, 1.5 * h * 0.99) < RETAINED_WEIGHT);
    }

    #[test]
    fn reference_functions_start_at_one_and_are_even() {
        for kind in ReferenceKind::ALL {
            let g = ReferenceFunction::standard(kind);
            if kind != ReferenceKind::Recurrence {
                assert_eq!(g.eval(0.0), 1.0, "{kind}");
            }
            for &t in &[0.3, 1.7, 9.0, 10.0, 23.5] {
                assert_eq!(g.eval(t), g.eval(-t), "{kind} at {t}");
            }
        }
        let rec = ReferenceFunction::standard(ReferenceKind::Recurrence);
        let expected = 1.0 + (-100.0f64 / 0.016).exp();
        assert_eq!(rec.eval(0.0), expected);
    }

    #[test]
    fn exponential_transform_is_lorentzian_and_matches_quadrature() {
        let g = ReferenceFunction::standard(ReferenceKind::Exponential);
        let lambda = LN_2 / 10.0;
        for &w in &[0.0, 0.05, 0.3, 1.0, 4.0] {
            let closed = spectral_density_of_g(&g, w).unwrap();
            assert!((closed - 2.0 * lambda / (lambda * lambda + w * w)).abs() < 1e-14);
            let quad = quadrature_transform(&g, w, 800.0, 0.002);
            assert!((closed - quad).abs() < 1e-6 * closed.max(1.0), "w={w}: {closed} vs {quad}");
        }
    }

    #[test]
    fn linear_transform_is_squared_sinc_and_matches_quadrature() {
        let g = ReferenceFunction::standard(ReferenceKind::Linear);
        for &w in &[0.0, 0.1, 0.2, 0.31, 0.9, 2.5] {
            let closed = spectral_density_of_g(&g, w).unwrap();
            assert!(closed >= 0.0);
            let quad = quadrature_transform(&g, w, 20.0, 0.001);
            assert!((closed - quad).abs() < 1e-8, "w={w}: {closed} vs {quad}");
        }
    }

    #[test]
    fn oscillation_and_recurrence_transforms_match_quadrature() {
        let osc = ReferenceFunction::standard(ReferenceKind::Oscillation);
        for &w in &[0.0, 0.4, 0.628, 1.5] {
            let closed = spectral_density_of_g(&osc, w).unwrap();
            let quad = quadrature_transform(&osc, w, 1200.0, 0.002);
            assert!((closed - quad).abs() < 1e-6 * closed.max(1.0), "osc w={w}: {closed} vs {quad}");
        }
        let rec = ReferenceFunction::standard(ReferenceKind::Recurrence);
        for &w in &[0.0, 0.314, 3.0, 17.0] {
            let closed = spectral_density_of_g(&rec, w).unwrap();
            assert!(closed >= 0.0);
            let quad = quadrature_transform(&rec, w, 12.0, 2e-4);
            assert!((closed - quad).abs() < 1e-9, "rec w={w}: {closed} vs {quad}");
        }
    }

    #[test]
    fn transforms_vanish_far_out() {
        for kind in ReferenceKind::ALL {
            let g = ReferenceFunction::standard(kind);
            let peak = (0..200).map(|k| spectral_density_of_g(&g, k as f64 * 0.01).unwrap()).fold(0.0, f64::max);
            assert!(spectral_density_of_g(&g, 1e4).unwrap() < 1e-6 * peak, "{kind}");
        }
    }

    #[test]
    fn clamp_and_negative_density_error() {
        assert_eq!(clamp_spectral_density(-1e-14, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(clamp_spectral_density(-5e-10, 1.0, 0.0).unwrap(), 0.0);
        assert!(matches!(
            clamp_spectral_density(-1e-6, 1.0, 2.0),
            Err(Error::NegativeSpectralDensity { .. })
        ));
        assert_eq!(clamp_spectral_density(0.5, 1.0, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn filter_is_even_and_zero_where_density_vanishes() {
        let g = ReferenceFunction::standard(ReferenceKind::Linear);
        let filter = SpectralFilter::new(g, 30.0, 1.5);
        for k in 0..500 {
            let w = k as f64 * 0.123;
            assert_eq!(filter.value(w).unwrap(), filter.value(-w).unwrap());
        }
        // first zero of the squared sinc: w tau = pi
        let zero = PI / 10.0;
        assert!(filter.value(zero).unwrap() < 1e-7);
        assert_eq!(filter.value(45.01).unwrap(), 0.0);
        let full = SpectralFilter::new(g, 30.0, 2.0);
        assert_eq!(full.value(59.99999).unwrap(), 0.0);
    }

    #[test]
    fn spectrum_is_deterministic_sorted_and_bounded() {
        let cfg = EthEnsembleConfig::new(2, ReferenceFunction::standard(ReferenceKind::Exponential), 17);
        let a = sample_spectrum(&cfg).unwrap();
        let b = sample_spectrum(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.energies()[0] <= a.energies()[1]);
        assert!(a.energies().iter().all(|e| e.abs() <= 30.0));
    }

    #[test]
    fn spectrum_is_uniform_in_kolmogorov_distance() {
        let cfg = EthEnsembleConfig::new(10_000, ReferenceFunction::standard(ReferenceKind::Exponential), 3);
        let s = sample_spectrum(&cfg).unwrap();
        let n = s.dimension() as f64;
        let ks = s
            .energies()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let cdf = (e + 30.0) / 60.0;
                (cdf - i as f64 / n).abs().max((cdf - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS distance {ks}");
    }

    #[test]
    fn config_validation() {
        let g = ReferenceFunction::standard(ReferenceKind::Exponential);
        assert!(EthEnsembleConfig::new(1, g, 0).validate().is_err());
        let mut c = EthEnsembleConfig::new(10, g, 0);
        c.spectral_cutoff = 2.5;
        assert!(c.validate().is_err());
        c.spectral_cutoff = 2.0;
        assert!(c.validate().is_ok());
        assert!("bogus".parse::<ReferenceKind>().is_err());
        assert_eq!("OSC".parse::<ReferenceKind>().unwrap(), ReferenceKind::Oscillation);
    }

    fn small_ensemble(seed: u64) -> Ensemble {
        let g = ReferenceFunction::standard(ReferenceKind::Oscillation);
        Ensemble::generate(&EthEnsembleConfig::new(120, g, seed).with_half_width(3.0)).unwrap()
    }

    #[test]
    fn observable_invariants() {
        let ens = small_ensemble(5);
        let obs = &ens.observable;
        let n = obs.dimension();
        assert_eq!(obs.spectral_radius(), 1.0);
        let m = obs.matrix();
        let v = obs.eigenbasis();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(m[(i, j)], m[(j, i)]);
                let dot: f64 = (0..n).map(|k| v[(k, i)] * v[(k, j)]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-10);
                let recon: f64 = (0..n).map(|k| v[(i, k)] * obs.eigenvalues()[k] * v[(j, k)]).sum();
                assert!((recon - m[(i, j)]).abs() < 1e-8);
            }
        }
        // trace is a sum of n Gaussians with scale ~ f(0)
        let diag_scale = (0..n).map(|j| m[(j, j)].powi(2)).sum::<f64>().sqrt();
        assert!(obs.trace().abs() < 5.0 * diag_scale);
    }

    #[test]
    fn observable_is_reproducible() {
        let a = small_ensemble(9);
        let b = small_ensemble(9);
        assert_eq!(a.observable.matrix(), b.observable.matrix());
        assert_eq!(a.spectrum, b.spectrum);
        let c = small_ensemble(10);
        assert_ne!(a.observable.matrix(), c.observable.matrix());
    }

    #[test]
    fn degenerate_observable_is_rejected() {
        let m = Mat::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 });
        assert!(matches!(EthObservable::from_matrix(m), Err(Error::DegenerateObservable { .. })));
    }

    #[test]
    fn select_levels_picks_nearest_with_low_index_ties() {
        let m = Mat::from_fn(4, 4, |i, j| if i == j { [-1.0, -0.25, 0.25, 1.0][i] } else { 0.0 });
        let obs = EthObservable::from_matrix(m).unwrap();
        assert_eq!(select_initial_levels(&obs, &[1.0, 0.25, 0.0, -0.9]).unwrap(), vec![3, 2, 1, 0]);
        assert!(select_initial_levels(&obs, &[1.5]).is_err());
    }

    #[test]
    fn matrix_element_variance_follows_envelope() {
        // sum of (a_jl / f_jl)^2 over a gap bin is chi-squared with one
        // degree of freedom per element; compare bin means of a^2 and f^2.
        let g = ReferenceFunction::standard(ReferenceKind::Recurrence);
        let cfg = EthEnsembleConfig::new(400, g, 21);
        let ens = Ensemble::generate(&cfg).unwrap();
        let filter = SpectralFilter::for_config(&cfg);
        let e = ens.spectrum.energies();
        let m = ens.observable.matrix();
        // the normalisation rescales every element by one common factor;
        // estimate it globally and test the gap dependence bin by bin
        let (mut a2_all, mut f2_all) = (0.0, 0.0);
        for l in 0..400 {
            for j in 0..l {
                a2_all += m[(j, l)].powi(2);
                f2_all += filter.value(e[j] - e[l]).unwrap().powi(2);
            }
        }
        let scale = (a2_all / f2_all).sqrt();
        for bin in 0..8 {
            let (lo, hi) = (bin as f64 * 2.0, bin as f64 * 2.0 + 0.5);
            let (mut a2, mut f2, mut f4, mut count) = (0.0, 0.0, 0.0, 0usize);
            for l in 0..400 {
                for j in 0..l {
                    let w = (e[j] - e[l]).abs();
                    if w >= lo && w < hi {
                        let f = filter.value(w).unwrap() * scale;
                        a2 += m[(j, l)].powi(2);
                        f2 += f * f;
                        f4 += f.powi(4);
                        count += 1;
                    }
                }
            }
            // Var(a^2) = 2 f^4 per element
            let se = (2.0 * f4).sqrt() / count as f64;
            let (a2, f2) = (a2 / count as f64, f2 / count as f64);
            assert!((a2 - f2).abs() < 4.0 * se, "bin {bin}: {a2} vs {f2} (se {se}, n {count})");
        }
    }
}
