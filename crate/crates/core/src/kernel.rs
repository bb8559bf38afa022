//! Memory kernels of the scalar equation
//!
//! ```text
//! a'(t) = -beta a(t) - int_0^t K(t - t') a(t') dt'
//! ```
//!
//! where `beta` is the weight of an instantaneous `delta(tau)` component and
//! `K` the sampled smooth remainder. Every quadrature is trapezoidal.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::signal::{Signal, TimeGrid};
use crate::spectral_model::{EthObservable, Spectrum};

/// `|a(0)|` below which no kernel is extracted.
pub const MIN_INITIAL_VALUE: f64 = 1e-6;
/// `Tr{A^2}` below which an observable counts as zero.
pub const MIN_OBSERVABLE_NORM: f64 = 1e-14;
/// Smallest `Re(s) * horizon` for which truncating the Laplace integral is accurate.
pub const LAPLACE_WINDOW: f64 = 5.0;
/// `gamma^2 / K(0)` from which the Zeno form is trusted.
pub const ZENO_RATIO: f64 = 100.0;

/// Kernel `beta delta(tau) + K(tau)`, with `K` sampled on a lag grid.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelModel {
    delta_weight: f64,
    smooth: Signal,
}

impl KernelModel {
    pub fn new(delta_weight: f64, smooth: Signal) -> Result<Self> {
        if !delta_weight.is_finite() {
            return Err(Error::input(format!("delta weight must be finite, got {delta_weight}")));
        }
        Ok(Self { delta_weight, smooth })
    }

    /// `beta delta(tau)` with a zero smooth part on `grid`.
    pub fn delta(weight: f64, grid: TimeGrid) -> Result<Self> {
        Self::new(weight, Signal::new(grid, vec![0.0; grid.len()])?)
    }

    pub fn delta_weight(&self) -> f64 {
        self.delta_weight
    }

    pub fn smooth(&self) -> &Signal {
        &self.smooth
    }

    /// Smooth part at zero lag.
    pub fn initial_value(&self) -> f64 {
        self.smooth.first()
    }
}

/// Integrates the kernel equation from `a(0) = a0` on `grid`.
///
/// Crank-Nicolson in time with a trapezoidal convolution; the scheme is
/// implicit only through the `K(0) a(t)` term, so each step is a scalar
/// division. Lags beyond the sampled support of the kernel count as zero.
pub fn solve_volterra(kernel: &KernelModel, a0: f64, grid: &TimeGrid) -> Result<Signal> {
    let kgrid = kernel.smooth.grid();
    if !kgrid.same_spacing(grid) {
        return Err(Error::GridMismatch(format!("kernel dt {} vs signal dt {}", kgrid.dt(), grid.dt())));
    }
    let dt = grid.dt();
    let k = kernel.smooth.values();
    let lag = |m: usize| k.get(m).copied().unwrap_or(0.0);
    let beta = kernel.delta_weight;
    let diag = 1.0 + 0.5 * dt * (beta + 0.5 * dt * k[0]);

    let mut a = Vec::with_capacity(grid.len());
    a.push(a0);
    let mut rate = -beta * a0;
    for step in 1..grid.len() {
        // S = sum_{m=1}^{step-1} K_m a_{step-m} + K_step a_0 / 2
        let mut history = 0.5 * lag(step) * a0;
        for m in 1..step {
            history += lag(m) * a[step - m];
        }
        let prev = a[step - 1];
        let next = (prev + 0.5 * dt * (rate - dt * history)) / diag;
        rate = -beta * next - dt * (0.5 * k[0] * next + history);
        a.push(next);
    }
    Signal::new(*grid, a)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExtractionOptions {
    /// Stop once `|a(t_k)| < floor * |a(0)|`; the kernel then ends at `t_k`.
    pub truncation_floor: Option<f64>,
}

/// One-sided `a'(0)` from four points, third order.
fn forward_derivative(a: &[f64], dt: f64) -> f64 {
    (-11.0 * a[0] + 18.0 * a[1] - 9.0 * a[2] + 2.0 * a[3]) / (6.0 * dt)
}

/// One-sided `a''(0)` from four points, second order.
fn forward_second_derivative(a: &[f64], dt: f64) -> f64 {
    (2.0 * a[0] - 5.0 * a[1] + 4.0 * a[2] - a[3]) / (dt * dt)
}

/// `a'(t_k)`: central differences inside, the mirrored four-point stencil at the end.
fn derivative_at(a: &[f64], k: usize, dt: f64) -> f64 {
    let n = a.len() - 1;
    if k == 0 {
        forward_derivative(a, dt)
    } else if k < n {
        (a[k + 1] - a[k - 1]) / (2.0 * dt)
    } else {
        (11.0 * a[n] - 18.0 * a[n - 1] + 9.0 * a[n - 2] - 2.0 * a[n - 3]) / (6.0 * dt)
    }
}

/// Recovers the kernel from a sampled signal with default options.
pub fn extract_kernel(a: &Signal) -> Result<KernelModel> {
    extract_kernel_with(a, &ExtractionOptions::default())
}

/// Recovers `(beta, K)` from `a`.
///
/// The convolution vanishes at `t = 0+`, so a nonzero initial slope can only
/// come from the delta part: `beta = max(0, -a'(0)/a(0))`. Differentiating
/// once more gives `K(0) = -(a''(0) + beta a'(0)) / a(0)`. The remaining
/// samples follow from the trapezoidal first-kind equation
///
/// ```text
/// a'_k + beta a_k = -dt (K_0 a_k / 2 + sum_{m=1}^{k-1} K_m a_{k-m} + K_k a_0 / 2)
/// ```
///
/// solved for `K_k` one lag at a time.
pub fn extract_kernel_with(a: &Signal, options: &ExtractionOptions) -> Result<KernelModel> {
    let v = a.values();
    let a0 = v[0];
    if a0.abs() < MIN_INITIAL_VALUE {
        return Err(Error::SignalStartsAtZero { a0 });
    }
    if v.len() < 4 {
        return Err(Error::input(format!("kernel extraction needs at least 4 samples, got {}", v.len())));
    }
    let dt = a.grid().dt();
    let slope = forward_derivative(v, dt);
    let beta = (-slope / a0).max(0.0);
    let k0 = -(forward_second_derivative(v, dt) + beta * slope) / a0;
    let bound = 1e6 * k0.abs() + 1e6;

    let mut last = v.len() - 1;
    if let Some(floor) = options.truncation_floor {
        if let Some(k) = v.iter().position(|x| x.abs() < floor * a0.abs()) {
            last = k.max(3);
        }
    }
    let mut kernel = Vec::with_capacity(last + 1);
    kernel.push(k0);
    for k in 1..=last {
        let mut history = 0.5 * k0 * v[k];
        for m in 1..k {
            history += kernel[m] * v[k - m];
        }
        let lhs = derivative_at(v, k, dt) + beta * v[k];
        let value = 2.0 * (-lhs / dt - history) / a0;
        if value.is_nan() || value.abs() > bound {
            return Err(Error::ExtractionUnstable { index: k, value });
        }
        kernel.push(value);
    }
    KernelModel::new(beta, Signal::new(a.grid().truncated(last), kernel)?)
}

/// `K(tau) e^{-gamma tau}`; the delta weight is untouched since `e^0 = 1`.
pub fn damp_kernel(kernel: &KernelModel, gamma: f64) -> Result<KernelModel> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::input(format!("damping rate must be non-negative, got {gamma}")));
    }
    let grid = *kernel.smooth.grid();
    let damped = kernel
        .smooth
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| v * (-gamma * grid.time(k)).exp())
        .collect();
    KernelModel::new(kernel.delta_weight, Signal::new(grid, damped)?)
}

/// Decohered dynamics from the damped kernel of `a`.
pub fn predict_scheme(a: &Signal, gamma: f64) -> Result<Signal> {
    predict_scheme_with(a, gamma, &ExtractionOptions::default())
}

pub fn predict_scheme_with(a: &Signal, gamma: f64, options: &ExtractionOptions) -> Result<Signal> {
    let kernel = damp_kernel(&extract_kernel_with(a, options)?, gamma)?;
    solve_volterra(&kernel, a.first(), a.grid())
}

/// `int_0^1 e^{-x s} (1 - s) ds` and `int_0^1 e^{-x s} s ds`.
fn exponential_trapezoid_weights(x: f64) -> (f64, f64) {
    if x < 1e-4 {
        (0.5 - x / 6.0 + x * x / 24.0, 0.5 - x / 3.0 + x * x / 8.0)
    } else {
        let e = (-x).exp();
        ((x - 1.0 + e) / (x * x), (1.0 - e - x * e) / (x * x))
    }
}

/// Solves `a~(t) = a(t) e^{-gamma t} + gamma int_0^t a~(t') g(t-t') e^{-gamma(t-t')} dt'`
/// by forward substitution.
///
/// Product trapezoidal weights: `a~ g` is interpolated linearly per step and
/// integrated exactly against `e^{-gamma tau}`, so the error stays `O(dt^2)`
/// with a constant independent of `gamma dt`.
pub fn predict_integral(a: &Signal, g: &Signal, gamma: f64) -> Result<Signal> {
    a.grid().ensure_same(g.grid())?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::input(format!("damping rate must be non-negative, got {gamma}")));
    }
    let grid = a.grid();
    let dt = grid.dt();
    let gv = g.values();
    let ratio = 0.5 * gamma * dt * gv[0];
    if ratio >= 1.0 {
        return Err(Error::StepTooLarge { ratio });
    }
    let x = gamma * dt;
    let (w0, w1) = exponential_trapezoid_weights(x);
    // lag weights: c_0 = w0, c_j = e^{-x(j-1)} (e^{-x} w0 + w1), end node e^{-x(k-1)} w1
    let len = a.len();
    let decay: Vec<f64> = (0..len).map(|j| (-x * j as f64).exp()).collect();
    let interior: Vec<f64> = (0..len).map(|j| if j == 0 { w0 } else { decay[j - 1] * (decay[1] * w0 + w1) }).collect();
    let weighted: Vec<f64> = gv.iter().zip(&interior).map(|(g, c)| g * c).collect();
    let av = a.values();
    let mut out = Vec::with_capacity(len);
    out.push(av[0]);
    let diag = 1.0 - x * weighted[0];
    for k in 1..len {
        let mut conv = out[0] * gv[k] * decay[k - 1] * w1;
        for m in 1..k {
            conv += out[m] * weighted[k - m];
        }
        let source = av[k] * decay[k];
        out.push((source + x * conv) / diag);
    }
    Signal::new(*grid, out)
}

/// `K(0) = Tr{A [H, [H, A]]} / Tr{A^2}`.
///
/// With `C = [H, A]` anti-Hermitian, `Tr{A [H, C]} = -Tr{C^2} = ||C||_F^2`,
/// so the value is a ratio of Frobenius norms and never negative.
pub fn mori_initial_value(h: &ComplexMatrix, a: &ComplexMatrix) -> Result<f64> {
    if h.nrows() != a.nrows() || h.ncols() != a.ncols() || h.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), found: a.nrows() });
    }
    let norm = a.frobenius_norm_sq();
    if norm <= MIN_OBSERVABLE_NORM {
        return Err(Error::ZeroNormObservable { norm });
    }
    let commutator = h.mul(a).sub(&a.mul(h));
    Ok(commutator.frobenius_norm_sq() / norm)
}

/// [`mori_initial_value`] in the energy basis: `sum (E_m - E_n)^2 a_mn^2 / sum a_mn^2`.
pub fn mori_initial_value_spectral(spectrum: &Spectrum, observable: &EthObservable) -> Result<f64> {
    if spectrum.dimension() != observable.dimension() {
        return Err(Error::DimensionMismatch { expected: spectrum.dimension(), found: observable.dimension() });
    }
    let norm = observable.norm_sq();
    if norm <= MIN_OBSERVABLE_NORM {
        return Err(Error::ZeroNormObservable { norm });
    }
    let e = spectrum.energies();
    let m = observable.matrix();
    let mut sum = 0.0;
    for col in 0..e.len() {
        for row in 0..e.len() {
            let w = e[row] - e[col];
            sum += w * w * m[(row, col)] * m[(row, col)];
        }
    }
    Ok(sum / norm)
}

/// Strong-dephasing form `a0 exp(-k0 t / gamma)`.
///
/// Meaningful for `gamma^2 >> k0`; below [`ZENO_RATIO`] a warning is logged.
pub fn zeno_approximation(k0: f64, gamma: f64, a0: f64, grid: &TimeGrid) -> Result<Signal> {
    if !(gamma > 0.0 && k0 >= 0.0) {
        return Err(Error::input(format!("need gamma > 0 and K(0) >= 0, got {gamma} and {k0}")));
    }
    if gamma * gamma < ZENO_RATIO * k0 * (1.0 - 1e-9) {
        log::warn!("gamma^2 = {} is below {ZENO_RATIO} K(0) = {}; the Zeno form is rough here", gamma * gamma, ZENO_RATIO * k0);
    }
    Signal::from_fn(*grid, |t| a0 * (-k0 * t / gamma).exp())
}

/// A Laplace-domain sample `F(s)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LaplacePoint {
    pub s: Complex64,
    pub value: Complex64,
}

impl LaplacePoint {
    pub fn new(s: Complex64, value: Complex64) -> Result<Self> {
        check_frequency(s)?;
        Ok(Self { s, value })
    }
}

fn check_frequency(s: Complex64) -> Result<()> {
    if !(s.re > 0.0 && s.im.is_finite()) {
        return Err(Error::input(format!("Laplace frequency needs Re(s) > 0, got {s}")));
    }
    Ok(())
}

/// Trapezoidal `int_0^T e^{-st} a(t) dt` over the signal's horizon `T`.
///
/// The neglected tail is bounded by `e^{-Re(s) T} max|a| / Re(s)`; a warning
/// is logged when `Re(s) T` falls below [`LAPLACE_WINDOW`].
pub fn laplace_of_signal(a: &Signal, s: Complex64) -> Result<LaplacePoint> {
    check_frequency(s)?;
    let grid = a.grid();
    if s.re * grid.horizon() < LAPLACE_WINDOW {
        log::warn!("Re(s) * horizon = {} < {LAPLACE_WINDOW}; truncation error is not negligible", s.re * grid.horizon());
    }
    let v = a.values();
    let last = v.len() - 1;
    let mut sum = Complex64::new(0.0, 0.0);
    for (k, &x) in v.iter().enumerate() {
        let w = if k == 0 || k == last { 0.5 } else { 1.0 };
        sum += w * x * (-s * grid.time(k)).exp();
    }
    LaplacePoint::new(s, sum * grid.dt())
}

/// `kappa(s) = (a(0) - s A(s)) / A(s)`, the transform of the full kernel.
pub fn kernel_transform(a: &Signal, s: Complex64) -> Result<LaplacePoint> {
    let big_a = laplace_of_signal(a, s)?.value;
    LaplacePoint::new(s, (a.first() - s * big_a) / big_a)
}

/// Transform of a [`KernelModel`]: `beta + int_0^T e^{-s tau} K(tau) d tau`.
pub fn kernel_model_transform(kernel: &KernelModel, s: Complex64) -> Result<LaplacePoint> {
    let smooth = laplace_of_signal(kernel.smooth(), s)?.value;
    LaplacePoint::new(s, smooth + kernel.delta_weight)
}

/// `max_s |kappa~(s) - kappa(s + gamma)| / (|kappa(s + gamma)| + 1e-12)`,
/// with `kappa` taken from `a` and `kappa~` from `a_tilde`.
pub fn check_laplace_shift(a: &Signal, a_tilde: &Signal, gamma: f64, samples: &[Complex64]) -> Result<f64> {
    a.grid().ensure_same(a_tilde.grid())?;
    let mut worst = 0.0f64;
    for &s in samples {
        let shifted = kernel_transform(a, s + gamma)?.value;
        let damped = kernel_transform(a_tilde, s)?.value;
        worst = worst.max((damped - shifted).norm() / (shifted.norm() + 1e-12));
    }
    Ok(worst)
}

/// `count` real frequencies spaced geometrically over `[LAPLACE_WINDOW / horizon, upper]`.
pub fn laplace_samples(horizon: f64, upper: f64, count: usize) -> Result<Vec<Complex64>> {
    let lower = LAPLACE_WINDOW / horizon;
    if !(lower > 0.0 && upper > lower && count >= 2) {
        return Err(Error::input(format!("empty Laplace window [{lower}, {upper}] or count {count} < 2")));
    }
    let ratio = (upper / lower).powf(1.0 / (count - 1) as f64);
    Ok((0..count).map(|k| Complex64::new(lower * ratio.powi(k as i32), 0.0)).collect())
}

/// Rate `r` of the least-squares fit `ln|a(t)| ~ c - r t` over `t <= until`.
pub fn fit_decay_rate(a: &Signal, until: f64) -> Result<f64> {
    let grid = a.grid();
    let floor = 1e-12 * a.max_abs();
    let points: Vec<(f64, f64)> = a
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| (grid.time(k), *v))
        .take_while(|(t, _)| *t <= until + 1e-9 * grid.dt())
        .filter(|(_, v)| v.abs() > floor)
        .map(|(t, v)| (t, v.abs().ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::input("decay fit needs at least two non-zero samples"));
    }
    let n = points.len() as f64;
    let (mt, my) = points.iter().fold((0.0, 0.0), |(st, sy), (t, y)| (st + t / n, sy + y / n));
    let (cov, var) = points
        .iter()
        .fold((0.0, 0.0), |(c, v), (t, y)| (c + (t - mt) * (y - my), v + (t - mt) * (t - mt)));
    Ok(-cov / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{damped_oscillator, two_level, TWO_LEVEL_K0};
    use crate::closed_dynamics::autocorrelation;
    use crate::open_dynamics::hamiltonian_in_observable_basis;
    use crate::spectral_model::{Ensemble, EthEnsembleConfig, ReferenceFunction, ReferenceKind};
    use faer::Mat;
    use proptest::prelude::*;

    fn constant(grid: TimeGrid, value: f64) -> Signal {
        Signal::from_fn(grid, |_| value).unwrap()
    }

    fn cos2(grid: TimeGrid) -> Signal {
        Signal::from_fn(grid, |t| (2.0 * t).cos()).unwrap()
    }

    #[test]
    fn zero_kernel_keeps_signal_constant() {
        let grid = TimeGrid::new(0.01, 100).unwrap();
        let k = KernelModel::new(0.0, constant(grid, 0.0)).unwrap();
        let a = solve_volterra(&k, 1.0, &grid).unwrap();
        assert!(a.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_kernel_gives_cosine() {
        let grid = TimeGrid::new(1e-3, 10_000).unwrap();
        let k = KernelModel::new(0.0, constant(grid, 4.0)).unwrap();
        let a = solve_volterra(&k, 1.0, &grid).unwrap();
        let err = a.max_abs_diff(&cos2(grid)).unwrap();
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn delta_kernel_gives_exponential() {
        let beta = 0.3;
        let grid = TimeGrid::new(1e-2, 2000).unwrap();
        let a = solve_volterra(&KernelModel::delta(beta, grid).unwrap(), 1.0, &grid).unwrap();
        let exact = Signal::from_fn(grid, |t| (-beta * t).exp()).unwrap();
        // Crank-Nicolson on y' = -beta y: error ~ t beta^3 dt^2 / 12 e^{-beta t}
        assert!(a.max_abs_diff(&exact).unwrap() < 1e-6);
    }

    #[test]
    fn kernel_grid_spacing_must_match() {
        let k = KernelModel::delta(1.0, TimeGrid::new(0.1, 10).unwrap()).unwrap();
        assert!(matches!(
            solve_volterra(&k, 1.0, &TimeGrid::new(0.05, 10).unwrap()),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn exponential_extracts_to_delta() {
        let beta = 0.2;
        let grid = TimeGrid::new(1.0 / beta / 500.0, 2500).unwrap();
        let a = Signal::from_fn(grid, |t| (-beta * t).exp()).unwrap();
        let k = extract_kernel(&a).unwrap();
        assert!((k.delta_weight() - beta).abs() < 1e-6 * beta, "{}", k.delta_weight());
        let worst = k.smooth().max_abs();
        assert!(worst <= 1e-3 * beta, "{worst}");
    }

    #[test]
    fn cosine_extracts_to_constant() {
        let grid = TimeGrid::new(1e-3, 3000).unwrap();
        let k = extract_kernel(&cos2(grid)).unwrap();
        assert!(k.delta_weight().abs() < 1e-6);
        let dev = k.smooth().max_abs_diff_until(&constant(grid, 4.0), 1.0).unwrap();
        assert!(dev < 1e-3, "{dev}");
    }

    #[test]
    fn extraction_errors() {
        let grid = TimeGrid::new(0.1, 10).unwrap();
        assert!(matches!(
            extract_kernel(&constant(grid, 1e-7)),
            Err(Error::SignalStartsAtZero { .. })
        ));
        // a jump after t = 0 needs a runaway kernel
        let mut v = vec![1.0; 11];
        v[6] = 1e9;
        let a = Signal::new(grid, v).unwrap();
        assert!(matches!(extract_kernel(&a), Err(Error::ExtractionUnstable { .. })));
    }

    #[test]
    fn truncation_floor_shortens_kernel() {
        let grid = TimeGrid::new(0.01, 1000).unwrap();
        let a = Signal::from_fn(grid, |t| (-t * t).exp()).unwrap();
        let opts = ExtractionOptions { truncation_floor: Some(1e-2) };
        let k = extract_kernel_with(&a, &opts).unwrap();
        let cut = a.values().iter().position(|v| v.abs() < 1e-2).unwrap();
        assert_eq!(k.smooth().len(), cut + 1);
    }

    fn round_trip_error(g: &ReferenceFunction, dt: f64, horizon: f64) -> f64 {
        let grid = TimeGrid::covering(dt, horizon).unwrap();
        let a = g.sample(&grid);
        let back = solve_volterra(&extract_kernel(&a).unwrap(), 1.0, &grid).unwrap();
        back.max_abs_diff(&a).unwrap()
    }

    #[test]
    fn round_trip_is_second_order_for_smooth_signals() {
        let g = ReferenceFunction::standard(ReferenceKind::Oscillation);
        let coarse = round_trip_error(&g, 0.05, 30.0);
        let fine = round_trip_error(&g, 0.025, 30.0);
        let ratio = coarse / fine;
        assert!((3.0..=5.0).contains(&ratio), "{coarse} / {fine} = {ratio}");
    }

    #[test]
    fn damping_rules() {
        let grid = TimeGrid::new(0.01, 200).unwrap();
        let k = KernelModel::new(0.7, constant(grid, 4.0)).unwrap();
        assert_eq!(damp_kernel(&k, 0.0).unwrap(), k);
        let d = damp_kernel(&k, 2.0).unwrap();
        assert_eq!(d.delta_weight(), 0.7);
        for (j, v) in d.smooth().values().iter().enumerate() {
            assert!((v - 4.0 * (-2.0 * grid.time(j)).exp()).abs() < 1e-15);
        }
        let delta = KernelModel::delta(0.3, grid).unwrap();
        assert_eq!(damp_kernel(&delta, 5.0).unwrap(), delta);
        assert!(damp_kernel(&k, -1.0).is_err());
    }

    #[test]
    fn both_routes_give_damped_oscillator_for_two_level() {
        let grid = TimeGrid::new(1e-3, 10_000).unwrap();
        let a = cos2(grid);
        for &gamma in &[0.5, 1.0, 2.0, 20.0] {
            let exact = damped_oscillator(1.0, gamma, &grid);
            let scheme = predict_scheme(&a, gamma).unwrap();
            let integral = predict_integral(&a, &a, gamma).unwrap();
            assert!(scheme.max_abs_diff(&exact).unwrap() <= 1e-4, "gamma {gamma}");
            assert!(integral.max_abs_diff(&exact).unwrap() <= 1e-4, "gamma {gamma}");
            assert!(scheme.max_abs_diff(&integral).unwrap() <= 1e-4, "gamma {gamma}");
        }
    }

    #[test]
    fn integral_route_is_second_order_at_strong_damping() {
        let err = |dt: f64| {
            let grid = TimeGrid::covering(dt, 2.0).unwrap();
            let a = cos2(grid);
            predict_integral(&a, &a, 20.0).unwrap().max_abs_diff(&damped_oscillator(1.0, 20.0, &grid)).unwrap()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn exponential_weights_match_quadrature() {
        for x in [0.0, 1e-6, 1e-3, 0.4, 7.0] {
            let (w0, w1) = exponential_trapezoid_weights(x);
            let n = 20_000;
            let (mut q0, mut q1) = (0.0, 0.0);
            for k in 0..n {
                let s = (k as f64 + 0.5) / n as f64;
                q0 += (-x * s).exp() * (1.0 - s) / n as f64;
                q1 += (-x * s).exp() * s / n as f64;
            }
            assert!((w0 - q0).abs() < 1e-9 && (w1 - q1).abs() < 1e-9, "x {x}");
        }
    }

    #[test]
    fn undamped_integral_returns_input() {
        let grid = TimeGrid::new(0.05, 100).unwrap();
        let a = Signal::from_fn(grid, |t| (0.3 * t).sin() + 0.5).unwrap();
        assert_eq!(predict_integral(&a, &cos2(grid), 0.0).unwrap(), a);
    }

    #[test]
    fn integral_rejects_large_steps() {
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let g = constant(grid, 1.0);
        assert!(matches!(predict_integral(&g, &g, 4.0), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn exponential_is_stable_under_both_routes() {
        let beta = std::f64::consts::LN_2 / 10.0;
        let grid = TimeGrid::new(0.05, 600).unwrap();
        let a = Signal::from_fn(grid, |t| (-beta * t).exp()).unwrap();
        for &gamma in &[0.1 * beta, beta, 10.0 * beta] {
            assert!(predict_scheme(&a, gamma).unwrap().max_abs_diff(&a).unwrap() < 1e-5);
            assert!(predict_integral(&a, &a, gamma).unwrap().max_abs_diff(&a).unwrap() < 1e-3);
        }
    }

    #[test]
    fn mori_values() {
        let sys = two_level();
        let h = hamiltonian_in_observable_basis(&sys.spectrum, &sys.observable).unwrap();
        let a = ComplexMatrix::from_real(Mat::from_fn(2, 2, |i, j| if i == j { sys.observable.eigenvalues()[i] } else { 0.0 }));
        assert!((mori_initial_value(&h, &a).unwrap() - TWO_LEVEL_K0).abs() < 1e-13);
        assert!((mori_initial_value_spectral(&sys.spectrum, &sys.observable).unwrap() - TWO_LEVEL_K0).abs() < 1e-13);
        // commuting pair
        let d = ComplexMatrix::from_real(Mat::from_fn(3, 3, |i, j| if i == j { i as f64 } else { 0.0 }));
        assert_eq!(mori_initial_value(&d, &d).unwrap(), 0.0);
        assert!(matches!(
            mori_initial_value(&d, &ComplexMatrix::zeros(3)),
            Err(Error::ZeroNormObservable { .. })
        ));
    }

    #[test]
    fn mori_forms_agree_on_an_ensemble() {
        let g = ReferenceFunction::standard(ReferenceKind::Recurrence);
        let ens = Ensemble::generate(&EthEnsembleConfig::new(60, g, 8)).unwrap();
        let h = hamiltonian_in_observable_basis(&ens.spectrum, &ens.observable).unwrap();
        let ev = ens.observable.eigenvalues();
        let a = ComplexMatrix::from_real(Mat::from_fn(60, 60, |i, j| if i == j { ev[i] } else { 0.0 }));
        let direct = mori_initial_value(&h, &a).unwrap();
        let spectral = mori_initial_value_spectral(&ens.spectrum, &ens.observable).unwrap();
        assert!((direct - spectral).abs() < 1e-9 * spectral);
    }

    #[test]
    fn mori_matches_extracted_autocorrelation_kernel() {
        let g = ReferenceFunction::standard(ReferenceKind::Recurrence);
        let ens = Ensemble::generate(&EthEnsembleConfig::new(300, g, 3)).unwrap();
        let grid = TimeGrid::new(2e-3, 200).unwrap();
        let c = autocorrelation(&ens.spectrum, &ens.observable, &grid).unwrap();
        let k = extract_kernel(&c).unwrap();
        let mori = mori_initial_value_spectral(&ens.spectrum, &ens.observable).unwrap();
        assert!(k.delta_weight() < 1e-2 * k.initial_value());
        assert!((k.initial_value() - mori).abs() < 0.05 * mori, "{} vs {mori}", k.initial_value());
    }

    #[test]
    fn zeno_form() {
        let grid = TimeGrid::new(0.1, 100).unwrap();
        let z = zeno_approximation(4.0, 20.0, 1.0, &grid).unwrap();
        let exact = Signal::from_fn(grid, |t| (-0.2 * t).exp()).unwrap();
        assert!(z.max_abs_diff(&exact).unwrap() < 1e-15);
        let frozen = zeno_approximation(4.0, 1e12, 0.7, &grid).unwrap();
        assert!(frozen.max_abs_diff(&constant(grid, 0.7)).unwrap() < 1e-9);
        assert!(zeno_approximation(4.0, 0.0, 1.0, &grid).is_err());
    }

    #[test]
    fn laplace_transforms() {
        let grid = TimeGrid::new(1e-3, 20_000).unwrap();
        let horizon = grid.horizon();
        let s = Complex64::new(0.8, 0.0);
        let one = laplace_of_signal(&constant(grid, 1.0), s).unwrap().value;
        let exact = (1.0 - (-s * horizon).exp()) / s;
        assert!((one - exact).norm() < 1e-6);
        let beta = 0.5;
        let e = Signal::from_fn(grid, |t| (-beta * t).exp()).unwrap();
        let le = laplace_of_signal(&e, s).unwrap().value;
        assert!((le - 1.0 / (s + beta)).norm() < (-s.re * horizon).exp() / s.re + 1e-6);
        let kappa = kernel_transform(&cos2(grid), Complex64::new(2.0, 0.0)).unwrap().value;
        assert!((kappa.re - 2.0).abs() < 0.01 * 2.0, "{kappa}");
        assert!(laplace_of_signal(&e, Complex64::new(0.0, 1.0)).is_err());
    }

    #[test]
    fn laplace_shift_is_trivial_without_damping() {
        let grid = TimeGrid::new(0.01, 2000).unwrap();
        let a = cos2(grid);
        let samples = laplace_samples(grid.horizon(), 2.0, 5).unwrap();
        assert_eq!(check_laplace_shift(&a, &a, 0.0, &samples).unwrap(), 0.0);
    }

    #[test]
    fn laplace_shift_holds_for_scheme_output() {
        let grid = TimeGrid::new(1e-3, 10_000).unwrap();
        let a = cos2(grid);
        let samples = laplace_samples(grid.horizon(), 1.0, 5).unwrap();
        let gamma = 1.0;
        let a_tilde = predict_scheme(&a, gamma).unwrap();
        let dev = check_laplace_shift(&a, &a_tilde, gamma, &samples).unwrap();
        assert!(dev <= 0.02, "{dev}");
    }

    #[test]
    fn kernel_model_transform_of_constant() {
        let grid = TimeGrid::new(1e-3, 20_000).unwrap();
        let k = KernelModel::new(0.5, constant(grid, 4.0)).unwrap();
        let s = Complex64::new(2.0, 0.0);
        let v = kernel_model_transform(&k, s).unwrap().value;
        assert!((v.re - (0.5 + 2.0)).abs() < 1e-6);
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let grid = TimeGrid::new(0.01, 1000).unwrap();
        let a = Signal::from_fn(grid, |t| 3.0 * (-0.37 * t).exp()).unwrap();
        assert!((fit_decay_rate(&a, 10.0).unwrap() - 0.37).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn solve_then_extract_recovers_kernel(
            beta in 0.0f64..0.5,
            k0 in 0.5f64..4.0,
            decay in 0.1f64..1.0,
        ) {
            // smooth kernels K(tau) = k0 e^{-decay tau} on [0, 10]
            let err = |dt: f64| {
                let grid = TimeGrid::covering(dt, 10.0).unwrap();
                let smooth = Signal::from_fn(grid, |t| k0 * (-decay * t).exp()).unwrap();
                let kernel = KernelModel::new(beta, smooth).unwrap();
                let a = solve_volterra(&kernel, 1.0, &grid).unwrap();
                let back = extract_kernel(&a).unwrap();
                let dk = back.smooth().max_abs_diff(kernel.smooth()).unwrap();
                (dk, (back.delta_weight() - beta).abs())
            };
            let (coarse, dbeta) = err(0.02);
            let (fine, _) = err(0.01);
            prop_assert!(dbeta < 1e-3);
            prop_assert!(fine < coarse || fine < 1e-9);
            prop_assert!(coarse < 0.05 * k0);
        }

        #[test]
        fn integral_route_is_linear_in_the_source(
            scale in -2.0f64..2.0,
            gamma in 0.0f64..2.0,
        ) {
            let grid = TimeGrid::new(0.05, 200).unwrap();
            let g = ReferenceFunction::standard(ReferenceKind::Oscillation).sample(&grid);
            let base = predict_integral(&g, &g, gamma).unwrap();
            let scaled = predict_integral(&g.scaled(scale).unwrap(), &g, gamma).unwrap();
            prop_assert!(scaled.max_abs_diff(&base.scaled(scale).unwrap()).unwrap() < 1e-12);
        }

        #[test]
        fn damping_never_grows_the_kernel(gamma in 0.0f64..5.0, beta in 0.0f64..1.0) {
            let grid = TimeGrid::new(0.1, 50).unwrap();
            let k = KernelModel::new(beta, Signal::from_fn(grid, |t| (t * 1.3).cos()).unwrap()).unwrap();
            let d = damp_kernel(&k, gamma).unwrap();
            prop_assert_eq!(d.delta_weight(), beta);
            for (x, y) in d.smooth().values().iter().zip(k.smooth().values()) {
                prop_assert!(x.abs() <= y.abs());
            }
        }
    }
}
