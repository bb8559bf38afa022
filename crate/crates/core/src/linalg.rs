//! Dense linear-algebra helpers on top of `faer`.
//!
//! Complex matrices are stored as a pair of real matrices. Every Hamiltonian
//! and observable in this crate is real symmetric, so keeping the imaginary
//! part separate lets the hot loops run on real GEMMs only.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// All dense kernels run sequentially so that results are bit-reproducible
/// regardless of the worker pool that drives them.
pub(crate) const PAR: Par = Par::Seq;

/// `dst = lhs * rhs` (or `dst += alpha * lhs * rhs` with `Accum::Add`).
pub(crate) fn gemm(dst: &mut Mat<f64>, accum: Accum, lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>, alpha: f64) {
    matmul(dst.as_mut(), accum, lhs, rhs, alpha, PAR);
}

pub(crate) fn product(lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(lhs.nrows(), rhs.ncols());
    gemm(&mut out, Accum::Replace, lhs, rhs, 1.0);
    out
}

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending,
/// eigenvectors as columns.
pub fn symmetric_eigen(m: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    check_square(m)?;
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let values = evd.S().column_vector().iter().copied().collect();
    Ok((values, evd.U().to_owned()))
}

pub fn symmetric_eigenvalues(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    check_square(m)?;
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))
}

fn check_square(m: MatRef<'_, f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    Ok(())
}

/// Evaluates `sum_{m,n} B_mn cos((E_m - E_n) t)` for every `t` in `times`.
///
/// With `c_m = cos(E_m t)` and `s_m = sin(E_m t)` the sum is
/// `c^T B c + s^T B s`, so a block of time points reduces to two GEMMs.
pub fn phase_quadratic_form(b: MatRef<'_, f64>, energies: &[f64], times: &[f64]) -> Result<Vec<f64>> {
    check_square(b)?;
    let n = b.nrows();
    if energies.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: energies.len() });
    }
    const BLOCK: usize = 256;
    let mut out = Vec::with_capacity(times.len());
    let mut bc = Mat::<f64>::zeros(n, 0);
    let mut bs = Mat::<f64>::zeros(n, 0);
    for chunk in times.chunks(BLOCK) {
        let cols = chunk.len();
        let cos = Mat::from_fn(n, cols, |m, k| (energies[m] * chunk[k]).cos());
        let sin = Mat::from_fn(n, cols, |m, k| (energies[m] * chunk[k]).sin());
        bc.resize_with(n, cols, |_, _| 0.0);
        bs.resize_with(n, cols, |_, _| 0.0);
        gemm(&mut bc, Accum::Replace, b, cos.as_ref(), 1.0);
        gemm(&mut bs, Accum::Replace, b, sin.as_ref(), 1.0);
        for k in 0..cols {
            let value: f64 = cos
                .col_as_slice(k)
                .iter()
                .zip(bc.col_as_slice(k))
                .chain(sin.col_as_slice(k).iter().zip(bs.col_as_slice(k)))
                .map(|(x, y)| x * y)
                .sum();
            out.push(value);
        }
    }
    Ok(out)
}

/// Dense complex matrix stored as real and imaginary parts.
#[derive(Clone, Debug)]
pub struct ComplexMatrix {
    re: Mat<f64>,
    im: Mat<f64>,
    real: bool,
}

impl ComplexMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { re: Mat::zeros(n, n), im: Mat::zeros(n, n), real: true }
    }

    pub fn from_real(re: Mat<f64>) -> Self {
        let (r, c) = (re.nrows(), re.ncols());
        Self { re, im: Mat::zeros(r, c), real: true }
    }

    pub fn from_parts(re: Mat<f64>, im: Mat<f64>) -> Result<Self> {
        if re.nrows() != im.nrows() || re.ncols() != im.ncols() {
            return Err(Error::DimensionMismatch { expected: re.nrows(), found: im.nrows() });
        }
        let real = (0..im.ncols()).all(|j| im.col_as_slice(j).iter().all(|&x| x == 0.0));
        Ok(Self { re, im, real })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let re = Mat::from_fn(n, n, |i, j| f(i, j).re);
        let im = Mat::from_fn(n, n, |i, j| f(i, j).im);
        Self::from_parts(re, im).expect("square by construction")
    }

    pub fn nrows(&self) -> usize {
        self.re.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.re.ncols()
    }

    /// True when the imaginary part is identically zero.
    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn re(&self) -> MatRef<'_, f64> {
        self.re.as_ref()
    }

    pub fn im(&self) -> MatRef<'_, f64> {
        self.im.as_ref()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.re[(i, j)], self.im[(i, j)])
    }

    pub fn adjoint(&self) -> Self {
        let re = self.re.transpose().to_owned();
        let im = Mat::from_fn(self.ncols(), self.nrows(), |i, j| -self.im[(j, i)]);
        Self { re, im, real: self.real }
    }

    pub fn mul(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let (n, m) = (self.nrows(), rhs.ncols());
        let mut re = Mat::zeros(n, m);
        let mut im = Mat::zeros(n, m);
        gemm(&mut re, Accum::Replace, self.re(), rhs.re(), 1.0);
        if !rhs.real {
            gemm(&mut im, Accum::Replace, self.re(), rhs.im(), 1.0);
        }
        if !self.real {
            gemm(&mut im, Accum::Add, self.im(), rhs.re(), 1.0);
            if !rhs.real {
                gemm(&mut re, Accum::Add, self.im(), rhs.im(), -1.0);
            }
        }
        ComplexMatrix { re, im, real: self.real && rhs.real }
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            re: &self.re - &rhs.re,
            im: &self.im - &rhs.im,
            real: self.real && rhs.real,
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.nrows().min(self.ncols())).map(|j| self.get(j, j)).sum()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        let sq = |m: &Mat<f64>| -> f64 { (0..m.ncols()).map(|j| m.col_as_slice(j).iter().map(|x| x * x).sum::<f64>()).sum() };
        sq(&self.re) + sq(&self.im)
    }

    /// Largest `|M_ij - conj(M_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.nrows();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..=j {
                let d = self.get(i, j) - self.get(j, i).conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    /// Eigenvalues of a Hermitian matrix, ascending.
    ///
    /// `re + i im` is Hermitian exactly when `[[re, -im], [im, re]]` is real
    /// symmetric; the latter carries every eigenvalue twice.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        if self.real {
            return symmetric_eigenvalues(self.re());
        }
        let n = self.nrows();
        let big = Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, true) => self.re[(i, j)],
            (true, false) => -self.im[(i, j - n)],
            (false, true) => self.im[(i - n, j)],
            (false, false) => self.re[(i - n, j - n)],
        });
        let doubled = symmetric_eigenvalues(big.as_ref())?;
        Ok(doubled.into_iter().step_by(2).collect())
    }

    /// `exp(-i H t)` for a Hermitian `H = self`.
    pub fn unitary_propagator(&self, t: f64) -> Result<ComplexMatrix> {
        let n = self.nrows();
        let (values, vectors) = if self.real {
            let (values, q) = symmetric_eigen(self.re())?;
            (values, ComplexMatrix::from_real(q))
        } else {
            let h = Mat::<num_complex::Complex<f64>>::from_fn(n, n, |i, j| self.get(i, j));
            let evd = h
                .as_ref()
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::Eigen(format!("{e:?}")))?;
            let values: Vec<f64> = evd.S().column_vector().iter().map(|z| z.re).collect();
            let u = evd.U();
            (values, ComplexMatrix::from_fn(n, |i, j| u[(i, j)]))
        };
        let phases: Vec<Complex64> = values.iter().map(|&e| Complex64::from_polar(1.0, -e * t)).collect();
        let scaled = ComplexMatrix::from_fn(n, |i, j| vectors.get(i, j) * phases[j]);
        Ok(scaled.mul(&vectors.adjoint()))
    }
}

/// `Q^T diag(d) Q` for an orthogonal `Q` (columns = basis vectors).
pub(crate) fn rotate_diagonal(q: MatRef<'_, f64>, d: &[f64]) -> Mat<f64> {
    let n = q.nrows();
    let scaled = Mat::from_fn(n, q.ncols(), |i, j| q[(i, j)] * d[i]);
    product(q.transpose(), scaled.as_ref())
}
