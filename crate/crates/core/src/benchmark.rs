//! The two-level system `H = sigma_x`, `A = sigma_z`.
//!
//! In the eigenbasis of `sigma_x` (energies -1, +1) the observable reads
//! `[[0, 1], [1, 0]]`. Every diagonal state satisfies the relaxation
//! collapse exactly with `g(t) = cos(2t)`, and under dephasing of rate
//! `gamma` the expectation value obeys `z'' + gamma z' + 4 z = 0`.

use faer::Mat;

use crate::signal::{Signal, TimeGrid};
use crate::spectral_model::{EthObservable, Spectrum};

#[derive(Clone, Debug)]
pub struct TwoLevel {
    pub spectrum: Spectrum,
    pub observable: EthObservable,
}

impl TwoLevel {
    /// Index of the `A` eigenstate with eigenvalue `a` (+1 or -1).
    pub fn level_of(&self, a: f64) -> usize {
        if a > 0.0 {
            1
        } else {
            0
        }
    }
}

pub fn two_level() -> TwoLevel {
    let spectrum = Spectrum::new(vec![-1.0, 1.0], 1.0).expect("valid spectrum");
    let matrix = Mat::from_fn(2, 2, |i, j| if i != j { 1.0 } else { 0.0 });
    let observable = EthObservable::from_matrix(matrix).expect("sigma_z is non-degenerate");
    TwoLevel { spectrum, observable }
}

/// `K(0) = Tr{A[H,[H,A]]}/Tr{A^2}` for this system.
pub const TWO_LEVEL_K0: f64 = 4.0;

/// Closed-form solution of `z'' + gamma z' + 4 z = 0`, `z(0) = z0`, `z'(0) = 0`.
pub fn damped_oscillator(z0: f64, gamma: f64, grid: &TimeGrid) -> Signal {
    let w0_sq = TWO_LEVEL_K0;
    let disc = gamma * gamma / 4.0 - w0_sq;
    let half = gamma / 2.0;
    Signal::from_fn(*grid, |t| {
        let decay = (-half * t).exp();
        if disc < 0.0 {
            let w = (-disc).sqrt();
            z0 * decay * ((w * t).cos() + half / w * (w * t).sin())
        } else if disc > 0.0 {
            // roots r± = -gamma/2 ± s
            let s = disc.sqrt();
            let (rp, rm) = (-half + s, -half - s);
            z0 * (rp * (rm * t).exp() - rm * (rp * t).exp()) / (rp - rm)
        } else {
            z0 * decay * (1.0 + half * t)
        }
    })
    .expect("finite closed form")
}
