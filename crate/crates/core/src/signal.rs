//! Uniform time grids and real signals sampled on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `t_k = k * dt` for `k = 0..=steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { dt, steps })
    }

    /// Smallest grid with spacing `dt` whose last point is at or beyond `horizon`.
    pub fn covering(dt: f64, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::config(format!("horizon must be non-negative, got {horizon}")));
        }
        let steps = (horizon / dt - 1e-9).ceil().max(0.0) as usize;
        Self::new(dt, steps)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of sample points (`steps + 1`).
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Same horizon, half the spacing.
    pub fn refined(&self) -> Self {
        Self { dt: self.dt / 2.0, steps: self.steps * 2 }
    }

    /// Prefix of this grid with `steps` steps.
    pub fn truncated(&self, steps: usize) -> Self {
        Self { dt: self.dt, steps: steps.min(self.steps) }
    }

    pub(crate) fn same_spacing(&self, other: &TimeGrid) -> bool {
        (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }

    pub(crate) fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self.same_spacing(other) && self.steps == other.steps {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "dt {} x {} steps vs dt {} x {} steps",
                self.dt, self.steps, other.dt, other.steps
            )))
        }
    }
}

/// A finite real function sampled on a [`TimeGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Signal {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("signal value at t = {} is not finite", grid.time(k))));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(grid.time(k))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Result<Signal> {
        Signal::new(self.grid, self.values.iter().map(|v| v * factor).collect())
    }

    /// Every other sample, i.e. the same signal on a grid with twice the spacing.
    pub fn decimated(&self) -> Signal {
        let grid = TimeGrid { dt: self.grid.dt * 2.0, steps: self.grid.steps / 2 };
        let values = self.values.iter().step_by(2).take(grid.len()).copied().collect();
        Signal { grid, values }
    }

    pub fn truncated(&self, steps: usize) -> Signal {
        let grid = self.grid.truncated(steps);
        Signal { grid, values: self.values[..grid.len()].to_vec() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max_k |self_k - other_k|`; both signals must share the grid.
    pub fn max_abs_diff(&self, other: &Signal) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Like [`Signal::max_abs_diff`] but only over `t <= until`.
    pub fn max_abs_diff_until(&self, other: &Signal, until: f64) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .take_while(|(k, _)| self.grid.time(*k) <= until + 1e-9 * self.grid.dt)
            .fold(0.0, |m, (_, (a, b))| m.max((a - b).abs())))
    }
}
