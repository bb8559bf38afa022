//! Experiment configuration as flat `key = value` TOML.
//!
//! Every key is optional; missing keys take the per-experiment defaults of
//! [`ExperimentConfig::defaults`]. Tolerances use a `tol_` prefix.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::open_dynamics::{LindbladConfig, Stepper};
use crate::signal::TimeGrid;
use crate::spectral_model::{desk_half_width, EthEnsembleConfig, ReferenceFunction, ReferenceKind};

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "MEMK_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Fig1,
    Theorem,
    Corollary1,
    Corollary2,
    Roundtrip,
    Laplace,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Fig1,
        Experiment::Theorem,
        Experiment::Corollary1,
        Experiment::Corollary2,
        Experiment::Roundtrip,
        Experiment::Laplace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig1 => "fig1",
            Experiment::Theorem => "theorem",
            Experiment::Corollary1 => "corollary1",
            Experiment::Corollary2 => "corollary2",
            Experiment::Roundtrip => "roundtrip",
            Experiment::Laplace => "laplace",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::config(format!("unknown experiment {s:?}")))
    }
}

/// Which model a theorem run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Eth,
    TwoLevel,
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "eth" => Ok(System::Eth),
            "two_level" => Ok(System::TwoLevel),
            _ => Err(Error::config(format!("unknown system {s:?} (eth, two_level)"))),
        }
    }
}

/// Pass/fail thresholds compared by the `verify` runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub collapse: f64,
    pub two_level: f64,
    pub oracle_scheme: f64,
    pub scheme_integral: f64,
    pub roundtrip_ratio_min: f64,
    pub roundtrip_ratio_max: f64,
    pub corollary1_factor: f64,
    pub zeno_rate: f64,
    pub mori: f64,
    pub mori_delta: f64,
    pub laplace: f64,
    pub trace_drift: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
    pub closed_agreement: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            collapse: 0.05,
            two_level: 1e-4,
            oracle_scheme: 0.05,
            scheme_integral: 0.01,
            roundtrip_ratio_min: 3.0,
            roundtrip_ratio_max: 5.0,
            corollary1_factor: 10.0,
            zeno_rate: 0.10,
            mori: 0.05,
            mori_delta: 1e-2,
            laplace: 0.02,
            trace_drift: 1e-9,
            hermiticity: 1e-10,
            min_eigenvalue: -1e-6,
            closed_agreement: 1e-8,
        }
    }
}

impl Tolerances {
    fn slot(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "collapse" => &mut self.collapse,
            "two_level" => &mut self.two_level,
            "oracle_scheme" => &mut self.oracle_scheme,
            "scheme_integral" => &mut self.scheme_integral,
            "roundtrip_ratio_min" => &mut self.roundtrip_ratio_min,
            "roundtrip_ratio_max" => &mut self.roundtrip_ratio_max,
            "corollary1_factor" => &mut self.corollary1_factor,
            "zeno_rate" => &mut self.zeno_rate,
            "mori" => &mut self.mori,
            "mori_delta" => &mut self.mori_delta,
            "laplace" => &mut self.laplace,
            "trace_drift" => &mut self.trace_drift,
            "hermiticity" => &mut self.hermiticity,
            "min_eigenvalue" => &mut self.min_eigenvalue,
            "closed_agreement" => &mut self.closed_agreement,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub system: System,
    pub dimension: usize,
    /// `None` selects [`desk_half_width`] per reference.
    pub half_width: Option<f64>,
    pub spectral_cutoff: f64,
    pub references: Vec<ReferenceKind>,
    pub tau: f64,
    pub v: f64,
    pub seed: u64,
    pub gammas: Vec<f64>,
    pub probes: Vec<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub stepper: Stepper,
    pub step_bound: f64,
    /// Two-level grid used by theorem, corollary2 and laplace runs.
    pub benchmark_dt: f64,
    pub benchmark_horizon: f64,
    /// Smaller dimension for the finite-size comparison of fig1; 0 disables it.
    pub scaling_dimension: usize,
    pub scaling_seeds: usize,
    /// Dimension of the discrete-map oracle ensemble in corollary1.
    pub oracle_dimension: usize,
    pub mori_dt: f64,
    pub mori_horizon: f64,
    pub laplace_samples: usize,
    pub output_dir: PathBuf,
    pub emit_svg: bool,
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let tau = ReferenceFunction::DEFAULT_TAU;
        let mut cfg = Self {
            experiment,
            system: System::Eth,
            dimension: 300,
            half_width: Some(1.0),
            spectral_cutoff: EthEnsembleConfig::DEFAULT_CUTOFF,
            references: vec![ReferenceKind::Oscillation, ReferenceKind::Exponential],
            tau,
            v: ReferenceFunction::DEFAULT_V,
            seed: 1,
            gammas: vec![0.05, 0.2, 1.0],
            probes: vec![0.9],
            dt: tau / 200.0,
            horizon: 3.0 * tau,
            stepper: Stepper::RungeKutta4,
            step_bound: LindbladConfig::DEFAULT_STEP_BOUND,
            benchmark_dt: 1e-3,
            benchmark_horizon: 10.0,
            scaling_dimension: 0,
            scaling_seeds: 3,
            oracle_dimension: 100,
            mori_dt: 1e-3,
            mori_horizon: 0.4,
            laplace_samples: 5,
            output_dir: PathBuf::from("memk-out"),
            emit_svg: true,
            tolerances: Tolerances::default(),
        };
        match experiment {
            Experiment::Fig1 => {
                cfg.dimension = 2000;
                cfg.half_width = None;
                cfg.references = ReferenceKind::ALL.to_vec();
                cfg.gammas = vec![];
                cfg.probes = vec![0.25, 0.5, 0.75, 0.9];
                cfg.scaling_dimension = 500;
            }
            Experiment::Theorem => {}
            Experiment::Corollary1 => {
                let beta = std::f64::consts::LN_2 / tau;
                cfg.references = vec![ReferenceKind::Exponential];
                cfg.gammas = [0.01, 0.1, 1.0, 10.0].iter().map(|x| x * beta).collect();
            }
            Experiment::Corollary2 => {
                cfg.system = System::TwoLevel;
                cfg.half_width = None;
                cfg.references = vec![ReferenceKind::Oscillation, ReferenceKind::Linear, ReferenceKind::Recurrence];
                cfg.gammas = vec![20.0, 50.0, 100.0];
            }
            Experiment::Roundtrip => {
                cfg.references = ReferenceKind::ALL.to_vec();
                cfg.gammas = vec![];
            }
            Experiment::Laplace => {
                cfg.references = vec![ReferenceKind::Oscillation];
                cfg.gammas = vec![1.0];
            }
        }
        cfg
    }

    /// Parses a flat TOML document; `experiment` may come from the file or from `fallback`.
    pub fn from_toml_str(text: &str, fallback: Option<Experiment>) -> Result<Self> {
        let table: toml::Table = text.parse()?;
        let experiment = match table.get("experiment") {
            Some(v) => as_str("experiment", v)?.parse()?,
            None => fallback.ok_or_else(|| Error::config("no experiment given"))?,
        };
        let mut cfg = Self::defaults(experiment);
        for (key, value) in &table {
            if key != "experiment" {
                cfg.set_value(key, value)?;
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path, fallback: Option<Experiment>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, fallback)
    }

    /// `key=value` with the value in TOML syntax; bare words are read as strings.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("expected key=value, got {assignment:?}")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = match format!("x = {raw}").parse::<toml::Table>() {
            Ok(mut t) => t.remove("x").expect("single key"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        self.set_value(key, &value)
    }

    pub fn set_value(&mut self, key: &str, value: &toml::Value) -> Result<()> {
        if let Some(tol) = key.strip_prefix("tol_") {
            let slot = self.tolerances.slot(tol).ok_or_else(|| Error::config(format!("unknown tolerance {key:?}")))?;
            *slot = as_f64(key, value)?;
            return Ok(());
        }
        match key {
            "experiment" => self.experiment = as_str(key, value)?.parse()?,
            "system" => self.system = as_str(key, value)?.parse()?,
            "dimension" | "n" => self.dimension = as_usize(key, value)?,
            "half_width" => {
                self.half_width = match value.as_str() {
                    Some("auto") => None,
                    _ => Some(as_f64(key, value)?),
                }
            }
            "spectral_cutoff" => self.spectral_cutoff = as_f64(key, value)?,
            "reference" | "references" => {
                self.references = as_list(key, value)?
                    .iter()
                    .map(|v| as_str(key, v)?.parse())
                    .collect::<Result<_>>()?
            }
            "tau" => self.tau = as_f64(key, value)?,
            "v" => self.v = as_f64(key, value)?,
            "seed" => self.seed = as_usize(key, value)? as u64,
            "gamma" | "gammas" => self.gammas = as_list(key, value)?.iter().map(|v| as_f64(key, v)).collect::<Result<_>>()?,
            "probes" => self.probes = as_list(key, value)?.iter().map(|v| as_f64(key, v)).collect::<Result<_>>()?,
            "dt" => self.dt = as_f64(key, value)?,
            "horizon" => self.horizon = as_f64(key, value)?,
            "stepper" => {
                self.stepper = match as_str(key, value)?.to_ascii_lowercase().as_str() {
                    "rk4" | "runge_kutta4" => Stepper::RungeKutta4,
                    "discrete_map" | "discrete" => Stepper::DiscreteMap,
                    other => return Err(Error::config(format!("unknown stepper {other:?} (rk4, discrete_map)"))),
                }
            }
            "step_bound" => self.step_bound = as_f64(key, value)?,
            "benchmark_dt" => self.benchmark_dt = as_f64(key, value)?,
            "benchmark_horizon" => self.benchmark_horizon = as_f64(key, value)?,
            "scaling_dimension" => self.scaling_dimension = as_usize(key, value)?,
            "scaling_seeds" => self.scaling_seeds = as_usize(key, value)?,
            "oracle_dimension" => self.oracle_dimension = as_usize(key, value)?,
            "mori_dt" => self.mori_dt = as_f64(key, value)?,
            "mori_horizon" => self.mori_horizon = as_f64(key, value)?,
            "laplace_samples" => self.laplace_samples = as_usize(key, value)?,
            "output_dir" | "out" => self.output_dir = PathBuf::from(as_str(key, value)?),
            "emit_svg" => {
                self.emit_svg = value.as_bool().ok_or_else(|| Error::config(format!("{key} must be true or false")))?
            }
            _ => return Err(Error::config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Replaces the seed with `MEMK_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = raw
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.gammas.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::config(format!("gammas must be non-negative, got {g}")));
        }
        if let Some(p) = self.probes.iter().find(|p| !(-1.0..=1.0).contains(*p)) {
            return Err(Error::config(format!("probes must lie in [-1, 1], got {p}")));
        }
        if self.references.is_empty() {
            return Err(Error::config("at least one reference is required"));
        }
        for (name, x) in [
            ("dt", self.dt),
            ("horizon", self.horizon),
            ("benchmark_dt", self.benchmark_dt),
            ("benchmark_horizon", self.benchmark_horizon),
            ("mori_dt", self.mori_dt),
            ("mori_horizon", self.mori_horizon),
        ] {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {x}")));
            }
        }
        if self.laplace_samples < 2 {
            return Err(Error::config("laplace_samples must be at least 2"));
        }
        ReferenceFunction::new(ReferenceKind::Recurrence, self.tau, self.v)?;
        for kind in &self.references {
            self.ensemble_config(*kind, self.seed, self.dimension)?.validate()?;
        }
        Ok(())
    }

    pub fn reference(&self, kind: ReferenceKind) -> Result<ReferenceFunction> {
        ReferenceFunction::new(kind, self.tau, self.v)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::covering(self.dt, self.horizon)
    }

    pub fn benchmark_grid(&self) -> Result<TimeGrid> {
        TimeGrid::covering(self.benchmark_dt, self.benchmark_horizon)
    }

    pub fn half_width_for(&self, kind: ReferenceKind, dimension: usize) -> Result<f64> {
        Ok(match self.half_width {
            Some(h) => h,
            None => desk_half_width(&self.reference(kind)?, dimension, self.spectral_cutoff),
        })
    }

    pub fn ensemble_config(&self, kind: ReferenceKind, seed: u64, dimension: usize) -> Result<EthEnsembleConfig> {
        let mut cfg = EthEnsembleConfig::new(dimension, self.reference(kind)?, seed)
            .with_half_width(self.half_width_for(kind, dimension)?);
        cfg.spectral_cutoff = self.spectral_cutoff;
        Ok(cfg)
    }

    pub fn lindblad(&self, gamma: f64, grid: TimeGrid) -> LindbladConfig {
        LindbladConfig::new(gamma, grid, self.stepper).with_step_bound(self.step_bound)
    }
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::config(format!("{key} must be a number, got {v}"))),
    }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize> {
    v.as_integer()
        .and_then(|i| usize::try_from(i).ok())
        .ok_or_else(|| Error::config(format!("{key} must be a non-negative integer, got {v}")))
}

fn as_str<'a>(key: &str, v: &'a toml::Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::config(format!("{key} must be a string, got {v}")))
}

/// A scalar is accepted where a list is expected.
fn as_list(key: &str, v: &toml::Value) -> Result<Vec<toml::Value>> {
    match v {
        toml::Value::Array(items) => Ok(items.clone()),
        toml::Value::Table(_) => Err(Error::config(format!("{key} must be a value or a list"))),
        other => Ok(vec![other.clone()]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_toml_overrides_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "experiment = \"theorem\"\nn = 120\ngammas = [0.1, 2]\nreference = \"exp\"\ntol_oracle_scheme = 0.1\nhalf_width = \"auto\"\n",
            None,
        )
        .unwrap();
        assert_eq!(cfg.experiment, Experiment::Theorem);
        assert_eq!(cfg.dimension, 120);
        assert_eq!(cfg.gammas, vec![0.1, 2.0]);
        assert_eq!(cfg.references, vec![ReferenceKind::Exponential]);
        assert_eq!(cfg.tolerances.oracle_scheme, 0.1);
        assert_eq!(cfg.half_width, None);
        assert_eq!(cfg.probes, vec![0.9]);
    }

    #[test]
    fn assignments_accept_bare_words_and_scalars() {
        let mut cfg = ExperimentConfig::defaults(Experiment::Fig1);
        cfg.set("reference=linear").unwrap();
        cfg.set("gamma = 0.3").unwrap();
        cfg.set("system=two-level").unwrap();
        cfg.set("emit_svg=false").unwrap();
        assert_eq!(cfg.references, vec![ReferenceKind::Linear]);
        assert_eq!(cfg.gammas, vec![0.3]);
        assert_eq!(cfg.system, System::TwoLevel);
        assert!(!cfg.emit_svg);
        assert!(cfg.set("bogus=1").is_err());
        assert!(cfg.set("tol_bogus=1").is_err());
        assert!(cfg.set("dimension=-3").is_err());
        assert!(cfg.set("no_equals_sign").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::defaults(Experiment::Theorem);
        cfg.validate().unwrap();
        cfg.gammas = vec![-1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::defaults(Experiment::Fig1);
        cfg.probes = vec![1.5];
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml_str("n = 3", None).is_err());
        assert!("fig2".parse::<Experiment>().is_err());
    }

    #[test]
    fn desk_rule_applies_only_without_explicit_half_width() {
        let cfg = ExperimentConfig::defaults(Experiment::Fig1);
        assert_eq!(cfg.half_width_for(ReferenceKind::Exponential, 2000).unwrap(), 3.0);
        let cfg = ExperimentConfig::defaults(Experiment::Theorem);
        assert_eq!(cfg.half_width_for(ReferenceKind::Recurrence, 2000).unwrap(), 1.0);
    }
}
