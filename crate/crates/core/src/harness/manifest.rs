//! Checks, metrics and the per-run manifest.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, Tolerances};
use crate::error::Result;
use crate::io::format_value;
use crate::open_dynamics::Hygiene;

/// Acceptance region of a measured value. NaN is never admitted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    AtMost { limit: f64 },
    AtLeast { limit: f64 },
    Below { limit: f64 },
    Within { lo: f64, hi: f64 },
}

impl Bound {
    pub fn admits(&self, x: f64) -> bool {
        match *self {
            Bound::AtMost { limit } => x <= limit,
            Bound::AtLeast { limit } => x >= limit,
            Bound::Below { limit } => x < limit,
            Bound::Within { lo, hi } => lo <= x && x <= hi,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Bound::AtMost { limit } => write!(f, "<= {limit:e}"),
            Bound::AtLeast { limit } => write!(f, ">= {limit:e}"),
            Bound::Below { limit } => write!(f, "< {limit:e}"),
            Bound::Within { lo, hi } => write!(f, "in [{lo}, {hi}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: Bound,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, bound: Bound) -> Self {
        Self { name: name.into(), measured, bound, passed: bound.admits(measured) }
    }
}

/// A reported number without a pass/fail bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HygieneRecord {
    pub label: String,
    #[serde(flatten)]
    pub hygiene: Hygiene,
}

/// What one experiment, or one worker task of it, produced.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
    pub metrics: Vec<Metric>,
    pub hygiene: Vec<HygieneRecord>,
    pub notes: Vec<String>,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
    pub seeds: Vec<u64>,
}

impl Report {
    pub fn check(&mut self, name: impl Into<String>, measured: f64, bound: Bound) {
        self.checks.push(Check::new(name, measured, bound));
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push(Metric { name: name.into(), value });
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Records the propagation diagnostics and checks them against `tol`.
    pub fn hygiene(&mut self, label: &str, hygiene: Hygiene, tol: &Tolerances) {
        self.check(format!("{label}.trace_drift"), hygiene.max_trace_drift, Bound::AtMost { limit: tol.trace_drift });
        self.check(
            format!("{label}.hermiticity"),
            hygiene.max_hermiticity_defect,
            Bound::AtMost { limit: tol.hermiticity },
        );
        self.check(format!("{label}.min_eigenvalue"), hygiene.min_eigenvalue, Bound::AtLeast { limit: tol.min_eigenvalue });
        self.hygiene.push(HygieneRecord { label: label.to_string(), hygiene });
    }

    pub fn merge(&mut self, other: Report) {
        self.checks.extend(other.checks);
        self.metrics.extend(other.metrics);
        self.hygiene.extend(other.hygiene);
        self.notes.extend(other.notes);
        self.artifacts.extend(other.artifacts);
        for seed in other.seeds {
            if !self.seeds.contains(&seed) {
                self.seeds.push(seed);
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub passed: bool,
    #[serde(flatten)]
    pub report: Report,
}

impl RunManifest {
    pub const FILE: &'static str = "manifest.json";
    pub const CHECKS_FILE: &'static str = "checks.csv";
    pub const METRICS_FILE: &'static str = "metrics.csv";

    /// Writes the manifest and the check, metric and hygiene tables into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(dir.join(Self::CHECKS_FILE))?);
        writeln!(out, "# experiment {}", self.experiment)?;
        writeln!(out, "name,measured,bound,passed")?;
        for c in &self.report.checks {
            writeln!(out, "{},{},{},{}", c.name, format_value(c.measured), c.bound, c.passed)?;
        }
        out.flush()?;

        let mut out = BufWriter::new(File::create(dir.join(Self::METRICS_FILE))?);
        writeln!(out, "# experiment {}", self.experiment)?;
        writeln!(out, "name,value")?;
        for m in &self.report.metrics {
            writeln!(out, "{},{}", m.name, format_value(m.value))?;
        }
        for h in &self.report.hygiene {
            writeln!(out, "{}.substeps,{}", h.label, format_value(h.hygiene.substeps as f64))?;
            writeln!(out, "{}.internal_dt,{}", h.label, format_value(h.hygiene.internal_dt))?;
        }
        out.flush()?;

        let mut out = BufWriter::new(File::create(dir.join(Self::FILE))?);
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.report.checks.iter().filter(|c| !c.passed)
    }
}
