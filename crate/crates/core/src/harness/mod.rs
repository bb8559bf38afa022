//! Experiment registry, configuration and artifact emission.
//!
//! [`run`] validates a config, runs the experiment inside a worker pool
//! sized by `MEMK_THREADS`, and writes tables, charts and a
//! [`RunManifest`] below `output_dir/<experiment>/`.

pub mod config;
mod experiments;
pub mod manifest;
pub mod svg;

use std::path::PathBuf;
use std::time::Instant;

pub use config::{Experiment, ExperimentConfig, System, Tolerances, SEED_ENV};
pub use manifest::{Bound, Check, HygieneRecord, Metric, Report, RunManifest};

use crate::error::{Error, Result};
use experiments::Workspace;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "MEMK_THREADS";

/// Worker count from `MEMK_THREADS`, else the available parallelism.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(raw) => match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::config(format!("{THREADS_ENV}={raw:?} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}

/// Directory a run of `cfg` writes into.
pub fn run_directory(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join(cfg.experiment.name())
}

/// Creates `dir` and confirms files can be written there.
pub fn prepare_directory(dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::config(format!("output directory {} is not writable: {e}", dir.display())))?;
    let probe = dir.join(".memk-write-test");
    std::fs::write(&probe, b"")
        .map_err(|e| Error::config(format!("output directory {} is not writable: {e}", dir.display())))?;
    std::fs::remove_file(&probe)?;
    Ok(())
}

/// Runs the configured experiment and writes every artifact and the manifest.
///
/// Check failures are reported through [`RunManifest::passed`], not as errors.
pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let dir = run_directory(cfg);
    prepare_directory(&dir)?;
    let threads = thread_count()?;
    let start = Instant::now();
    let ws = Workspace { cfg, root: dir.clone() };
    let report = with_pool(threads, || match cfg.experiment {
        Experiment::Fig1 => experiments::run_fig1(&ws),
        Experiment::Theorem => experiments::run_theorem(&ws),
        Experiment::Corollary1 => experiments::run_corollary1(&ws),
        Experiment::Corollary2 => experiments::run_corollary2(&ws),
        Experiment::Roundtrip => experiments::run_roundtrip(&ws),
        Experiment::Laplace => experiments::run_laplace(&ws),
    })??;
    let manifest = RunManifest {
        experiment: cfg.experiment.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        threads,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        passed: report.passed(),
        report,
    };
    manifest.write(&dir)?;
    Ok(manifest)
}
