//! `memk`: generate ETH ensembles, propagate closed and dephased dynamics,
//! extract and damp memory kernels, and run the verification experiments.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 a check or
//! invariant exceeded its tolerance.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use memk_core::harness::{self, Bound, Check, Experiment, ExperimentConfig, System};
use memk_core::io::{load_ensemble, read_signal_csv, save_ensemble, write_kernel_csv, write_signal_csv, write_table_csv};
use memk_core::spectral_model::select_initial_levels;
use memk_core::{
    check_condition2, expectation_closed, extract_kernel, oracle_decohered, predict_integral, predict_scheme, DiagonalState,
    Ensemble, Error, ReferenceKind, Signal,
};

const EXIT_USAGE: u8 = 1;
const EXIT_CHECK: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "memk", version, about = "Memory kernels of dephased ETH observables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample an ensemble per reference and save it in binary form.
    Generate(Common),
    /// Closed dynamics of the probe levels and their collapse onto g(t).
    Closed {
        #[command(flatten)]
        common: Common,
        /// Ensemble file written by `generate`; sampled afresh when absent.
        #[arg(long)]
        ensemble: Option<PathBuf>,
    },
    /// Dephased dynamics by master-equation propagation.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ensemble: Option<PathBuf>,
    },
    /// Memory kernel of a signal.
    Kernel {
        #[command(flatten)]
        common: Common,
        /// Signal CSV; the sampled reference g(t) when absent.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Dephased dynamics from the closed signal alone.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::Scheme)]
        method: Method,
    },
    /// Run an experiment and compare every check against its tolerance.
    Verify {
        experiment: ExperimentArg,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    /// Damp the extracted kernel and solve forward.
    Scheme,
    /// Second-kind integral equation in a(t) and g(t) = a(t)/a(0).
    Integral,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExperimentArg {
    Fig1,
    Theorem,
    Corollary1,
    Corollary2,
    Roundtrip,
    Laplace,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::Fig1 => Experiment::Fig1,
            ExperimentArg::Theorem => Experiment::Theorem,
            ExperimentArg::Corollary1 => Experiment::Corollary1,
            ExperimentArg::Corollary2 => Experiment::Corollary2,
            ExperimentArg::Roundtrip => Experiment::Roundtrip,
            ExperimentArg::Laplace => Experiment::Laplace,
        }
    }
}

#[derive(Args, Debug)]
struct Common {
    /// Flat TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dephasing rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    /// Hilbert-space dimension.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Reference functions, comma separated (exponential, oscillation, linear, recurrence).
    #[arg(long, value_delimiter = ',')]
    reference: Vec<String>,
    /// Any configuration key, e.g. `--set tol_oracle_scheme=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    /// Config file, then `MEMK_SEED`, then flags, then `--set` assignments.
    ///
    /// With `forced` the file may not name a different experiment.
    fn resolve(&self, experiment: Experiment, forced: bool) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path, Some(experiment))?,
            None => ExperimentConfig::defaults(experiment),
        };
        if forced && cfg.experiment != experiment {
            return Err(Error::InvalidConfig(format!(
                "config file is for experiment {}, not {experiment}",
                cfg.experiment
            )));
        }
        cfg.apply_env()?;
        if !self.gamma.is_empty() {
            cfg.gammas = self.gamma.clone();
        }
        if let Some(n) = self.n {
            cfg.dimension = n;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if !self.reference.is_empty() {
            cfg.references = self.reference.iter().map(|r| r.parse()).collect::<Result<_, _>>()?;
        }
        for assignment in &self.set {
            cfg.set(assignment)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Passed,
    Failed,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(Outcome::Passed) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(EXIT_CHECK),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::PositivityLost { .. } => ExitCode::from(EXIT_CHECK),
                _ => ExitCode::from(EXIT_USAGE),
            }
        }
    }
}

fn dispatch(command: Command) -> Result<Outcome, Error> {
    match command {
        Command::Generate(common) => generate(&common.resolve(Experiment::Theorem, false)?),
        Command::Closed { common, ensemble } => closed(&common.resolve(Experiment::Theorem, false)?, ensemble.as_deref()),
        Command::Oracle { common, ensemble } => oracle(&common.resolve(Experiment::Theorem, false)?, ensemble.as_deref()),
        Command::Kernel { common, input } => kernel(&common.resolve(Experiment::Theorem, false)?, input.as_deref()),
        Command::Predict { common, input, method } => predict(&common.resolve(Experiment::Theorem, false)?, input.as_deref(), method),
        Command::Verify { experiment, common } => verify(&common.resolve(experiment.into(), true)?),
    }
}

fn output_dir(cfg: &ExperimentConfig) -> Result<&Path, Error> {
    harness::prepare_directory(&cfg.output_dir)?;
    Ok(&cfg.output_dir)
}

fn generate(cfg: &ExperimentConfig) -> Result<Outcome, Error> {
    let dir = output_dir(cfg)?;
    for &kind in &cfg.references {
        let ensemble = Ensemble::generate(&cfg.ensemble_config(kind, cfg.seed, cfg.dimension)?)?;
        let path = dir.join(format!("ensemble_{kind}_n{}_s{}.bin", cfg.dimension, cfg.seed));
        save_ensemble(&path, &ensemble)?;
        println!("{}", path.display());
    }
    Ok(Outcome::Passed)
}

/// The ensembles a command works on: the given file, or one per configured reference.
fn ensembles(cfg: &ExperimentConfig, file: Option<&Path>) -> Result<Vec<(ReferenceKind, Ensemble)>, Error> {
    match file {
        Some(path) => {
            let e = load_ensemble(path)?;
            Ok(vec![(e.config.reference.kind, e)])
        }
        None => cfg
            .references
            .iter()
            .map(|&kind| Ok((kind, Ensemble::generate(&cfg.ensemble_config(kind, cfg.seed, cfg.dimension)?)?)))
            .collect(),
    }
}

fn closed(cfg: &ExperimentConfig, file: Option<&Path>) -> Result<Outcome, Error> {
    let dir = output_dir(cfg)?;
    let grid = cfg.grid()?;
    let mut outcome = Outcome::Passed;
    for (kind, e) in ensembles(cfg, file)? {
        let n = e.observable.dimension();
        let levels = select_initial_levels(&e.observable, &cfg.probes)?;
        let signals = levels
            .iter()
            .map(|&j| {
                let a = expectation_closed(&e.spectrum, &e.observable, &DiagonalState::pure(n, j)?, &grid)?;
                Ok((a, e.observable.eigenvalues()[j]))
            })
            .collect::<Result<Vec<(Signal, f64)>, Error>>()?;
        let g = e.config.reference.sample(&grid);
        let report = check_condition2(&signals, &g)?;
        let mut columns = vec![("t".to_string(), grid.times()), ("g".to_string(), g.values().to_vec())];
        for (target, (a, _)) in cfg.probes.iter().zip(&signals) {
            columns.push((format!("probe_{target}"), a.values().to_vec()));
        }
        let path = dir.join(format!("closed_{kind}.csv"));
        let comments = vec![
            format!("reference {kind} dimension {n} half_width {} seed {}", e.config.half_width, e.config.seed),
            "probe columns hold <j|A(t)|j>".to_string(),
        ];
        write_table_csv(&path, &comments, &columns)?;
        let check = Check::new(format!("closed.{kind}.collapse"), report.worst, Bound::AtMost { limit: cfg.tolerances.collapse });
        print_check(&check);
        if !check.passed {
            outcome = Outcome::Failed;
        }
        info!("wrote {}", path.display());
    }
    Ok(outcome)
}

fn oracle(cfg: &ExperimentConfig, file: Option<&Path>) -> Result<Outcome, Error> {
    let dir = output_dir(cfg)?;
    let runs = if cfg.system == System::TwoLevel {
        let sys = memk_core::benchmark::two_level();
        let grid = cfg.benchmark_grid()?;
        let state = DiagonalState::pure(2, sys.level_of(1.0))?;
        vec![("two_level".to_string(), sys.spectrum, sys.observable, state, grid)]
    } else {
        let grid = cfg.grid()?;
        ensembles(cfg, file)?
            .into_iter()
            .map(|(kind, e)| {
                let j = select_initial_levels(&e.observable, &cfg.probes[..1])?[0];
                let state = DiagonalState::pure(e.observable.dimension(), j)?;
                Ok((kind.to_string(), e.spectrum, e.observable, state, grid))
            })
            .collect::<Result<Vec<_>, Error>>()?
    };
    let mut report = harness::Report::default();
    for (label, spectrum, observable, state, grid) in runs {
        for &gamma in &cfg.gammas {
            let run = oracle_decohered(&observable, &spectrum, &state, &cfg.lindblad(gamma, grid))?;
            let path = dir.join(format!("oracle_{label}_g{gamma}.csv"));
            let comments = vec![
                format!("{label} gamma {gamma} stepper {:?} seed {}", cfg.stepper, cfg.seed),
                format!("hygiene {}", serde_json::to_string(&run.hygiene)?),
            ];
            write_signal_csv(&path, &run.signal, &comments)?;
            report.hygiene(&format!("oracle.{label}.g{gamma}"), run.hygiene, &cfg.tolerances);
            info!("wrote {}", path.display());
        }
    }
    report.checks.iter().for_each(print_check);
    Ok(if report.passed() { Outcome::Passed } else { Outcome::Failed })
}

/// The input signal, or the sampled first reference.
fn input_signal(cfg: &ExperimentConfig, input: Option<&Path>) -> Result<(String, Signal), Error> {
    match input {
        Some(path) => {
            let stem = path.file_stem().map_or("input".into(), |s| s.to_string_lossy().into_owned());
            Ok((stem, read_signal_csv(path)?))
        }
        None => {
            let kind = cfg.references[0];
            Ok((kind.to_string(), cfg.reference(kind)?.sample(&cfg.grid()?)))
        }
    }
}

fn kernel(cfg: &ExperimentConfig, input: Option<&Path>) -> Result<Outcome, Error> {
    let dir = output_dir(cfg)?;
    let (label, a) = input_signal(cfg, input)?;
    let k = extract_kernel(&a)?;
    let path = dir.join(format!("kernel_{label}.csv"));
    write_kernel_csv(&path, &k, &[format!("memory kernel of {label}, a(0) = {}", a.first())])?;
    println!("{}", path.display());
    Ok(Outcome::Passed)
}

fn predict(cfg: &ExperimentConfig, input: Option<&Path>, method: Method) -> Result<Outcome, Error> {
    let dir = output_dir(cfg)?;
    let (label, a) = input_signal(cfg, input)?;
    for &gamma in &cfg.gammas {
        let (name, tilde) = match method {
            Method::Scheme => ("scheme", predict_scheme(&a, gamma)?),
            Method::Integral => ("integral", predict_integral(&a, &a.scaled(1.0 / a.first())?, gamma)?),
        };
        let path = dir.join(format!("predict_{name}_{label}_g{gamma}.csv"));
        write_signal_csv(&path, &tilde, &[format!("{name} prediction from {label}, gamma {gamma}")])?;
        println!("{}", path.display());
    }
    Ok(Outcome::Passed)
}

fn print_check(c: &Check) {
    println!("{} {} measured {:.6e} bound {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.measured, c.bound);
}

fn verify(cfg: &ExperimentConfig) -> Result<Outcome, Error> {
    let manifest = harness::run(cfg)?;
    manifest.report.checks.iter().for_each(print_check);
    for note in &manifest.report.notes {
        println!("note: {note}");
    }
    let failed = manifest.failures().count();
    println!(
        "{}: {} checks, {failed} failed, {:.1} s; manifest in {}",
        manifest.experiment,
        manifest.report.checks.len(),
        manifest.wall_clock_seconds,
        harness::run_directory(cfg).display()
    );
    Ok(if manifest.passed { Outcome::Passed } else { Outcome::Failed })
}
