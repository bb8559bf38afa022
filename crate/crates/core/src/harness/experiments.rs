//! The six registered experiments.
//!
//! Every experiment writes its tables below the run directory, one
//! subdirectory per independent worker task, and returns a [`Report`].

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;

use super::config::{ExperimentConfig, System};
use super::manifest::{Bound, Report};
use super::svg::{LineChart, Series};
use crate::benchmark::{damped_oscillator, two_level, TwoLevel};
use crate::closed_dynamics::{autocorrelation, check_condition2, expectation_closed, CollapseReport, DiagonalState};
use crate::error::Result;
use crate::io::{write_signal_csv, write_table_csv};
use crate::kernel::{
    check_laplace_shift, extract_kernel, fit_decay_rate, kernel_transform, laplace_samples, mori_initial_value,
    mori_initial_value_spectral, predict_integral, predict_scheme, solve_volterra, zeno_approximation,
};
use crate::linalg::ComplexMatrix;
use crate::open_dynamics::{hamiltonian_in_observable_basis, oracle_decohered, Hygiene, Stepper};
use crate::signal::{Signal, TimeGrid};
use crate::spectral_model::{select_initial_levels, Ensemble, ReferenceKind};

/// Where a worker task writes.
pub(crate) struct Workspace<'a> {
    pub cfg: &'a ExperimentConfig,
    pub root: PathBuf,
}

impl Workspace<'_> {
    fn subdir(&self, name: &str) -> Result<PathBuf> {
        let dir = self.root.join(name);
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn table(&self, report: &mut Report, path: &Path, comments: &[String], columns: &[(String, Vec<f64>)]) -> Result<()> {
        write_table_csv(path, comments, columns)?;
        self.record(report, path);
        Ok(())
    }

    fn chart(&self, report: &mut Report, path: &Path, chart: &LineChart) -> Result<()> {
        if self.cfg.emit_svg {
            chart.write(path)?;
            self.record(report, path);
        }
        Ok(())
    }

    fn record(&self, report: &mut Report, path: &Path) {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        report.artifacts.push(rel.to_string_lossy().replace('\\', "/"));
    }

    fn comments(&self, extra: &[String]) -> Vec<String> {
        let mut c = vec![format!("experiment {}", self.cfg.experiment), format!("memk {}", env!("CARGO_PKG_VERSION"))];
        c.extend_from_slice(extra);
        c
    }
}

fn merge_all(parts: Vec<Result<Report>>) -> Result<Report> {
    let mut report = Report::default();
    for part in parts {
        report.merge(part?);
    }
    Ok(report)
}

fn column(name: impl Into<String>, values: impl Into<Vec<f64>>) -> (String, Vec<f64>) {
    (name.into(), values.into())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Probe signals and their collapse report for one ensemble.
struct Collapse {
    ensemble: Ensemble,
    levels: Vec<usize>,
    signals: Vec<(Signal, f64)>,
    g: Signal,
    report: CollapseReport,
}

fn collapse(cfg: &ExperimentConfig, kind: ReferenceKind, seed: u64, dimension: usize, grid: &TimeGrid) -> Result<Collapse> {
    let ensemble = Ensemble::generate(&cfg.ensemble_config(kind, seed, dimension)?)?;
    let levels = select_initial_levels(&ensemble.observable, &cfg.probes)?;
    let signals = levels
        .iter()
        .map(|&j| {
            let state = DiagonalState::pure(dimension, j)?;
            let a = expectation_closed(&ensemble.spectrum, &ensemble.observable, &state, grid)?;
            Ok((a, ensemble.observable.eigenvalues()[j]))
        })
        .collect::<Result<Vec<_>>>()?;
    let g = cfg.reference(kind)?.sample(grid);
    let report = check_condition2(&signals, &g)?;
    Ok(Collapse { ensemble, levels, signals, g, report })
}

pub(crate) fn run_fig1(ws: &Workspace) -> Result<Report> {
    let cfg = ws.cfg;
    let grid = cfg.grid()?;
    let parts = cfg.references.par_iter().map(|&kind| fig1_reference(ws, kind, &grid)).collect();
    let mut report = merge_all(parts)?;
    report.note(format!(
        "collapse tolerance {} at N = {} is a project choice; no quantitative deviations are published for this figure",
        cfg.tolerances.collapse, cfg.dimension
    ));
    Ok(report)
}

fn fig1_reference(ws: &Workspace, kind: ReferenceKind, grid: &TimeGrid) -> Result<Report> {
    let cfg = ws.cfg;
    let dir = ws.subdir(kind.name())?;
    let mut report = Report { seeds: vec![cfg.seed], ..Report::default() };
    let main = collapse(cfg, kind, cfg.seed, cfg.dimension, grid)?;
    let n = cfg.dimension;
    let prefix = format!("fig1.{kind}");
    report.metric(format!("{prefix}.half_width"), main.ensemble.config.half_width);
    report.check(format!("{prefix}.collapse"), main.report.worst, Bound::AtMost { limit: cfg.tolerances.collapse });

    let mut columns = vec![column("t", grid.times()), column("g", main.g.values())];
    let mut chart = LineChart::new(format!("{kind}: <j|A(t)|j> / a_j, N = {n}"), "t", "scaled expectation value");
    for ((target, (signal, a_j)), probe) in cfg.probes.iter().zip(&main.signals).zip(&main.report.probes) {
        let scaled = signal.scaled(1.0 / a_j)?;
        report.metric(format!("{prefix}.probe_{target}.a_j"), *a_j);
        report.metric(format!("{prefix}.probe_{target}.deviation"), probe.max_deviation);
        chart = chart.with(Series::new(format!("a_j = {a_j:.3}"), grid.times(), scaled.values().to_vec()));
        columns.push(column(format!("probe_{target}"), scaled.into_values()));
    }

    // mixed diagonal state: uniform weight on the probe levels
    let state = DiagonalState::uniform_over(n, &main.levels)?;
    let a0 = state.expectation(main.ensemble.observable.eigenvalues());
    let mixed = expectation_closed(&main.ensemble.spectrum, &main.ensemble.observable, &state, grid)?.scaled(1.0 / a0)?;
    report.metric(format!("{prefix}.mixed.deviation"), mixed.max_abs_diff(&main.g)?);
    columns.push(column("mixed", mixed.into_values()));
    chart = chart.with(Series::new("g(t)", grid.times(), main.g.values().to_vec()).dashed());

    let comments = ws.comments(&[
        format!("reference {kind} tau {} v {}", cfg.tau, cfg.v),
        format!("dimension {n} half_width {} seed {}", main.ensemble.config.half_width, cfg.seed),
        "probe columns hold <j|A(t)|j>/a_j; mixed is the uniform mixture of the probe levels".to_string(),
    ]);
    ws.table(&mut report, &dir.join(format!("fig1_{kind}.csv")), &comments, &columns)?;
    ws.chart(&mut report, &dir.join(format!("fig1_{kind}.svg")), &chart)?;

    let small = cfg.scaling_dimension;
    if small >= 2 && small < n && cfg.scaling_seeds > 0 {
        let seeds: Vec<u64> = (0..cfg.scaling_seeds as u64).map(|k| cfg.seed + k).collect();
        let worst = |seed: u64, dim: usize| -> Result<f64> {
            if seed == cfg.seed && dim == n {
                return Ok(main.report.worst);
            }
            Ok(collapse(cfg, kind, seed, dim, grid)?.report.worst)
        };
        let runs: Vec<(f64, f64)> = seeds
            .par_iter()
            .map(|&s| Ok((worst(s, n)?, worst(s, small)?)))
            .collect::<Result<_>>()?;
        let large: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let low: Vec<f64> = runs.iter().map(|r| r.1).collect();
        let seed_col: Vec<f64> = seeds.iter().map(|&s| s as f64).collect();
        ws.table(
            &mut report,
            &dir.join(format!("fig1_{kind}_scaling.csv")),
            &ws.comments(&[format!("worst collapse deviation per seed at N = {n} and N = {small}")]),
            &[column("seed", seed_col), column(format!("worst_n{n}"), large.clone()), column(format!("worst_n{small}"), low.clone())],
        )?;
        let (m_large, m_small) = (median(large), median(low));
        report.metric(format!("{prefix}.scaling.median_n{small}"), m_small);
        report.check(format!("{prefix}.scaling.median_n{n}"), m_large, Bound::Below { limit: m_small });
        report.seeds.extend(seeds);
    }
    Ok(report)
}

pub(crate) fn run_theorem(ws: &Workspace) -> Result<Report> {
    match ws.cfg.system {
        System::TwoLevel => theorem_two_level(ws),
        System::Eth => {
            let grid = ws.cfg.grid()?;
            let parts = ws.cfg.references.par_iter().map(|&kind| theorem_reference(ws, kind, &grid)).collect();
            merge_all(parts)
        }
    }
}

struct Routes {
    oracle: Signal,
    scheme: Signal,
    integral: Signal,
}

fn theorem_reference(ws: &Workspace, kind: ReferenceKind, grid: &TimeGrid) -> Result<Report> {
    let cfg = ws.cfg;
    let dir = ws.subdir(kind.name())?;
    let mut report = Report { seeds: vec![cfg.seed], ..Report::default() };
    let ensemble = Ensemble::generate(&cfg.ensemble_config(kind, cfg.seed, cfg.dimension)?)?;
    let levels = select_initial_levels(&ensemble.observable, &cfg.probes)?;
    for (&target, &j) in cfg.probes.iter().zip(&levels) {
        let state = DiagonalState::pure(cfg.dimension, j)?;
        let a = expectation_closed(&ensemble.spectrum, &ensemble.observable, &state, grid)?;
        let g = a.scaled(1.0 / a.first())?;
        let runs: Vec<(f64, Routes, Hygiene)> = cfg
            .gammas
            .par_iter()
            .map(|&gamma| {
                let oracle = oracle_decohered(&ensemble.observable, &ensemble.spectrum, &state, &cfg.lindblad(gamma, *grid))?;
                let scheme = predict_scheme(&a, gamma)?;
                let integral = predict_integral(&a, &g, gamma)?;
                Ok((gamma, Routes { oracle: oracle.signal, scheme, integral }, oracle.hygiene))
            })
            .collect::<Result<_>>()?;

        let mut table = vec![Vec::new(); 4];
        let mut chart = LineChart::new(format!("{kind}: decohered dynamics, a_j = {:.3}", a.first()), "t", "a(t)")
            .with(Series::new("closed", grid.times(), a.values().to_vec()));
        for (gamma, routes, hygiene) in runs {
            let label = format!("theorem.{kind}.p{target}.g{gamma}");
            let os = routes.oracle.max_abs_diff(&routes.scheme)?;
            let oi = routes.oracle.max_abs_diff(&routes.integral)?;
            let si = routes.scheme.max_abs_diff(&routes.integral)?;
            report.check(format!("{label}.oracle_scheme"), os, Bound::AtMost { limit: cfg.tolerances.oracle_scheme });
            report.check(format!("{label}.scheme_integral"), si, Bound::AtMost { limit: cfg.tolerances.scheme_integral });
            report.metric(format!("{label}.oracle_integral"), oi);
            report.hygiene(&label, hygiene, &cfg.tolerances);
            if gamma == 0.0 {
                let closed = routes.oracle.max_abs_diff(&a)?;
                report.check(format!("{label}.oracle_closed"), closed, Bound::AtMost { limit: cfg.tolerances.closed_agreement });
            }
            for (col, v) in table.iter_mut().zip([gamma, os, oi, si]) {
                col.push(v);
            }
            let comments = ws.comments(&[
                format!("reference {kind} dimension {} half_width {} seed {}", cfg.dimension, ensemble.config.half_width, cfg.seed),
                format!("probe target {target} a_j {} gamma {gamma} stepper {:?}", a.first(), cfg.stepper),
            ]);
            ws.table(
                &mut report,
                &dir.join(format!("theorem_p{target}_g{gamma}.csv")),
                &comments,
                &[
                    column("t", grid.times()),
                    column("a", a.values()),
                    column("oracle", routes.oracle.values()),
                    column("scheme", routes.scheme.values()),
                    column("integral", routes.integral.values()),
                ],
            )?;
            chart = chart
                .with(Series::new(format!("oracle g={gamma}"), grid.times(), routes.oracle.into_values()))
                .with(Series::new(format!("scheme g={gamma}"), grid.times(), routes.scheme.into_values()).dashed());
        }
        let [gammas, os, oi, si]: [Vec<f64>; 4] = table.try_into().expect("four columns");
        ws.table(
            &mut report,
            &dir.join(format!("theorem_p{target}_deviations.csv")),
            &ws.comments(&["max_t deviations between the three routes".to_string()]),
            &[column("gamma", gammas), column("oracle_scheme", os), column("oracle_integral", oi), column("scheme_integral", si)],
        )?;
        ws.chart(&mut report, &dir.join(format!("theorem_p{target}.svg")), &chart)?;
    }
    Ok(report)
}

/// `cos(2t)`, the closed dynamics of the two-level benchmark from `|up>`.
fn two_level_closed(grid: &TimeGrid) -> Result<Signal> {
    Signal::from_fn(*grid, |t| (2.0 * t).cos())
}

fn theorem_two_level(ws: &Workspace) -> Result<Report> {
    let cfg = ws.cfg;
    let grid = cfg.benchmark_grid()?;
    let dir = ws.subdir("two_level")?;
    let sys = two_level();
    let state = DiagonalState::pure(2, sys.level_of(1.0))?;
    let a = two_level_closed(&grid)?;
    let runs: Vec<Result<(f64, Routes, Signal, Hygiene)>> = cfg
        .gammas
        .par_iter()
        .map(|&gamma| {
            let oracle = oracle_decohered(&sys.observable, &sys.spectrum, &state, &cfg.lindblad(gamma, grid))?;
            let scheme = predict_scheme(&a, gamma)?;
            let integral = predict_integral(&a, &a, gamma)?;
            let exact = damped_oscillator(1.0, gamma, &grid);
            Ok((gamma, Routes { oracle: oracle.signal, scheme, integral }, exact, oracle.hygiene))
        })
        .collect();
    let mut report = Report::default();
    let tol = Bound::AtMost { limit: cfg.tolerances.two_level };
    let mut table = vec![Vec::new(); 7];
    for run in runs {
        let (gamma, routes, exact, hygiene) = run?;
        let label = format!("theorem.two_level.g{gamma}");
        let pairs = [
            ("oracle_scheme", &routes.oracle, &routes.scheme),
            ("oracle_integral", &routes.oracle, &routes.integral),
            ("scheme_integral", &routes.scheme, &routes.integral),
            ("oracle_exact", &routes.oracle, &exact),
            ("scheme_exact", &routes.scheme, &exact),
            ("integral_exact", &routes.integral, &exact),
        ];
        table[0].push(gamma);
        for (k, (name, x, y)) in pairs.into_iter().enumerate() {
            let d = x.max_abs_diff(y)?;
            report.check(format!("{label}.{name}"), d, tol);
            table[k + 1].push(d);
        }
        report.hygiene(&label, hygiene, &cfg.tolerances);
        ws.table(
            &mut report,
            &dir.join(format!("theorem_g{gamma}.csv")),
            &ws.comments(&[format!("H = sigma_x, A = sigma_z, start |up>, gamma {gamma}")]),
            &[
                column("t", grid.times()),
                column("a", a.values()),
                column("oracle", routes.oracle.values()),
                column("scheme", routes.scheme.values()),
                column("integral", routes.integral.values()),
                column("exact", exact.values()),
            ],
        )?;
    }
    let names = ["gamma", "oracle_scheme", "oracle_integral", "scheme_integral", "oracle_exact", "scheme_exact", "integral_exact"];
    let columns: Vec<_> = names.iter().zip(table).map(|(n, v)| column(*n, v)).collect();
    ws.table(&mut report, &dir.join("theorem_deviations.csv"), &ws.comments(&[]), &columns)?;
    Ok(report)
}

struct SweepRow {
    gamma: f64,
    scheme: Signal,
    scheme_dev: f64,
    integral_dev: f64,
    oracle_dev: f64,
    hygiene: Hygiene,
}

pub(crate) fn run_corollary1(ws: &Workspace) -> Result<Report> {
    let cfg = ws.cfg;
    let grid = cfg.grid()?;
    let dir = ws.subdir("sweep")?;
    let mut report = Report { seeds: vec![cfg.seed], ..Report::default() };
    let reference = cfg.reference(ReferenceKind::Exponential)?;
    let a = reference.sample(&grid);
    let floor = solve_volterra(&extract_kernel(&a)?, a.first(), &grid)?.max_abs_diff(&a)?;
    report.metric("corollary1.roundtrip_floor", floor);

    // small-N discrete-map oracle on an exponential ensemble
    let ensemble = Ensemble::generate(&cfg.ensemble_config(ReferenceKind::Exponential, cfg.seed, cfg.oracle_dimension)?)?;
    let j = select_initial_levels(&ensemble.observable, &cfg.probes[..1])?[0];
    let state = DiagonalState::pure(cfg.oracle_dimension, j)?;
    let closed = expectation_closed(&ensemble.spectrum, &ensemble.observable, &state, &grid)?;

    let rows: Vec<Result<SweepRow>> = cfg
        .gammas
        .par_iter()
        .map(|&gamma| {
            let scheme = predict_scheme(&a, gamma)?;
            let integral = predict_integral(&a, &a, gamma)?;
            let mut lc = cfg.lindblad(gamma, grid);
            lc.stepper = Stepper::DiscreteMap;
            let oracle = oracle_decohered(&ensemble.observable, &ensemble.spectrum, &state, &lc)?;
            let sd = scheme.max_abs_diff(&a)?;
            let id = integral.max_abs_diff(&a)?;
            let od = oracle.signal.max_abs_diff(&closed)?;
            Ok(SweepRow { gamma, scheme, scheme_dev: sd, integral_dev: id, oracle_dev: od, hygiene: oracle.hygiene })
        })
        .collect();
    let mut cols = vec![Vec::new(); 4];
    let mut chart = LineChart::new("exponential reference under dephasing", "t", "a(t)")
        .with(Series::new("a", grid.times(), a.values().to_vec()).dashed());
    for row in rows {
        let SweepRow { gamma, scheme, scheme_dev: sd, integral_dev: id, oracle_dev: od, hygiene } = row?;
        let label = format!("corollary1.g{gamma}");
        report.check(format!("{label}.scheme"), sd, Bound::AtMost { limit: cfg.tolerances.corollary1_factor * floor });
        report.metric(format!("{label}.integral"), id);
        report.metric(format!("{label}.oracle"), od);
        report.hygiene(&format!("{label}.oracle"), hygiene, &cfg.tolerances);
        for (c, v) in cols.iter_mut().zip([gamma, sd, id, od]) {
            c.push(v);
        }
        chart = chart.with(Series::new(format!("gamma = {gamma:.4}"), grid.times(), scheme.into_values()));
    }
    let [gammas, sd, id, od]: [Vec<f64>; 4] = cols.try_into().expect("four columns");
    let floor_col = vec![floor; gammas.len()];
    ws.table(
        &mut report,
        &dir.join("corollary1.csv"),
        &ws.comments(&[
            format!("exponential reference tau {}; floor is the gamma = 0 round-trip error", cfg.tau),
            format!("oracle: discrete map, dimension {} seed {}, max_t |a~ - a| against its own closed dynamics", cfg.oracle_dimension, cfg.seed),
        ]),
        &[column("gamma", gammas), column("scheme_dev", sd), column("integral_dev", id), column("oracle_dev", od), column("floor", floor_col)],
    )?;
    ws.chart(&mut report, &dir.join("corollary1.svg"), &chart)?;
    Ok(report)
}

/// `(H, A)` of the two-level benchmark in the `A` eigenbasis.
fn two_level_matrices(sys: &TwoLevel) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let h = hamiltonian_in_observable_basis(&sys.spectrum, &sys.observable)?;
    let a = sys.observable.eigenvalues();
    let a = ComplexMatrix::from_fn(2, |i, j| Complex64::new(if i == j { a[i] } else { 0.0 }, 0.0));
    Ok((h, a))
}

pub(crate) fn run_corollary2(ws: &Workspace) -> Result<Report> {
    let cfg = ws.cfg;
    let mut report = zeno_two_level(ws)?;
    let parts = cfg.references.par_iter().map(|&kind| mori_reference(ws, kind)).collect();
    report.merge(merge_all(parts)?);
    Ok(report)
}

fn zeno_two_level(ws: &Workspace) -> Result<Report> {
    let cfg = ws.cfg;
    let grid = cfg.benchmark_grid()?;
    let dir = ws.subdir("two_level")?;
    let sys = two_level();
    let (h, a_mat) = two_level_matrices(&sys)?;
    let k0 = mori_initial_value(&h, &a_mat)?;
    let state = DiagonalState::pure(2, sys.level_of(1.0))?;
    let a = two_level_closed(&grid)?;
    let mut gammas = cfg.gammas.clone();
    gammas.sort_by(f64::total_cmp);
    let runs: Vec<Result<_>> = gammas
        .par_iter()
        .map(|&gamma| {
            let oracle = oracle_decohered(&sys.observable, &sys.spectrum, &state, &cfg.lindblad(gamma, grid))?;
            let scheme = predict_scheme(&a, gamma)?;
            let zeno = zeno_approximation(k0, gamma, 1.0, &grid)?;
            Ok((gamma, oracle, scheme, zeno))
        })
        .collect();
    let mut report = Report::default();
    report.metric("corollary2.two_level.k0", k0);
    let horizon = grid.horizon();
    let mut cols = vec![Vec::new(); 5];
    let mut signal_cols = vec![column("t", grid.times())];
    let mut chart = LineChart::new("two-level system under strong dephasing", "t", "a~(t)");
    for run in runs {
        let (gamma, oracle, scheme, zeno) = run?;
        let label = format!("corollary2.two_level.g{gamma}");
        let target = k0 / gamma;
        let ro = fit_decay_rate(&oracle.signal, horizon)?;
        let rs = fit_decay_rate(&scheme, horizon)?;
        let rel = |r: f64| (r - target).abs() / target;
        let limit = Bound::AtMost { limit: cfg.tolerances.zeno_rate };
        report.check(format!("{label}.oracle_rate"), rel(ro), limit);
        report.check(format!("{label}.scheme_rate"), rel(rs), limit);
        report.metric(format!("{label}.scheme_zeno"), scheme.max_abs_diff(&zeno)?);
        report.hygiene(&label, oracle.hygiene, &cfg.tolerances);
        for (c, v) in cols.iter_mut().zip([gamma, ro, rs, target, scheme.max_abs_diff(&zeno)?]) {
            c.push(v);
        }
        chart = chart
            .with(Series::new(format!("scheme g={gamma}"), grid.times(), scheme.values().to_vec()))
            .with(Series::new(format!("zeno g={gamma}"), grid.times(), zeno.values().to_vec()).dashed());
        signal_cols.push(column(format!("oracle_g{gamma}"), oracle.signal.into_values()));
        signal_cols.push(column(format!("scheme_g{gamma}"), scheme.into_values()));
        signal_cols.push(column(format!("zeno_g{gamma}"), zeno.into_values()));
    }
    // rates must fall as gamma grows
    let violations = cols[2].windows(2).filter(|w| w[1] >= w[0]).count();
    report.check("corollary2.two_level.monotonic_violations", violations as f64, Bound::AtMost { limit: 0.0 });
    let [g, ro, rs, target, dz]: [Vec<f64>; 5] = cols.try_into().expect("five columns");
    ws.table(
        &mut report,
        &dir.join("corollary2_rates.csv"),
        &ws.comments(&[format!("fitted decay rates over [0, {horizon}] against K(0)/gamma with K(0) = {k0}")]),
        &[column("gamma", g), column("oracle_rate", ro), column("scheme_rate", rs), column("k0_over_gamma", target), column("scheme_zeno_dev", dz)],
    )?;
    ws.table(&mut report, &dir.join("corollary2_signals.csv"), &ws.comments(&[]), &signal_cols)?;
    ws.chart(&mut report, &dir.join("corollary2.svg"), &chart)?;
    Ok(report)
}

/// Mori `K(0)` against `smooth(0)` of the kernel extracted from `C(t)`.
fn mori_reference(ws: &Workspace, kind: ReferenceKind) -> Result<Report> {
    let cfg = ws.cfg;
    let dir = ws.subdir(kind.name())?;
    let mut report = Report { seeds: vec![cfg.seed], ..Report::default() };
    let grid = TimeGrid::covering(cfg.mori_dt, cfg.mori_horizon)?;
    let ensemble = Ensemble::generate(&cfg.ensemble_config(kind, cfg.seed, cfg.dimension)?)?;
    let c = autocorrelation(&ensemble.spectrum, &ensemble.observable, &grid)?;
    let kernel = extract_kernel(&c)?;
    let mori = mori_initial_value_spectral(&ensemble.spectrum, &ensemble.observable)?;
    let smooth0 = kernel.smooth().first();
    let label = format!("corollary2.{kind}");
    report.metric(format!("{label}.mori_k0"), mori);
    report.metric(format!("{label}.extracted_k0"), smooth0);
    report.check(format!("{label}.mori_rel"), (smooth0 - mori).abs() / mori.abs(), Bound::AtMost { limit: cfg.tolerances.mori });
    report.check(
        format!("{label}.delta_weight"),
        kernel.delta_weight().abs(),
        Bound::AtMost { limit: cfg.tolerances.mori_delta * smooth0.abs() },
    );
    let comments = ws.comments(&[
        format!("kernel extracted from the autocorrelation Tr{{A(t)A}}/Tr{{A^2}}, dimension {} half_width {} seed {}", cfg.dimension, ensemble.config.half_width, cfg.seed),
        format!("mori K(0) {mori} delta_weight {}", kernel.delta_weight()),
    ]);
    let path = dir.join("corollary2_kernel.csv");
    write_signal_csv(&path, kernel.smooth(), &comments)?;
    ws.record(&mut report, &path);
    Ok(report)
}

struct RoundTrip {
    kind: ReferenceKind,
    a: Signal,
    back: Signal,
    coarse: f64,
    fine: f64,
}

pub(crate) fn run_roundtrip(ws: &Workspace) -> Result<Report> {
    let cfg = ws.cfg;
    let grid = cfg.grid()?;
    let dir = ws.subdir("roundtrip")?;
    let rows: Vec<Result<RoundTrip>> = cfg
        .references
        .par_iter()
        .map(|&kind| {
            let g = cfg.reference(kind)?;
            let trip = |grid: &TimeGrid| -> Result<(Signal, Signal)> {
                let a = g.sample(grid);
                let back = solve_volterra(&extract_kernel(&a)?, a.first(), grid)?;
                Ok((a, back))
            };
            let (a, back) = trip(&grid)?;
            let (fine_a, fine_back) = trip(&grid.refined())?;
            let (coarse, fine) = (back.max_abs_diff(&a)?, fine_back.max_abs_diff(&fine_a)?);
            Ok(RoundTrip { kind, a, back, coarse, fine })
        })
        .collect();
    let mut report = Report::default();
    let mut cols = vec![Vec::new(); 4];
    for (index, row) in rows.into_iter().enumerate() {
        let RoundTrip { kind, a, back, coarse, fine } = row?;
        let ratio = coarse / fine;
        let label = format!("roundtrip.{kind}");
        report.metric(format!("{label}.error_dt"), coarse);
        report.metric(format!("{label}.error_dt_half"), fine);
        report.check(
            format!("{label}.ratio"),
            ratio,
            Bound::Within { lo: cfg.tolerances.roundtrip_ratio_min, hi: cfg.tolerances.roundtrip_ratio_max },
        );
        for (c, v) in cols.iter_mut().zip([index as f64, coarse, fine, ratio]) {
            c.push(v);
        }
        ws.table(
            &mut report,
            &dir.join(format!("roundtrip_{kind}.csv")),
            &ws.comments(&[format!("reference {kind} dt {}", grid.dt())]),
            &[column("t", grid.times()), column("g", a.values()), column("roundtrip", back.values())],
        )?;
    }
    let [idx, coarse, fine, ratio]: [Vec<f64>; 4] = cols.try_into().expect("four columns");
    let legend = cfg.references.iter().enumerate().map(|(i, k)| format!("{i}={k}")).collect::<Vec<_>>().join(" ");
    ws.table(
        &mut report,
        &dir.join("roundtrip.csv"),
        &ws.comments(&[format!("reference index: {legend}"), format!("dt {} and {}", grid.dt(), grid.dt() / 2.0)]),
        &[column("reference", idx), column("error_dt", coarse), column("error_dt_half", fine), column("ratio", ratio)],
    )?;
    Ok(report)
}

pub(crate) fn run_laplace(ws: &Workspace) -> Result<Report> {
    let cfg = ws.cfg;
    let mut report = Report::default();

    let grid = cfg.benchmark_grid()?;
    let sys = two_level();
    let state = DiagonalState::pure(2, sys.level_of(1.0))?;
    let a = two_level_closed(&grid)?;
    let samples = laplace_samples(grid.horizon(), 1.0, cfg.laplace_samples)?;
    let runs: Vec<Result<_>> = cfg
        .gammas
        .par_iter()
        .map(|&gamma| {
            let oracle = oracle_decohered(&sys.observable, &sys.spectrum, &state, &cfg.lindblad(gamma, grid))?;
            Ok((gamma, oracle))
        })
        .collect();
    let dir = ws.subdir("two_level")?;
    for run in runs {
        let (gamma, oracle) = run?;
        let label = format!("laplace.two_level.g{gamma}");
        let dev = check_laplace_shift(&a, &oracle.signal, gamma, &samples)?;
        report.check(format!("{label}.deviation"), dev, Bound::AtMost { limit: cfg.tolerances.laplace });
        report.hygiene(&label, oracle.hygiene, &cfg.tolerances);
        laplace_table(ws, &mut report, &dir.join(format!("laplace_g{gamma}.csv")), &a, &oracle.signal, gamma, &samples)?;
    }

    let kind = cfg.references[0];
    let dir = ws.subdir(kind.name())?;
    let grid = cfg.grid()?;
    let ensemble = Ensemble::generate(&cfg.ensemble_config(kind, cfg.seed, cfg.dimension)?)?;
    let j = select_initial_levels(&ensemble.observable, &cfg.probes[..1])?[0];
    let a = expectation_closed(&ensemble.spectrum, &ensemble.observable, &DiagonalState::pure(cfg.dimension, j)?, &grid)?;
    let samples = laplace_samples(grid.horizon(), ensemble.config.half_width, cfg.laplace_samples)?;
    report.seeds.push(cfg.seed);
    for &gamma in &cfg.gammas {
        let scheme = predict_scheme(&a, gamma)?;
        let dev = check_laplace_shift(&a, &scheme, gamma, &samples)?;
        report.check(format!("laplace.{kind}.g{gamma}.deviation"), dev, Bound::AtMost { limit: cfg.tolerances.laplace });
        laplace_table(ws, &mut report, &dir.join(format!("laplace_g{gamma}.csv")), &a, &scheme, gamma, &samples)?;
    }
    Ok(report)
}

fn laplace_table(
    ws: &Workspace,
    report: &mut Report,
    path: &Path,
    a: &Signal,
    a_tilde: &Signal,
    gamma: f64,
    samples: &[Complex64],
) -> Result<()> {
    let mut cols = vec![Vec::new(); 5];
    for &s in samples {
        let shifted = kernel_transform(a, s + gamma)?.value;
        let damped = kernel_transform(a_tilde, s)?.value;
        for (c, v) in cols.iter_mut().zip([s.re, shifted.re, shifted.im, damped.re, damped.im]) {
            c.push(v);
        }
    }
    let names = ["s", "kappa_shifted_re", "kappa_shifted_im", "kappa_tilde_re", "kappa_tilde_im"];
    let columns: Vec<_> = names.iter().zip(cols).map(|(n, v)| column(*n, v)).collect();
    ws.table(report, path, &ws.comments(&[format!("kappa(s + gamma) against kappa~(s), gamma {gamma}")]), &columns)
}
