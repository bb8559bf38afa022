//! On-disk formats.
//!
//! CSV files start with `#` comment lines followed by a column header and
//! rows of decimals printed with 17 significant digits, so every `f64`
//! round-trips bit for bit. Ensembles use a small little-endian binary
//! container (magic `MEMK1`) with a JSON sidecar holding the configuration.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelModel;
use crate::signal::{Signal, TimeGrid};
use crate::spectral_model::{Ensemble, EthEnsembleConfig, EthObservable, Spectrum};

const MAGIC: &[u8; 8] = b"MEMK1\0\0\0";
const DELTA_PREFIX: &str = "# delta_weight=";

fn format_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), reason: reason.into() }
}

/// `{:.16e}`: 17 significant digits.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_comments(out: &mut impl Write, comments: &[String]) -> Result<()> {
    for c in comments {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    Ok(())
}

/// Writes `t,value` rows under a `# t,value` header.
pub fn write_signal_csv(path: &Path, signal: &Signal, comments: &[String]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_comments(&mut out, comments)?;
    writeln!(out, "# t,value")?;
    let grid = signal.grid();
    for (k, v) in signal.values().iter().enumerate() {
        writeln!(out, "{},{}", format_value(grid.time(k)), format_value(*v))?;
    }
    out.flush()?;
    Ok(())
}

/// Non-comment rows of a CSV file as numbers; a non-numeric first row is
/// taken as a column header and skipped.
fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut comments = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|x| x.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if rows.is_empty() => continue,
            Err(e) => return Err(format_error(path, format!("line {}: {e}", lineno + 1))),
        }
    }
    Ok((comments, rows))
}

/// Rebuilds the grid from the first column, which must be uniform and start at 0.
fn grid_from_times(path: &Path, times: &[f64]) -> Result<TimeGrid> {
    if times.len() < 2 {
        return Err(format_error(path, "need at least two rows"));
    }
    if times[0] != 0.0 {
        return Err(format_error(path, format!("first time is {}, not 0", times[0])));
    }
    let dt = times[1] - times[0];
    let grid = TimeGrid::new(dt, times.len() - 1).map_err(|e| format_error(path, e.to_string()))?;
    for (k, t) in times.iter().enumerate() {
        if (t - grid.time(k)).abs() > 1e-9 * dt.max(grid.time(k)) {
            return Err(format_error(path, format!("time column not uniform at row {k}")));
        }
    }
    Ok(grid)
}

fn two_columns(path: &Path, rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut times = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (k, row) in rows.iter().enumerate() {
        if row.len() != 2 {
            return Err(format_error(path, format!("row {k} has {} columns, expected 2", row.len())));
        }
        times.push(row[0]);
        values.push(row[1]);
    }
    Ok((times, values))
}

pub fn read_signal_csv(path: &Path) -> Result<Signal> {
    let (_, rows) = read_rows(path)?;
    let (times, values) = two_columns(path, &rows)?;
    let grid = grid_from_times(path, &times)?;
    Signal::new(grid, values)
}

/// `# delta_weight=<value>` followed by `tau,value` rows.
pub fn write_kernel_csv(path: &Path, kernel: &KernelModel, comments: &[String]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_comments(&mut out, comments)?;
    writeln!(out, "{DELTA_PREFIX}{}", format_value(kernel.delta_weight()))?;
    writeln!(out, "tau,value")?;
    let grid = kernel.smooth().grid();
    for (k, v) in kernel.smooth().values().iter().enumerate() {
        writeln!(out, "{},{}", format_value(grid.time(k)), format_value(*v))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_kernel_csv(path: &Path) -> Result<KernelModel> {
    let (comments, rows) = read_rows(path)?;
    let delta = comments
        .iter()
        .find_map(|c| c.strip_prefix("delta_weight="))
        .ok_or_else(|| format_error(path, "missing delta_weight comment"))?;
    let delta: f64 = delta.trim().parse().map_err(|e| format_error(path, format!("delta_weight: {e}")))?;
    let (times, values) = two_columns(path, &rows)?;
    let grid = grid_from_times(path, &times)?;
    KernelModel::new(delta, Signal::new(grid, values)?)
}

/// Named columns of equal length under one header row.
pub fn write_table_csv(path: &Path, comments: &[String], columns: &[(String, Vec<f64>)]) -> Result<()> {
    let len = columns.first().map_or(0, |c| c.1.len());
    if let Some((name, col)) = columns.iter().find(|c| c.1.len() != len) {
        return Err(Error::input(format!("column {name} has {} rows, expected {len}", col.len())));
    }
    let mut out = BufWriter::new(File::create(path)?);
    write_comments(&mut out, comments)?;
    let header: Vec<&str> = columns.iter().map(|c| c.0.as_str()).collect();
    writeln!(out, "{}", header.join(","))?;
    for k in 0..len {
        let row: Vec<String> = columns.iter().map(|c| format_value(c.1[k])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Header and columns of a file written by [`write_table_csv`].
pub fn read_table_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut header = None;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        match &header {
            None => {
                let names: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
                columns = vec![Vec::new(); names.len()];
                header = Some(names);
            }
            Some(names) => {
                let cells: Vec<&str> = line.split(',').collect();
                if cells.len() != names.len() {
                    return Err(format_error(path, format!("row has {} cells, header has {}", cells.len(), names.len())));
                }
                for (col, cell) in columns.iter_mut().zip(cells) {
                    col.push(cell.trim().parse().map_err(|e| format_error(path, format!("{e}")))?);
                }
            }
        }
    }
    let header = header.ok_or_else(|| format_error(path, "no header row"))?;
    Ok((header, columns))
}

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleSidecar {
    format: String,
    dimension: usize,
    config: EthEnsembleConfig,
}

/// Path of the JSON sidecar next to an ensemble file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn write_f64s(out: &mut impl Write, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn mat_values(m: &Mat<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.ncols()).flat_map(move |j| m.col_as_slice(j).iter().copied())
}

/// Layout after the 8-byte magic: `u64` dimension, energies, eigenvalues,
/// then the observable matrix and its eigenbasis, both column-major.
pub fn save_ensemble(path: &Path, ensemble: &Ensemble) -> Result<()> {
    let n = ensemble.spectrum.dimension();
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(n as u64).to_le_bytes())?;
    write_f64s(&mut out, ensemble.spectrum.energies().iter().copied())?;
    write_f64s(&mut out, ensemble.observable.eigenvalues().iter().copied())?;
    write_f64s(&mut out, mat_values(ensemble.observable.matrix()))?;
    write_f64s(&mut out, mat_values(ensemble.observable.eigenbasis()))?;
    out.flush()?;
    let sidecar = EnsembleSidecar { format: "MEMK1".into(), dimension: n, config: ensemble.config };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

fn read_f64s(input: &mut impl Read, count: usize) -> std::io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    input.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect())
}

fn read_mat(input: &mut impl Read, n: usize) -> std::io::Result<Mat<f64>> {
    let values = read_f64s(input, n * n)?;
    Ok(Mat::from_fn(n, n, |i, j| values[j * n + i]))
}

pub fn load_ensemble(path: &Path) -> Result<Ensemble> {
    let sidecar: EnsembleSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(format_error(path, "not a MEMK1 ensemble file"));
    }
    let mut dim = [0u8; 8];
    input.read_exact(&mut dim)?;
    let n = u64::from_le_bytes(dim) as usize;
    if n != sidecar.dimension || n != sidecar.config.dimension {
        return Err(format_error(path, format!("dimension {n} disagrees with sidecar {}", sidecar.dimension)));
    }
    let truncated = |e: std::io::Error| format_error(path, format!("truncated: {e}"));
    let energies = read_f64s(&mut input, n).map_err(truncated)?;
    let eigenvalues = read_f64s(&mut input, n).map_err(truncated)?;
    let matrix = read_mat(&mut input, n).map_err(truncated)?;
    let eigenbasis = read_mat(&mut input, n).map_err(truncated)?;
    let spectrum = Spectrum::new(energies, sidecar.config.half_width)?;
    let observable = EthObservable::from_parts(matrix, eigenvalues, eigenbasis)?;
    Ok(Ensemble { config: sidecar.config, spectrum, observable })
}
