//! Text formats for sweeps, Bode curves, error surfaces, match summaries and
//! layer weights.
//!
//! Numbers are written with `Display`, which for floats is the shortest
//! string that parses back to the same value, so every format round-trips
//! exactly. Time stamps are the exception: they are printed with twelve
//! decimals.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuator::{PDGains, TimeSeries};
use crate::freq::{BodeMagnitude, FrequencyBand};
use crate::matcher::{GainGrid, MatchResult};
use crate::num::Real;
use crate::surgery::MlpFirstLayer;

pub const TIME_SERIES_HEADER: &str = "t,theta_des,theta_meas";
pub const BODE_HEADER: &str = "freq_hz,mag_db";
pub const SURFACE_HEADER: &str = "kp,kd,mse_db2";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("write failed: {0}")]
    Write(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl IoError {
    fn format(line: usize, message: impl Into<String>) -> Self {
        IoError::Format {
            line,
            message: message.into(),
        }
    }

    /// Attaches a path to a parse error raised while reading that file.
    pub fn in_file(self, path: &Path) -> Self {
        match self {
            IoError::Format { line, message } => IoError::Format {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        }
    }
}

pub fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    fs::write(path, contents).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_field<T: Real>(s: &str, line: usize) -> Result<T, IoError> {
    s.trim()
        .parse::<T>()
        .map_err(|_| IoError::format(line, format!("not a number: {s:?}")))
}

/// Splits numeric CSV rows after checking the header. Blank lines are skipped.
fn numeric_rows<T: Real, R: BufRead>(reader: R, header: &str) -> Result<Vec<Vec<T>>, IoError> {
    let columns = header.split(',').count();
    let mut lines = reader.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first.trim() != header {
        return Err(IoError::format(1, format!("expected header {header:?}, found {:?}", first.trim())));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let n = k + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(IoError::format(n, format!("expected {columns} fields, found {}", fields.len())));
        }
        rows.push(fields.iter().map(|f| parse_field(f, n)).collect::<Result<_, _>>()?);
    }
    Ok(rows)
}

pub fn write_time_series<T: Real, W: Write>(ts: &TimeSeries<T>, mut w: W) -> Result<(), IoError> {
    writeln!(w, "{TIME_SERIES_HEADER}")?;
    for k in 0..ts.len() {
        let t = k as f64 / ts.sample_rate.as_f64();
        writeln!(w, "{t:.12},{},{}", ts.command[k], ts.measured[k])?;
    }
    Ok(())
}

/// Reads a sweep log. The sample rate is recovered from the time column,
/// which must be evenly spaced.
pub fn read_time_series<T: Real, R: BufRead>(reader: R) -> Result<TimeSeries<T>, IoError> {
    let rows = numeric_rows::<f64, _>(reader, TIME_SERIES_HEADER)?;
    if rows.len() < 2 {
        return Err(IoError::format(1, "need at least two samples"));
    }
    let span = rows[rows.len() - 1][0] - rows[0][0];
    let dt = span / (rows.len() - 1) as f64;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(IoError::format(2, "time column must increase"));
    }
    for (k, r) in rows.iter().enumerate() {
        let expected = rows[0][0] + k as f64 * dt;
        if (r[0] - expected).abs() > 1e-6 * dt.max(1e-9) + 1e-9 {
            return Err(IoError::format(k + 2, "time column is not evenly spaced"));
        }
    }
    let mut fs = 1.0 / dt;
    if (fs - fs.round()).abs() < 1e-6 * fs {
        fs = fs.round();
    }
    let conv = |v: f64, line| T::from_f64(v).ok_or_else(|| IoError::format(line, "value out of range"));
    let mut command = Vec::with_capacity(rows.len());
    let mut measured = Vec::with_capacity(rows.len());
    for (k, r) in rows.iter().enumerate() {
        command.push(conv(r[1], k + 2)?);
        measured.push(conv(r[2], k + 2)?);
    }
    TimeSeries::new(conv(fs, 2)?, command, measured).map_err(|e| IoError::format(2, e.to_string()))
}

pub fn write_bode<T: Real, W: Write>(curve: &BodeMagnitude<T>, mut w: W) -> Result<(), IoError> {
    writeln!(w, "{BODE_HEADER}")?;
    for (f, m) in curve.frequencies.iter().zip(&curve.magnitude_db) {
        writeln!(w, "{f},{m}")?;
    }
    Ok(())
}

pub fn read_bode<T: Real, R: BufRead>(reader: R) -> Result<BodeMagnitude<T>, IoError> {
    let rows = numeric_rows::<T, _>(reader, BODE_HEADER)?;
    let (f, m) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
    BodeMagnitude::new(f, m).map_err(|e| IoError::format(1, e.to_string()))
}

/// Infinite cells are written as `inf`.
pub fn write_surface<T: Real, W: Write>(result: &MatchResult<T>, mut w: W) -> Result<(), IoError> {
    writeln!(w, "{SURFACE_HEADER}")?;
    let g = &result.grid;
    for i in 0..g.kp_count {
        for j in 0..g.kd_count {
            writeln!(w, "{},{},{}", g.kp_at(i), g.kd_at(j), result.error_at(i, j))?;
        }
    }
    Ok(())
}

/// Rows of `(kp, kd, mse)` in file order.
pub fn read_surface<T: Real, R: BufRead>(reader: R) -> Result<Vec<(T, T, T)>, IoError> {
    Ok(numeric_rows::<T, _>(reader, SURFACE_HEADER)?
        .into_iter()
        .map(|r| (r[0], r[1], r[2]))
        .collect())
}

/// JSON summary of a grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchSummary<T> {
    pub mode: String,
    pub best_gains: PDGains<T>,
    pub best_index: (usize, usize),
    /// dB²
    pub best_error: T,
    pub band: FrequencyBand<T>,
    pub grid: GainGrid<T>,
    pub reference_points: usize,
}

impl<T: Real> MatchSummary<T> {
    pub fn new(result: &MatchResult<T>, mode: &str, reference_points: usize) -> Self {
        Self {
            mode: mode.to_string(),
            best_gains: result.best_gains,
            best_index: result.best_index,
            best_error: result.best_error,
            band: result.band,
            grid: result.grid,
            reference_points,
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<S: Serialize>(value: &S) -> Result<String, IoError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Shape line of the weight interchange format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerHeader {
    pub hidden: usize,
    pub inputs: usize,
}

/// One JSON shape line, a CSV header `bias,w0,..,w{n-1}`, then one row per
/// hidden unit.
pub fn write_layer<T: Real, W: Write>(layer: &MlpFirstLayer<T>, mut w: W) -> Result<(), IoError> {
    let (hidden, inputs) = layer.shape();
    writeln!(w, "{}", serde_json::to_string(&LayerHeader { hidden, inputs })?)?;
    write!(w, "bias")?;
    for c in 0..inputs {
        write!(w, ",w{c}")?;
    }
    writeln!(w)?;
    for r in 0..hidden {
        write!(w, "{}", layer.bias()[r])?;
        for v in layer.row(r) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_layer<T: Real, R: BufRead>(reader: R) -> Result<MlpFirstLayer<T>, IoError> {
    let mut lines = reader.lines();
    let head = lines.next().transpose()?.unwrap_or_default();
    let LayerHeader { hidden, inputs } =
        serde_json::from_str(&head).map_err(|e| IoError::format(1, format!("bad shape header: {e}")))?;
    let mut rest = String::new();
    for line in lines {
        rest.push_str(&line?);
        rest.push('\n');
    }
    let csv_header: String = std::iter::once("bias".to_string())
        .chain((0..inputs).map(|c| format!("w{c}")))
        .collect::<Vec<_>>()
        .join(",");
    let rows = numeric_rows::<T, _>(BufReader::new(rest.as_bytes()), &csv_header)
        .map_err(|e| match e {
            IoError::Format { line, message } => IoError::format(line + 1, message),
            other => other,
        })?;
    if rows.len() != hidden {
        return Err(IoError::format(1, format!("header says {hidden} rows, found {}", rows.len())));
    }
    let mut bias = Vec::with_capacity(hidden);
    let mut weights = Vec::with_capacity(hidden * inputs);
    for r in rows {
        bias.push(r[0]);
        weights.extend_from_slice(&r[1..]);
    }
    MlpFirstLayer::new(hidden, inputs, weights, bias).map_err(|e| IoError::format(1, e.to_string()))
}
