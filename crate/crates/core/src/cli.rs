//! Command-line driver. Every operation reads and writes files so each stage
//! of the pipeline can be rerun and diffed independently.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
//! failure (divergence, singularity, nothing to estimate), 3 file I/O.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::actuator::{simulate_sweep, PDGains, SimError, TimeSeries};
use crate::config::{ConfigError, PipelineConfig};
use crate::freq::{analytic_bode, estimate_frf, log_space, AnalysisError, BodeMagnitude};
use crate::io::{self, IoError, MatchSummary, BODE_HEADER, TIME_SERIES_HEADER};
use crate::matcher::{
    check_coverage, derive_ranges, CoverageReport, GridMatcher, MatchError, RandomizationConfig, RandomizationRange,
};
use crate::plot::{bode_overlay_svg, heatmap_svg};
use crate::surgery::{widen_input_layer, MlpFirstLayer, SurgeryError};

#[derive(Debug, Parser)]
#[command(name = "impedance", version, about = "Actuator frequency-response identification toolkit")]
pub struct Cli {
    /// Pipeline configuration (JSON). Missing sections take the knee defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file, or output directory for `match`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a chirp sweep and write the sweep log CSV.
    Sweep,
    /// Estimate a Bode magnitude from a sweep log CSV.
    Estimate(EstimateArgs),
    /// Closed-form Bode magnitude of the configured joint.
    Bode(BodeArgs),
    /// Grid-search the gains whose response best matches a reference.
    Match(MatchArgs),
    /// Randomization ranges covering several match summaries.
    Ranges(RangesArgs),
    /// Append zero-weight inputs to a first-layer weight file.
    Widen(WidenArgs),
    /// Print the effective configuration as JSON.
    ShowConfig,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Sweep log CSV (`t,theta_des,theta_meas`).
    #[arg(long)]
    pub input: PathBuf,
    /// Segment length in seconds (default from config).
    #[arg(long)]
    pub window: Option<f64>,
    /// Segment overlap fraction in [0, 1) (default from config).
    #[arg(long)]
    pub overlap: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BodeArgs {
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[arg(long, default_value_t = 0.05)]
    pub f_min: f64,
    #[arg(long, default_value_t = 50.0)]
    pub f_max: f64,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Reference: a Bode CSV (`freq_hz,mag_db`) or a sweep log CSV, which is
    /// estimated with the configured segmenting first.
    #[arg(long)]
    pub reference: PathBuf,
    /// Worker threads; defaults to all cores. Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RangesArgs {
    /// Match summaries (or bare `{"kp":..,"kd":..}` objects), at least two.
    #[arg(required = true, num_args = 1..)]
    pub summaries: Vec<PathBuf>,
    #[arg(long)]
    pub kp_step: Option<f64>,
    #[arg(long)]
    pub kd_step: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
}

#[derive(Debug, Args)]
pub struct WidenArgs {
    /// Weight file: JSON shape line plus CSV rows.
    #[arg(long)]
    pub input: PathBuf,
    /// Number of inputs to append.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Verify on random inputs that the widened layer reproduces the original.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Divergence { .. } | SimError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Model(s) => s.into(),
            AnalysisError::Singularity { .. } | AnalysisError::Estimation(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<MatchError> for CliError {
    fn from(e: MatchError) -> Self {
        match e {
            MatchError::Analysis(a) => a.into(),
            MatchError::Sim(s) => s.into(),
            MatchError::NoFiniteCell => CliError::Numeric(e.to_string()),
            MatchError::Pool(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SurgeryError> for CliError {
    fn from(e: SurgeryError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Format { .. } | IoError::Json(_) => CliError::Validation(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig<f64>, CliError> {
    match path {
        Some(p) => Ok(PipelineConfig::from_json(&io::read_file(p)?)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn out_path(out: Option<&Path>) -> Result<&Path, CliError> {
    out.ok_or_else(|| CliError::Validation("--out is required".into()))
}

fn write_with(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<(), IoError>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(IoError::from)?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<fs::File>, CliError> {
    let file = fs::File::open(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(BufReader::new(file))
}

fn read_time_series(path: &Path) -> Result<TimeSeries<f64>, CliError> {
    Ok(io::read_time_series(open(path)?).map_err(|e| e.in_file(path))?)
}

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Sweep => cmd_sweep(&cfg, cli.seed, out_path(out)?),
        Command::Estimate(a) => cmd_estimate(&cfg, a, out_path(out)?),
        Command::Bode(a) => cmd_bode(&cfg, a, out_path(out)?),
        Command::Match(a) => cmd_match(&cfg, a, cli.seed, out_path(out)?),
        Command::Ranges(a) => cmd_ranges(&cfg, a, out_path(out)?),
        Command::Widen(a) => cmd_widen(a, cli.seed, out_path(out)?),
        Command::ShowConfig => {
            let text = io::to_json(&cfg)?;
            match out {
                Some(p) => Ok(io::write_file(p, &text)?),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

pub fn cmd_sweep(cfg: &PipelineConfig<f64>, seed: u64, out: &Path) -> Result<(), CliError> {
    let a = &cfg.actuator_sim;
    let ts = simulate_sweep(&a.params, &a.gains, &cfg.excitation.chirp, &a.sim, seed)?;
    write_with(out, |w| io::write_time_series(&ts, w))
}

pub fn cmd_estimate(cfg: &PipelineConfig<f64>, args: &EstimateArgs, out: &Path) -> Result<(), CliError> {
    let ts = read_time_series(&args.input)?;
    let window = args.window.unwrap_or(cfg.freq_analysis.welch.window_seconds);
    let overlap = args.overlap.unwrap_or(cfg.freq_analysis.welch.overlap_fraction);
    let curve = estimate_frf(&ts, window, overlap)?;
    write_with(out, |w| io::write_bode(&curve, w))
}

pub fn cmd_bode(cfg: &PipelineConfig<f64>, args: &BodeArgs, out: &Path) -> Result<(), CliError> {
    if !(args.f_min > 0.0 && args.f_min < args.f_max && args.f_max.is_finite() && args.points >= 2) {
        return Err(CliError::Validation(format!(
            "need 0 < f_min < f_max and at least 2 points, got {}..{} with {}",
            args.f_min, args.f_max, args.points
        )));
    }
    let freqs = log_space(args.f_min, args.f_max, args.points);
    let curve = analytic_bode(&cfg.actuator_sim.params, &cfg.actuator_sim.gains, &freqs)?;
    write_with(out, |w| io::write_bode(&curve, w))
}

fn read_reference(cfg: &PipelineConfig<f64>, path: &Path) -> Result<BodeMagnitude<f64>, CliError> {
    let text = io::read_file(path)?;
    let first = text.lines().next().unwrap_or_default().trim();
    if first == BODE_HEADER {
        Ok(io::read_bode(text.as_bytes()).map_err(|e| e.in_file(path))?)
    } else if first == TIME_SERIES_HEADER {
        let ts = io::read_time_series(text.as_bytes()).map_err(|e| e.in_file(path))?;
        Ok(cfg.freq_analysis.welch.estimate(&ts)?)
    } else {
        Err(CliError::Validation(format!(
            "{}: expected a `{BODE_HEADER}` or `{TIME_SERIES_HEADER}` header",
            path.display()
        )))
    }
}

pub fn cmd_match(cfg: &PipelineConfig<f64>, args: &MatchArgs, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    if args.workers == Some(0) {
        return Err(CliError::Validation("--workers must be at least 1".into()));
    }
    let reference = read_reference(cfg, &args.reference)?;
    let mode = cfg.match_mode(seed);
    let matcher = GridMatcher::new(
        &reference,
        &cfg.actuator_sim.params,
        &cfg.matcher.grid,
        &cfg.freq_analysis.band,
        mode,
    )?;
    let result = matcher.run(args.workers)?;
    let best_curve = matcher.candidate_curve(&result.best_gains)?;

    fs::create_dir_all(out_dir).map_err(|source| IoError::File {
        path: out_dir.to_path_buf(),
        source,
    })?;
    write_with(&out_dir.join("surface.csv"), |w| io::write_surface(&result, w))?;
    let summary = MatchSummary::new(&result, mode.name(), matcher.reference_in_band().len());
    io::write_file(&out_dir.join("summary.json"), &io::to_json(&summary)?)?;
    io::write_file(&out_dir.join("heatmap.svg"), &heatmap_svg(&result))?;
    let label = format!("Kp={} Kd={}", result.best_gains.kp, result.best_gains.kd);
    let in_band = reference.restrict(&cfg.freq_analysis.band)?;
    let candidate = best_curve.restrict(&cfg.freq_analysis.band).unwrap_or(best_curve);
    io::write_file(&out_dir.join("bode_overlay.svg"), &bode_overlay_svg(&in_band, &candidate, &label))?;
    Ok(())
}

/// Output of `ranges`.
#[derive(Debug, Serialize)]
pub struct RangesReport {
    pub randomization: RandomizationConfig<f64>,
    pub range: RandomizationRange<f64>,
    pub inputs: Vec<PDGains<f64>>,
    pub coverage: CoverageReport<f64>,
}

fn read_gains(path: &Path) -> Result<PDGains<f64>, CliError> {
    let value: serde_json::Value = serde_json::from_str(&io::read_file(path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let gains = value.get("best_gains").cloned().unwrap_or(value);
    serde_json::from_value(gains).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn cmd_ranges(cfg: &PipelineConfig<f64>, args: &RangesArgs, out: &Path) -> Result<(), CliError> {
    let inputs = args.summaries.iter().map(|p| read_gains(p)).collect::<Result<Vec<_>, _>>()?;
    let mut options = cfg.matcher.ranges;
    if let Some(s) = args.kp_step {
        options.kp_step = s;
    }
    if let Some(s) = args.kd_step {
        options.kd_step = s;
    }
    if let Some(m) = args.margin {
        options.margin_factor = m;
    }
    let range = derive_ranges(&inputs, &options)?;
    let coverage = check_coverage(&range, &inputs);
    if !coverage.is_covered() {
        eprintln!("warning: derived range leaves inputs uncovered: {coverage:?}");
    }
    let report = RangesReport {
        randomization: range.to_config(),
        range,
        inputs,
        coverage,
    };
    Ok(io::write_file(out, &io::to_json(&report)?)?)
}

/// Compares pre-activations of `original` and `widened` on `trials` random
/// inputs; extra inputs get values spanning many magnitudes.
pub fn check_preservation(
    original: &MlpFirstLayer<f64>,
    widened: &MlpFirstLayer<f64>,
    trials: usize,
    seed: u64,
) -> Result<bool, SurgeryError> {
    let (_, n) = original.shape();
    let (_, m) = widened.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let mut xw = x.clone();
        for _ in n..m {
            let exp = rng.random_range(-6.0..12.0);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            xw.push(sign * 10f64.powf(exp));
        }
        if original.preactivations(&x)? != widened.preactivations(&xw)? {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn cmd_widen(args: &WidenArgs, seed: u64, out: &Path) -> Result<(), CliError> {
    let layer: MlpFirstLayer<f64> = io::read_layer(open(&args.input)?).map_err(|e| e.in_file(&args.input))?;
    let mut wide = layer.clone();
    for _ in 0..args.count {
        wide = widen_input_layer(&wide);
    }
    if args.check && !check_preservation(&layer, &wide, 1000, seed)? {
        return Err(CliError::Numeric("widened layer changed the pre-activations".into()));
    }
    write_with(out, |w| io::write_layer(&wide, w))
}
