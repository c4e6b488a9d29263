use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gravhom::SolverKind;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "gravhom", version, about = "Gravity-aligned homography solvers and synthetic benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Numerical accuracy on noise-free minimal problems.
    Stability(StabilityArgs),
    /// Pose, focal length and distortion errors against pixel noise.
    Noise(NoiseArgs),
    /// Effect of yaw drift in the reported rotations, before and after refinement.
    Drift(DriftArgs),
    /// Mean solver wall time per call.
    Timing(TimingArgs),
    /// LO-RANSAC on contaminated synthetic scenes.
    Ransac(RansacArgs),
    /// Solve from a correspondence file.
    Solve(SolveArgs),
    /// Write a synthetic scene as a correspondence file plus ground truth.
    Generate(GenerateArgs),
    /// Print the machine-readable column manifest.
    Schema,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = "gravhom-out")]
    pub output: PathBuf,
    /// Format of per-instance tables.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Leave wall-clock columns empty so reruns are byte-identical.
    #[arg(long)]
    pub no_timings: bool,
}

// Aliases keep clap from treating the parsed lists as repeated flags.
pub type SolverList = Vec<SolverKind>;
pub type Levels = Vec<f64>;

pub fn parse_solver(s: &str) -> Result<SolverKind, String> {
    s.parse().map_err(|e: gravhom::Error| e.to_string())
}

/// Comma-separated list of solvers, `all` for every solver.
pub fn parse_solvers(s: &str) -> Result<Vec<SolverKind>, String> {
    if s == "all" {
        return Ok(SolverKind::ALL.to_vec());
    }
    let v: Vec<SolverKind> = s.split(',').map(|x| parse_solver(x.trim())).collect::<Result<_, _>>()?;
    if v.is_empty() {
        return Err("empty solver list".into());
    }
    Ok(v)
}

/// Comma-separated list of nonnegative numbers.
pub fn parse_levels(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).filter(|x| !x.is_empty()).collect();
    if parts.is_empty() {
        return Err("list must contain at least one value".into());
    }
    parts
        .iter()
        .map(|p| match p.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
            _ => Err(format!("'{p}' is not a nonnegative number")),
        })
        .collect()
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StabilityArgs {
    /// calib, fhf, frhfr, a comma-separated list, or all.
    #[arg(long, value_parser = parse_solvers, default_value = "all")]
    pub solver: SolverList,
    #[arg(long, default_value_t = 10_000)]
    pub instances: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NoiseArgs {
    #[arg(long, value_parser = parse_solvers, default_value = "all")]
    pub solver: SolverList,
    /// Instances per noise level.
    #[arg(long, default_value_t = 1_000)]
    pub instances: usize,
    /// Noise standard deviations in pixels.
    #[arg(long, value_parser = parse_levels, default_value = "0,0.1,0.5,1,2")]
    pub noise_sigma: Levels,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DriftArgs {
    #[arg(long, value_parser = parse_solvers, default_value = "fhf,frhfr")]
    pub solver: SolverList,
    #[arg(long, default_value_t = 1_000)]
    pub instances: usize,
    /// Yaw drift levels in degrees.
    #[arg(long, value_parser = parse_levels, default_value = "0,0.1,1,5,45")]
    pub drift_deg: Levels,
    #[arg(long, default_value_t = 0.5)]
    pub noise_sigma: f64,
    /// Points per scene used by the refinement.
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    /// Maximum refinement steps.
    #[arg(long, default_value_t = 20)]
    pub lo_steps: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TimingArgs {
    #[arg(long, value_parser = parse_solvers, default_value = "all")]
    pub solver: SolverList,
    #[arg(long, default_value_t = 100_000)]
    pub instances: usize,
    /// Untimed calls before measuring.
    #[arg(long, default_value_t = 1_000)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1_000)]
    pub batch: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RansacOptions {
    #[arg(long, default_value_t = 5.0)]
    pub threshold_px: f64,
    /// Time budget per run; defaults to one 30 fps frame unless --iterations is given.
    #[arg(long)]
    pub time_budget_ms: Option<f64>,
    /// Iteration cap; without --time-budget-ms the run is not time limited.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, default_value_t = 0.99)]
    pub confidence: f64,
    #[arg(long, default_value_t = 20)]
    pub lo_steps: usize,
    /// Disable local optimization.
    #[arg(long)]
    pub no_lo: bool,
    /// Score with the mean of forward and backward transfer errors.
    #[arg(long)]
    pub symmetric: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RansacArgs {
    #[arg(long, value_parser = parse_solver, default_value = "frhfr")]
    pub solver: SolverKind,
    #[arg(long, default_value_t = 100)]
    pub repeats: usize,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[arg(long, default_value_t = 0.7)]
    pub inlier_fraction: f64,
    #[arg(long, alias = "noise", default_value_t = 1.0)]
    pub noise_sigma: f64,
    #[command(flatten)]
    pub ransac: RansacOptions,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    /// Correspondence CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Image size JSON; defaults to the CSV path with a .json extension.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    #[arg(long, value_parser = parse_solver, default_value = "frhfr")]
    pub solver: SolverKind,
    /// Focal length in normalized units, used when the solver does not estimate it.
    #[arg(long, default_value_t = 1.0)]
    pub focal: f64,
    /// Distortion, used when the solver does not estimate it.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub lambda: f64,
    /// Run LO-RANSAC on all rows instead of the minimal solver on the first rows.
    #[arg(long)]
    pub robust: bool,
    #[command(flatten)]
    pub ransac: RansacOptions,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    /// Scene type: fhf scenes have no distortion.
    #[arg(long, value_parser = parse_solver, default_value = "frhfr")]
    pub solver: SolverKind,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long, default_value_t = 1.0)]
    pub inlier_fraction: f64,
    #[arg(long, alias = "noise", default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[command(flatten)]
    pub common: Common,
}
