//! Command-line front end: plant ingestion, synthesis, scalar bound tables,
//! offset sweeps, simulation and figure datasets.
//!
//! Exit codes: 0 success or feasible, 1 numerical failure, 2 input error,
//! 3 infeasible synthesis.

pub mod commands;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use commands::run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<clockoff::Error> for CliError {
    fn from(e: clockoff::Error) -> Self {
        use clockoff::Error as E;
        match e {
            E::Dimension(_)
            | E::NotSquare { .. }
            | E::NonFinite(_)
            | E::OffsetOutOfRange { .. }
            | E::InvalidParameter(_)
            | E::Unsupported(_)
            | E::NotHurwitz(_) => CliError::Input(e.to_string()),
            E::Infeasible(_) => CliError::Infeasible(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "clockoff", version, about = "Controllers robust to constant sensor clock offsets")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Offset-parameterized discrete model (F, G, H) at one offset.
    Discretize(DiscretizeArgs),
    /// Youla-parameter synthesis for an offset interval.
    Synthesize(SynthesizeArgs),
    /// Exact and conservative offset bounds for a first-order plant.
    ScalarBounds(ScalarBoundsArgs),
    /// Closed-loop spectral radius across offsets (CSV).
    Sweep(SweepArgs),
    /// Time-domain simulation with intersample values (CSV).
    Simulate(SimulateArgs),
    /// Figure datasets (CSV).
    Figure(FigureArgs),
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected lo,hi but got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{lo:?}: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{hi:?}: {e}"))?;
    if !(lo <= hi) {
        return Err(format!("interval [{lo}, {hi}] is empty"));
    }
    Ok((lo, hi))
}

fn parse_vector(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect()
}

#[derive(Debug, Args, Serialize)]
pub struct DiscretizeArgs {
    pub plant: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthesizeArgs {
    pub plant: PathBuf,
    /// Offset interval `lo,hi` in seconds.
    #[arg(long, value_parser = parse_interval, allow_hyphen_values = true)]
    pub interval: (f64, f64),
    /// FIR order of the free parameter Q.
    #[arg(long, default_value_t = 20)]
    pub q_order: usize,
    /// Frequency grid points on the half circle.
    #[arg(long, default_value_t = 256)]
    pub grid: usize,
    /// Relative tolerance of the certified H∞ supremum.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Seed for the fallback optimizer's restarts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Offsets in the verification sweep.
    #[arg(long, default_value_t = 100)]
    pub sweep_points: usize,
    /// Controller file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ScalarBoundsArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub h: f64,
    /// Also write the table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    pub plant: PathBuf,
    pub controller: PathBuf,
    /// Offset range `lo,hi`; defaults to just inside `(−h, h)`.
    #[arg(long, value_parser = parse_interval, allow_hyphen_values = true)]
    pub interval: Option<(f64, f64)>,
    /// Number of offsets.
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
    /// Bisection resolution for run endpoints, seconds.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    pub plant: PathBuf,
    pub controller: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: f64,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Initial plant state (comma separated); ones by default.
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Initial estimate; zeros by default.
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    pub xhat0: Option<Vec<f64>>,
    /// Sub-points per update interval.
    #[arg(long, default_value_t = clockoff::analysis::DEFAULT_INTERSAMPLE)]
    pub grid: usize,
    /// Sensor sampling position within the interval, seconds.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Amplitude of deterministic d, n, w signals (needs C and L in the plant file).
    #[arg(long)]
    pub disturbance: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig3,
    Fig4,
    Fig6,
}

#[derive(Debug, Args, Serialize)]
pub struct FigureArgs {
    #[arg(value_enum)]
    pub figure: Figure,
    /// Axis points (fig4, fig6) or frequency grid (fig3).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Q order for fig3.
    #[arg(long)]
    pub q_order: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative bracket width of the fig3 baseline search.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
