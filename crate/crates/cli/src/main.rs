//! `photonstat`: simulate on/off datasets, reconstruct photon-number
//! distributions, and analyze the results.
//!
//! Exit codes: 0 on success (including honest non-convergence), 2 on input
//! errors, 3 on I/O errors.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "photonstat",
    version,
    about = "Photon-number statistics from on/off detector data"
)]
pub struct Cli {
    /// RNG seed; required by `simulate`, recorded in every manifest.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Path of the primary output artifact.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// JSON config file supplying defaults; precedence is flags > config > defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic on/off dataset from a model and write it as CSV.
    Simulate(SimulateArgs),
    /// Invert a dataset into a photon-number distribution (result JSON).
    Reconstruct(ReconstructArgs),
    /// Post-process a reconstruction: plot tables, Klyshko values, model fits.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model spec JSON file; overrides the inline model flags.
    #[arg(long)]
    pub model: Option<PathBuf>,

    /// Inline model family: fock | coherent | thermal | multithermal.
    #[arg(long)]
    pub family: Option<String>,

    /// Mean photon number for coherent/thermal/multithermal models.
    #[arg(long)]
    pub mean: Option<f64>,

    /// Fock level for `--family fock` (default 1).
    #[arg(long)]
    pub n0: Option<usize>,

    /// Mode count for `--family multithermal` (default 2).
    #[arg(long)]
    pub modes: Option<u64>,

    /// Truncation of the model; default keeps the cut tail below 1e-10 (floor 8).
    #[arg(long)]
    pub truncation: Option<usize>,

    /// Number of efficiencies K (default 15).
    #[arg(long)]
    pub k: Option<usize>,

    /// Largest efficiency; the grid is nu * eta_max / K unless --eta-min is set (default 0.66).
    #[arg(long)]
    pub eta_max: Option<f64>,

    /// If set, use K efficiencies equally spaced on [eta_min, eta_max] instead.
    #[arg(long)]
    pub eta_min: Option<f64>,

    /// Detection runs per efficiency (default 1000000).
    #[arg(long)]
    pub runs: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Input dataset CSV.
    #[arg(long)]
    pub dataset: Option<PathBuf>,

    /// Fock-space truncation; default is a moment-based heuristic (floor 8).
    #[arg(long)]
    pub truncation: Option<usize>,

    /// Stopping level for the total absolute error (default 1e-7 * K).
    #[arg(long)]
    pub tolerance: Option<f64>,

    /// Iteration cap (default 1000000).
    #[arg(long)]
    pub max_iter: Option<usize>,

    /// Trace recording stride (default 1000).
    #[arg(long)]
    pub trace_stride: Option<usize>,

    /// Reference model spec JSON; adds fidelity to the trace.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Reconstruction result JSON.
    #[arg(long)]
    pub result: Option<PathBuf>,

    /// Dataset CSV the result was reconstructed from.
    #[arg(long)]
    pub dataset: Option<PathBuf>,

    /// Fit family, repeatable: fock | coherent | thermal | multithermal | poisson-background.
    #[arg(long = "fit")]
    pub fits: Vec<String>,

    /// Mode counts for multithermal scans, e.g. "1-20,100,500".
    #[arg(long)]
    pub modes: Option<String>,

    /// Lower edge of the mean bracket (default 1e-6).
    #[arg(long)]
    pub mu_min: Option<f64>,

    /// Upper edge of the mean bracket (default 10).
    #[arg(long)]
    pub mu_max: Option<f64>,

    /// Mixture weights for the background fit, e.g. "0,0.1,0.5,1" (default 0..1 step 0.05).
    #[arg(long)]
    pub weights: Option<String>,

    /// Background mean bracket for the background fit (defaults to the mean bracket).
    #[arg(long)]
    pub bg_mu_min: Option<f64>,

    /// See --bg-mu-min.
    #[arg(long)]
    pub bg_mu_max: Option<f64>,
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, malformed files, inconsistent inputs: exit 2.
    Input(String),
    /// Filesystem failures: exit 3.
    Io(String),
}

impl From<photonstat::Error> for CliError {
    fn from(e: photonstat::Error) -> Self {
        match e {
            photonstat::Error::Io(inner) => CliError::Io(inner.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(args) => commands::simulate(&cli, args),
        Command::Reconstruct(args) => commands::reconstruct(&cli, args),
        Command::Analyze(args) => commands::analyze(&cli, args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("I/O error: {msg}");
            ExitCode::from(3)
        }
    }
}
