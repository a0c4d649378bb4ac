//! `salm`: run the denoising, sparse-control and quantile-calibration experiments.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use salm_core::denoise::{PenaltyConvention, SyntheticImage};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    /// Outputs were written but the method stopped on an iteration cap.
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 1,
            CliError::NotConverged(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "salm", version, about = "Safeguarded augmented Lagrangian experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// L1-budgeted elliptic optimal control on the unit square.
    Control(ControlArgs),
    /// Poisson denoising under multiscale constraints.
    Denoise(DenoiseArgs),
    /// Monte-Carlo calibration of the multiscale quantile.
    Quantile(QuantileArgs),
}

#[derive(Args, Debug)]
pub struct ControlArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub rho0: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Cells per side of the uniform mesh.
    #[arg(long = "mesh-m")]
    pub mesh_m: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Termination tolerance on V.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long = "max-outer")]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "salm-out")]
    pub out: PathBuf,
    /// JSON file with any of the flag values; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    /// Ground truth as PGM (grey level times --peak) or raw .f64 intensity with JSON sidecar.
    #[arg(long, conflicts_with = "synthetic")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub synthetic: Option<SyntheticImage>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Expected photons per pixel at full brightness.
    #[arg(long)]
    pub peak: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub qtilde: Option<f64>,
    #[arg(long = "r-shift", allow_negative_numbers = true)]
    pub r_shift: Option<f64>,
    #[arg(long = "mc-samples")]
    pub mc_samples: Option<usize>,
    #[arg(long = "max-scale")]
    pub max_scale: Option<usize>,
    #[arg(long = "nadam-iterations")]
    pub nadam_iterations: Option<usize>,
    #[arg(long = "max-outer")]
    pub max_outer: Option<usize>,
    #[arg(long = "penalty-convention", value_parser = parse_convention)]
    pub penalty_convention: Option<PenaltyConvention>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "salm-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QuantileArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long = "max-scale")]
    pub max_scale: Option<usize>,
    #[arg(long = "penalty-convention", value_parser = parse_convention)]
    pub penalty_convention: Option<PenaltyConvention>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "salm-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_convention(s: &str) -> Result<PenaltyConvention, String> {
    match s {
        "pixel-count" | "pixel_count" => Ok(PenaltyConvention::PixelCount),
        "continuous-size" | "continuous_size" => Ok(PenaltyConvention::ContinuousSize),
        _ => Err(format!("unknown penalty convention '{s}' (pixel-count or continuous-size)")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Control(args) => commands::control(args),
        Command::Denoise(args) => commands::denoise(args),
        Command::Quantile(args) => commands::quantile(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("salm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
