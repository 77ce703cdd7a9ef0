//! `scfqkd`: key rates, distance sweeps, parameter optimization, Monte-Carlo
//! validation and Fock-oracle checks for side-channel-free QKD with
//! imperfect vacuum sources.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use scfqkd_core::Mode;

use crate::config::ConfigLayer;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or inconsistent configuration (exit code 2).
    #[error("config error: {0}")]
    Config(String),
    /// A validation or oracle check failed (exit code 3).
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<scfqkd_core::Error> for CliError {
    fn from(e: scfqkd_core::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "scfqkd",
    version,
    about = "Key-rate laboratory for side-channel-free QKD with imperfect vacuum sources"
)]
struct Cli {
    /// Worker threads for parallel evaluation (default: one per core)
    #[arg(long, global = true, env = "SCFQKD_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Configuration sources shared by the physics subcommands. Flags override the file.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Flat JSON config file (or a sidecar written by a previous run)
    #[arg(long, env = "SCFQKD_CONFIG")]
    pub config: Option<PathBuf>,
    /// Total Alice-Bob distance in km
    #[arg(long, env = "SCFQKD_DISTANCE")]
    pub distance: Option<f64>,
    /// Misalignment error E_d
    #[arg(long, env = "SCFQKD_ED")]
    pub ed: Option<f64>,
    /// Total number of windows N
    #[arg(long, env = "SCFQKD_N_WINDOWS")]
    pub n_windows: Option<u64>,
    /// Probability of choosing the weak source
    #[arg(long, env = "SCFQKD_P0")]
    pub p0: Option<f64>,
    /// Strong-source intensity bound (both parties)
    #[arg(long, env = "SCFQKD_MU")]
    pub mu: Option<f64>,
    /// Test-window fraction
    #[arg(long, env = "SCFQKD_R")]
    pub r: Option<f64>,
    /// Weak-source intensity bounds to evaluate, comma separated (both parties)
    #[arg(long, value_delimiter = ',', env = "SCFQKD_NU")]
    pub nu: Vec<f64>,
}

impl ConfigArgs {
    /// File values overlaid with flag values; `base` sits underneath both.
    pub fn layer(&self, base: ConfigLayer) -> Result<ConfigLayer, CliError> {
        let file = match &self.config {
            Some(path) => ConfigLayer::from_file(path)?,
            None => ConfigLayer::default(),
        };
        let flags = ConfigLayer {
            distance_km: self.distance,
            e_d: self.ed,
            n_windows: self.n_windows,
            p0: self.p0,
            mu_upper_a: self.mu,
            mu_upper_b: self.mu,
            r: self.r,
            ..ConfigLayer::default()
        };
        Ok(base.overlay(file).overlay(flags))
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModeArgs {
    /// Post-processing modes, comma separated: original, twcc, aopp
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "original",
        env = "SCFQKD_MODE"
    )]
    pub mode: Vec<Mode>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Key rate and every intermediate quantity at one operating point
    Rate {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        modes: ModeArgs,
        /// Manual c0 in place of the default exp((nu - mu) / 2)
        #[arg(long, env = "SCFQKD_C0")]
        c0: Option<f64>,
        /// Also write CSV rows here
        #[arg(long, env = "SCFQKD_OUT")]
        out: Option<PathBuf>,
    },
    /// Key rate against distance, optimized per point unless --fixed-params
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        modes: ModeArgs,
        #[arg(long, default_value_t = 0.0, env = "SCFQKD_D_MIN")]
        d_min: f64,
        #[arg(long, default_value_t = 500.0, env = "SCFQKD_D_MAX")]
        d_max: f64,
        #[arg(long, default_value_t = 10.0, env = "SCFQKD_STEP")]
        step: f64,
        /// Use the configured p0 and mu instead of optimizing them
        #[arg(long, env = "SCFQKD_FIXED_PARAMS")]
        fixed_params: bool,
        /// Optimizer grid points per axis
        #[arg(long, default_value_t = 40, env = "SCFQKD_GRID")]
        grid: usize,
        /// CSV destination (default: stdout)
        #[arg(long, env = "SCFQKD_OUT")]
        out: Option<PathBuf>,
        /// Write a matplotlib script that plots the CSV (requires --out)
        #[arg(long)]
        plot_script: Option<PathBuf>,
    },
    /// Optimal p0 and mu at one distance, per mode
    Optimize {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        modes: ModeArgs,
        #[arg(long, default_value_t = 40, env = "SCFQKD_GRID")]
        grid: usize,
        #[arg(long, env = "SCFQKD_OUT")]
        out: Option<PathBuf>,
    },
    /// Finite-N Monte-Carlo run checked against the analytic model
    Mc {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 1, env = "SCFQKD_SEED")]
        seed: u64,
        /// Also write the report here
        #[arg(long, env = "SCFQKD_OUT")]
        out: Option<PathBuf>,
    },
    /// Compare the analytic channel against the truncated-Fock oracle
    OracleCheck {
        /// Config file; only p_d is used
        #[arg(long, env = "SCFQKD_CONFIG")]
        config: Option<PathBuf>,
        /// Misalignment values, comma separated
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0,0.04,0.10",
            env = "SCFQKD_ED"
        )]
        ed: Vec<f64>,
        /// Intensities per arm, evenly spaced over [0, 1]
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        /// Write every compared point as CSV here
        #[arg(long, env = "SCFQKD_OUT")]
        out: Option<PathBuf>,
        /// Shift the analytic probabilities (exercises the failure path)
        #[arg(long, hide = true, default_value_t = 0.0)]
        perturb: f64,
        /// Force the Fock cutoff
        #[arg(long, hide = true)]
        n_max: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    }
    match cli.command {
        Command::Rate {
            config,
            modes,
            c0,
            out,
        } => commands::rate(&config, &modes.mode, c0, out.as_deref()),
        Command::Sweep {
            config,
            modes,
            d_min,
            d_max,
            step,
            fixed_params,
            grid,
            out,
            plot_script,
        } => commands::sweep(
            &config,
            &modes.mode,
            commands::SweepRange { d_min, d_max, step },
            fixed_params,
            grid,
            out.as_deref(),
            plot_script.as_deref(),
        ),
        Command::Optimize {
            config,
            modes,
            grid,
            out,
        } => commands::optimize(&config, &modes.mode, grid, out.as_deref()),
        Command::Mc { config, seed, out } => commands::monte_carlo(&config, seed, out.as_deref()),
        Command::OracleCheck {
            config,
            ed,
            points,
            tolerance,
            out,
            perturb,
            n_max,
        } => commands::oracle_check(
            config.as_deref(),
            ed,
            points,
            tolerance,
            perturb,
            n_max,
            out.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scfqkd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
