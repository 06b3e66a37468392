//! `idemse`: predicted MSE, classical bounds, and Monte Carlo ground truth
//! for the built-in estimation scenarios, written as CSV.

mod config;
mod scenario;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::config::{Kind, ScenarioConfig};
use crate::scenario::Command as ScenarioCommand;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] idemse_core::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(idemse_core::Error::Convergence { .. }) => 3,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "idemse",
    about = "MSE prediction for implicitly defined estimators, with bounds and Monte Carlo"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario configuration file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo run count (overrides the config)
    #[arg(long)]
    runs: Option<usize>,
    /// Worker threads (defaults to all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Quadrature absolute tolerance (overrides the config)
    #[arg(long)]
    tol_abs: Option<f64>,
    /// Quadrature relative tolerance (overrides the config)
    #[arg(long)]
    tol_rel: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a configuration file and echo the resolved settings
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write predicted-MSE rows, one per SNR
    Predict(RunArgs),
    /// Write the requested bound columns, one row per SNR
    Bounds(RunArgs),
    /// Write Monte Carlo MSE rows (requires a seed)
    Montecarlo(RunArgs),
    /// Write the full comparison table: predictions, bounds, and Monte Carlo
    Sweep(RunArgs),
    /// List the built-in scenario kinds
    ListScenarios,
}

fn apply_overrides(config: &mut ScenarioConfig, args: &RunArgs) {
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    if let Some(runs) = args.runs {
        config.n_runs = runs;
    }
    if let Some(t) = args.tol_abs {
        config.abs_tol = t;
    }
    if let Some(t) = args.tol_rel {
        config.rel_tol = t;
    }
}

fn run_command(args: &RunArgs, cmd: ScenarioCommand) -> Result<(), CliError> {
    let mut config = config::load(&args.config)?;
    apply_overrides(&mut config, args);
    if config.n_runs < 2 {
        return Err(CliError::Config("n_runs must be at least 2".to_string()));
    }
    let table = match args.threads {
        Some(n) => {
            if n == 0 {
                return Err(CliError::Config("--threads must be positive".to_string()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?;
            pool.install(|| scenario::run(&config, cmd))?
        }
        None => scenario::run(&config, cmd)?,
    };
    let csv = table.emit();
    match &args.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn validate(path: &PathBuf) -> Result<(), CliError> {
    let c = config::load(path)?;
    println!("valid: kind = {}", c.kind);
    println!("  snr_db = {:?}", c.snr_db);
    println!("  n_sensors = {}", c.n_sensors);
    println!("  quadrature: abs_tol = {:e}, rel_tol = {:e}", c.abs_tol, c.rel_tol);
    println!(
        "  grids: ml_points = {}, omega_points = {}, nuisance_n_log = {}",
        c.ml_points, c.omega_points, c.nuisance_n_log
    );
    println!(
        "  montecarlo: n_runs = {}, seed = {}",
        c.n_runs,
        c.seed.map_or("unset".to_string(), |s| s.to_string())
    );
    let o = c.outputs;
    println!(
        "  outputs: prediction = {}, crlb = {}, mcrlb = {}, hcrb = {}, zzb = {}, bcrlb = {}, montecarlo = {}",
        o.prediction, o.crlb, o.mcrlb, o.hcrb, o.zzb, o.bcrlb, o.montecarlo
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Validate { config } => validate(config),
        Cmd::Predict(args) => run_command(args, ScenarioCommand::Predict),
        Cmd::Bounds(args) => run_command(args, ScenarioCommand::Bounds),
        Cmd::Montecarlo(args) => run_command(args, ScenarioCommand::MonteCarlo),
        Cmd::Sweep(args) => run_command(args, ScenarioCommand::Sweep),
        Cmd::ListScenarios => {
            for kind in Kind::ALL {
                println!("{:<20} {}", kind.name(), kind.description());
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
