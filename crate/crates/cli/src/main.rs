//! Command-line front end: simulation, the monthly placement scenario,
//! bound tables, inequality checks, and randomization tests, all driven by
//! one seed and an optional configuration file.

mod cases;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use combi_bandit::{Error, Result};

#[derive(Parser)]
#[command(
    name = "combi-bandit",
    version,
    about = "Thompson sampling over combinatorial action spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Configuration file; omit it to run with the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed; every random stream in a run derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Independent replications for simulate and resettle.
    #[arg(long, global = true, default_value_t = 1)]
    reps: usize,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run posterior-sampling trajectories against a synthetic environment.
    Simulate,
    /// Run the monthly placement scenario with capacity carryover.
    Resettle,
    /// Tabulate the regret bound over the horizon.
    Bound,
    /// Check the exact information inequalities on the packaged instances.
    Lemmas,
    /// Randomization test over re-run allocations of a recorded history.
    Infer,
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    init_thread_pool()?;
    if cli.reps == 0 {
        return Err(Error::InvalidArgument("--reps must be at least 1".into()));
    }
    let (config, config_text) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::InvalidArgument(format!("cannot read config {}: {e}", path.display()))
            })?;
            let mut config = config::parse(&text)?;
            commands::anchor_paths(&mut config, path);
            (config, Some(text))
        }
        None => (config::Config::default(), None),
    };
    std::fs::create_dir_all(&cli.out)?;
    let ctx = commands::RunContext {
        config,
        config_path: cli.config,
        config_text,
        seed: cli.seed,
        reps: cli.reps,
        out: cli.out,
    };
    match cli.command {
        Cmd::Simulate => commands::simulate(&ctx),
        Cmd::Resettle => commands::resettle(&ctx),
        Cmd::Bound => commands::bound(&ctx),
        Cmd::Lemmas => commands::lemmas(&ctx),
        Cmd::Infer => commands::infer(&ctx),
    }
}

/// Caps the worker pool when COMBI_BANDIT_THREADS is set; replications and
/// resamples fan out over it.
fn init_thread_pool() -> Result<()> {
    let Ok(raw) = std::env::var("COMBI_BANDIT_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "COMBI_BANDIT_THREADS must be a positive integer, found '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("cannot size the thread pool: {e}")))
}
