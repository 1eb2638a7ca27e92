use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use xeblab::experiments::{run_and_write, ExperimentConfig, EXPERIMENTS};

/// Overrides the worker thread count.
const THREADS_ENV: &str = "XEBLAB_THREADS";

#[derive(Parser)]
#[command(name = "xeblab", version, about = "Random-circuit XEB experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// List the known experiments.
    ListExperiments,
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.parse().map_err(|_| format!("{THREADS_ENV} must be a positive integer, got '{v}'"))?;
    if n == 0 {
        return Err(format!("{THREADS_ENV} must be a positive integer"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn load(path: &PathBuf) -> xeblab::Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    let result = match &cli.command {
        Command::ListExperiments => {
            for (name, about) in EXPERIMENTS {
                println!("{name:<20} {about}");
            }
            Ok(())
        }
        Command::Validate { config } => load(config).map(|c| println!("ok: {} (seed {}, sha256 {})", c.experiment, c.seed, c.hash())),
        Command::Run { config } => load(config).and_then(|c| run_and_write(&c)).map(|(csv, json)| {
            println!("wrote {}", csv.display());
            println!("wrote {}", json.display());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
