//! Runs an experiment config in process, as the `xeblab run` command does.
//!
//!     cargo run --release --example run_experiment -- crates/core/configs/table2.json

use xeblab::experiments::{run_and_write, ExperimentConfig};

fn main() -> xeblab::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "crates/core/configs/table2.json".into());
    let cfg = ExperimentConfig::load(path.as_ref())?;
    cfg.validate()?;
    println!("{} seed {} sha256 {}", cfg.experiment, cfg.seed, cfg.hash());
    let (csv, json) = run_and_write(&cfg)?;
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}
