//! Ideal and noisy simulation of one circuit, with the output
//! distribution exported as little-endian f64 binary and CSV.
//!
//!     cargo run --release --example simulate -- /tmp/out

use std::path::PathBuf;

use xeblab::circuits::{sample_circuit, Architecture, Boundary, GateEnsemble};
use xeblab::simulator::{fidelity, pt_moment_ratio, run_density, run_pure, run_trajectories, NoiseModel};

fn main() -> xeblab::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&dir)?;
    let arch = Architecture::brickwork_1d(10, 16, Boundary::Open)?;
    let circ = sample_circuit(&arch, &GateEnsemble::Haar2, 1);

    let psi = run_pure(&circ)?;
    let p = psi.probabilities();
    println!("ideal: total {:.12}, second moment / Porter-Thomas {:.3}", p.total(), pt_moment_ratio(&p, 2)?);

    let noise = NoiseModel::depolarizing(0.01);
    let rho = run_density(&circ, &noise)?;
    println!("density matrix: fidelity {:.4}", fidelity(&psi, &rho)?);
    let traj = run_trajectories(&circ, &noise, 2000, 5)?;
    println!("trajectories:   fidelity {:.4} ± {:.4} ({} runs)", traj.fidelity, traj.fidelity_se, traj.n_traj);

    p.write_binary(&dir.join("ideal.bin"))?;
    p.write_csv(&dir.join("ideal.csv"))?;
    rho.diagonal().write_binary(&dir.join("noisy.bin"))?;
    println!("wrote ideal.bin, ideal.csv, noisy.bin to {}", dir.display());
    Ok(())
}
