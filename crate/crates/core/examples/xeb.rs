//! Exact and sampled XEB against the ideal distribution, averaged over an
//! ensemble of circuits.

use xeblab::circuits::{sample_circuit, Architecture, Boundary, GateEnsemble};
use xeblab::linalg::derive_seed;
use xeblab::metrics::{ensemble_average, xeb_empirical, xeb_exact};
use xeblab::simulator::{fidelity, run_density, run_pure, sample_bitstrings, NoiseModel};

fn main() -> xeblab::Result<()> {
    let arch = Architecture::brickwork_1d(8, 10, Boundary::Open)?;
    let noise = NoiseModel::depolarizing(0.02);
    let (mut chi, mut chi_sampled, mut fid) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..200 {
        let circ = sample_circuit(&arch, &GateEnsemble::Haar2, derive_seed(3, &[i]));
        let psi = run_pure(&circ)?;
        let p = psi.probabilities();
        let rho = run_density(&circ, &noise)?;
        let q = rho.diagonal();
        chi.push(xeb_exact(&p, &q)?);
        chi_sampled.push(xeb_empirical(&p, &sample_bitstrings(&q, 1000, derive_seed(4, &[i]))?)?);
        fid.push(fidelity(&psi, &rho)?);
    }
    for (name, v) in [("exact XEB", &chi), ("sampled XEB", &chi_sampled), ("fidelity", &fid)] {
        let s = ensemble_average(v)?;
        println!("{name:<12} {:.4} ± {:.4} (std {:.4}, {} circuits)", s.mean, s.standard_error, s.std, s.n_instances);
    }
    Ok(())
}
