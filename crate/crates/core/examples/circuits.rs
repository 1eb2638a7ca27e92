//! Build architectures, sample circuits from each ensemble and export an
//! architecture file.
//!
//!     cargo run --release --example circuits -- /tmp/arch.json

use xeblab::circuits::{load_architecture, sample_circuit, Architecture, Boundary, GateEnsemble, ZMode};

fn main() -> xeblab::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "architecture.json".into());

    let chain = Architecture::brickwork_1d(8, 6, Boundary::Open)?;
    let ring = Architecture::brickwork_1d(8, 6, Boundary::Periodic)?;
    let grid = Architecture::grid_2d(12, 8)?;
    for (name, a) in [("open chain", &chain), ("ring", &ring), ("3x4 grid", &grid)] {
        let gates: usize = a.layers.iter().map(Vec::len).sum();
        println!("{name:<10} n={} depth={} gates={gates} layer0={:?}", a.n_qubits, a.depth(), a.layers[0]);
    }

    let ensembles = [
        GateEnsemble::Cz,
        GateEnsemble::Haar2,
        GateEnsemble::FSim { theta: 90.0, phi: 60.0 },
        GateEnsemble::DiscreteFSim { theta: 90.0, phi: 60.0, z_mode: ZMode::Binary },
    ];
    for ens in &ensembles {
        let c = sample_circuit(&chain, ens, 7);
        let singles = c.single_qubit_gates.as_ref().map_or(0, |s| s.len() * s[0].len());
        println!("{:<28} two-qubit gates {:>3}, dressing gates {:>3}", ens.label(), c.two_qubit_gates.iter().map(Vec::len).sum::<usize>(), singles);
    }

    grid.save(out.as_ref())?;
    let back = load_architecture(out.as_ref())?;
    println!("wrote {out} ({} layers)", back.depth());
    Ok(())
}
