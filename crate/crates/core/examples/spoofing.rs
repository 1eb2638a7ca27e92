//! The spoofer on a mid-cut partition: omit mode, self-averaging, top-k
//! post-processing and the XQUATH statistic. Also shows the MDN
//! simplification of a time cut.

use xeblab::circuits::{sample_circuit, Architecture, Boundary, GateEnsemble};
use xeblab::linalg::derive_seed;
use xeblab::metrics::{ensemble_average, xeb_exact};
use xeblab::simulator::run_pure;
use xeblab::spoofer::{mdn_propagate_simplify, run_basic, run_self_averaging, top_k, xquath_delta, Partition, SpoofMode};

fn main() -> xeblab::Result<()> {
    let arch = Architecture::brickwork_1d(10, 8, Boundary::Open)?;
    let part = Partition::mid_cut(&arch)?;
    println!("subsystems {:?}, {} cut gates", part.subsystems, part.cut_gates.len());

    let ks = [1, 16, 64];
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); 2 + ks.len()];
    for i in 0..300 {
        let circ = sample_circuit(&arch, &GateEnsemble::Haar2, derive_seed(8, &[i]));
        let p = run_pure(&circ)?.probabilities();
        let omit = run_basic(&circ, &part)?;
        rows[0].push(xeb_exact(&p, &omit.combined)?);
        rows[1].push(xeb_exact(&p, &run_self_averaging(&circ, &part)?.combined)?);
        for (j, &k) in ks.iter().enumerate() {
            rows[2 + j].push(xeb_exact(&p, &top_k(&omit, k)?.combined)?);
        }
    }
    let names = ["omit".to_string(), "self-averaging".into()].into_iter().chain(ks.iter().map(|k| format!("top-{k}")));
    for (name, v) in names.zip(&rows) {
        let s = ensemble_average(v)?;
        println!("{name:<15} chi {:.4} ± {:.4}  std {:.4}", s.mean, s.standard_error, s.std);
    }

    let x = xquath_delta(&arch, &GateEnsemble::Haar2, &part, SpoofMode::SelfAveraging, 300, 9)?;
    println!("XQUATH statistic {:.4} ± {:.4}", x.statistic.mean, x.statistic.standard_error);

    let ring = Architecture::brickwork_1d(8, 10, Boundary::Periodic)?;
    let circ = sample_circuit(&ring, &GateEnsemble::FSim { theta: 90.0, phi: 60.0 }, 2);
    let cut: Vec<(usize, usize)> = (0..ring.layers[5].len()).map(|i| (5, i)).collect();
    let s = mdn_propagate_simplify(&circ, &Partition::with_cut_gates(&ring, vec![(0..8).collect()], cut)?)?;
    println!("time cut at layer 5: {} gates -> {}", s.gates_before, s.gates_after);
    Ok(())
}
