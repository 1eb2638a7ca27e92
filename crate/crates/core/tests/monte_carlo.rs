use rayon::prelude::*;
use xeblab::circuits::{sample_circuit, Architecture, Boundary, GateEnsemble};
use xeblab::drmodel::{attach_defects, evaluate, propagate_exact, propagate_factorized, propagate_mc, DRParams, Defects, Observable};
use xeblab::linalg::derive_seed;
use xeblab::metrics::ensemble_average;
use xeblab::simulator::{fidelity, run_density, run_pure, NoiseModel};
use xeblab::spoofer::Partition;

#[test]
fn ideal_deep_chain() {
    let a = Architecture::brickwork_1d(10, 40, Boundary::Open).unwrap();
    let none = Defects::none(&a);
    let exact = evaluate(&propagate_exact(&a, &DRParams::haar(), &none).unwrap(), Observable::Xeb);
    let mc = propagate_mc(&a, &DRParams::haar(), &none, 1_000_000, 1).unwrap();
    assert!((mc.xeb - exact).abs() < 3.0 * mc.xeb_se, "{} ± {} vs {exact}", mc.xeb, mc.xeb_se);
    assert!((mc.fidelity - 1.0).abs() < 1e-12);
}

#[test]
fn noisy_fidelity_matches_simulation() {
    let a = Architecture::brickwork_1d(8, 8, Boundary::Open).unwrap();
    let noise = NoiseModel::depolarizing(0.02);
    let mc = propagate_mc(&a, &DRParams::haar(), &attach_defects(&a, Some(&noise), None), 200_000, 2).unwrap();
    let f: Vec<f64> = (0..2000u64)
        .into_par_iter()
        .map(|i| {
            let c = sample_circuit(&a, &GateEnsemble::Haar2, derive_seed(5, &[i]));
            fidelity(&run_pure(&c).unwrap(), &run_density(&c, &noise).unwrap()).unwrap()
        })
        .collect();
    let s = ensemble_average(&f).unwrap();
    let se = s.standard_error.hypot(mc.fidelity_se);
    assert!((mc.fidelity - s.mean).abs() < 3.0 * se, "{} vs {} ± {se}", mc.fidelity, s.mean);
}

#[test]
fn wall_matches_factorized() {
    let a = Architecture::brickwork_1d(12, 10, Boundary::Open).unwrap();
    let part = Partition::mid_cut(&a).unwrap();
    let def = attach_defects(&a, None, Some(&part));
    let exact = evaluate(&propagate_factorized(&a, &DRParams::haar(), &def, &part.subsystems).unwrap(), Observable::Xeb);
    let mc = propagate_mc(&a, &DRParams::haar(), &def, 500_000, 3).unwrap();
    assert!((mc.xeb - exact).abs() < 3.0 * mc.xeb_se, "{} ± {} vs {exact}", mc.xeb, mc.xeb_se);
}
