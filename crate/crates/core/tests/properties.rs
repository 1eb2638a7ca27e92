use proptest::prelude::*;
use xeblab::circuits::{sample_circuit, Architecture, Boundary, GateEnsemble, Op, ZMode};
use xeblab::drmodel::{
    attach_defects, build_t, evaluate, gate_transfer_matrix, propagate_exact, propagate_factorized, DRParams, Observable,
};
use xeblab::linalg::{haar4, stream, unitarity_error2, unitarity_error4};
use xeblab::metrics::{ensemble_average, xeb_exact};
use xeblab::simulator::{run_density, run_pure, BitstringDistribution, NoiseModel};
use xeblab::spoofer::{run_basic, top_k, Partition};

fn ensemble() -> impl Strategy<Value = GateEnsemble> {
    prop_oneof![
        Just(GateEnsemble::Cz),
        Just(GateEnsemble::Haar2),
        (0.0..360.0f64, 0.0..360.0f64).prop_map(|(theta, phi)| GateEnsemble::FSim { theta, phi }),
        (0.0..360.0f64, prop_oneof![Just(ZMode::Continuous), Just(ZMode::Binary)])
            .prop_map(|(phi, z_mode)| GateEnsemble::DiscreteFSim { theta: 90.0, phi, z_mode }),
    ]
}

fn distribution(n: usize) -> impl Strategy<Value = BitstringDistribution> {
    prop::collection::vec(0.0..1.0f64, 1 << n).prop_filter_map("non-zero mass", move |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-9).then(|| BitstringDistribution::new(n, w.iter().map(|x| x / s).collect()).expect("normalized"))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn brickwork_layers_are_matchings(n in 2usize..24, d in 1usize..12, periodic in any::<bool>()) {
        let boundary = if periodic { Boundary::Periodic } else { Boundary::Open };
        match Architecture::brickwork_1d(n, d, boundary) {
            Ok(a) => {
                prop_assert!(a.validate().is_ok());
                prop_assert_eq!(a.depth(), d);
                for layer in &a.layers {
                    let mut seen = vec![false; n];
                    for &(x, y) in layer {
                        prop_assert!(x < n && y < n && x != y);
                        prop_assert!(!seen[x] && !seen[y]);
                        seen[x] = true;
                        seen[y] = true;
                    }
                }
            }
            Err(_) => prop_assert!(periodic && (n % 2 == 1 || n < 4)),
        }
    }

    #[test]
    fn architecture_json_round_trip(n in 2usize..16, d in 1usize..8) {
        let a = Architecture::brickwork_1d(n, d, Boundary::Open).unwrap();
        let back = Architecture::from_json(&a.to_json()).unwrap();
        prop_assert_eq!(back.n_qubits, a.n_qubits);
        prop_assert_eq!(back.layers, a.layers);
    }

    #[test]
    fn sampled_gates_are_unitary(ens in ensemble(), n in 2usize..7, d in 1usize..6, seed in any::<u64>()) {
        let a = Architecture::brickwork_1d(n, d, Boundary::Open).unwrap();
        let c = sample_circuit(&a, &ens, seed);
        for op in c.program() {
            match op {
                Op::Single { u, .. } => prop_assert!(unitarity_error2(&u) < 1e-10),
                Op::Two { g, .. } => prop_assert!(unitarity_error4(&g) < 1e-10),
                _ => {}
            }
        }
        let again = sample_circuit(&a, &ens, seed);
        prop_assert_eq!(c.two_qubit_gates, again.two_qubit_gates);
    }

    #[test]
    fn outputs_are_normalized(ens in ensemble(), n in 2usize..6, d in 1usize..6, eps in 0.0..0.2f64, seed in any::<u64>()) {
        let a = Architecture::brickwork_1d(n, d, Boundary::Open).unwrap();
        let c = sample_circuit(&a, &ens, seed);
        let p = run_pure(&c).unwrap().probabilities();
        prop_assert!((p.total() - 1.0).abs() < 1e-12);
        let rho = run_density(&c, &NoiseModel::depolarizing(eps)).unwrap();
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-12);
        prop_assert!(rho.hermiticity_error() < 1e-12);
        prop_assert!(rho.diagonal().probs.iter().all(|&x| x >= -1e-14));
    }

    #[test]
    fn xeb_ranges(p in distribution(4), q in distribution(4)) {
        let chi = xeb_exact(&p, &q).unwrap();
        prop_assert!((-1.0 - 1e-12..=15.0 + 1e-12).contains(&chi));
        prop_assert!(xeb_exact(&p, &BitstringDistribution::uniform(4)).unwrap().abs() < 1e-12);
        prop_assert!((xeb_exact(&p, &q).unwrap() - xeb_exact(&q, &p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ensemble_stat_bounds(v in prop::collection::vec(-10.0..10.0f64, 1..50)) {
        let s = ensemble_average(&v).unwrap();
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        prop_assert!(s.mean >= lo - 1e-12 && s.mean <= hi + 1e-12);
        prop_assert!(s.std >= 0.0 && s.standard_error <= s.std + 1e-15);
    }

    #[test]
    fn transfer_matrix_structure(seed in any::<u64>()) {
        let t = gate_transfer_matrix(&haar4(&mut stream(seed, &[]))).unwrap();
        prop_assert!(t.column_sum_error() < 1e-12);
        prop_assert!(t.0.iter().flatten().all(|&x| x >= -1e-12));
        let (d, r) = (1.0 - t.0[1][1], t.0[3][1]);
        prop_assert!(d - r >= -1e-9 && r <= 2.0 / 3.0 + 1e-9);
    }

    #[test]
    fn dr_observables_bounded(d in 0.01..1.0f64, frac in 0.0..1.0f64, n in 2usize..12, depth in 1usize..16, eps in 0.0..0.1f64) {
        let r = (d * frac).min(2.0 / 3.0);
        let params = DRParams::new(d, r).unwrap();
        prop_assert!(build_t(&params).column_sum_error() < 1e-12);
        let a = Architecture::brickwork_1d(n, depth, Boundary::Open).unwrap();
        let p = propagate_exact(&a, &params, &attach_defects(&a, Some(&NoiseModel::depolarizing(eps)), None)).unwrap();
        let (chi, f) = (evaluate(&p, Observable::Xeb), evaluate(&p, Observable::Fidelity));
        prop_assert!(f > 0.0 && f <= 1.0 + 1e-12);
        prop_assert!(chi >= -1.0 && chi <= (n as f64).exp2());
    }

    #[test]
    fn factorized_matches_dense(n in 2usize..7, depth in 1usize..10) {
        let n = 2 * n;
        let a = Architecture::brickwork_1d(n, depth, Boundary::Open).unwrap();
        let part = Partition::mid_cut(&a).unwrap();
        let def = attach_defects(&a, Some(&NoiseModel::depolarizing(0.01)), Some(&part));
        let dense = propagate_exact(&a, &DRParams::haar(), &def).unwrap();
        let fact = propagate_factorized(&a, &DRParams::haar(), &def, &part.subsystems).unwrap();
        for o in [Observable::Xeb, Observable::Fidelity] {
            prop_assert!((evaluate(&dense, o) - evaluate(&fact, o)).abs() < 1e-12);
        }
    }

    #[test]
    fn top_k_is_uniform_on_k(n in 2usize..5, depth in 1usize..5, k in 1usize..16, seed in any::<u64>()) {
        let n = 2 * n;
        let a = Architecture::brickwork_1d(n, depth, Boundary::Open).unwrap();
        let c = sample_circuit(&a, &GateEnsemble::Haar2, seed);
        let out = run_basic(&c, &Partition::mid_cut(&a).unwrap()).unwrap();
        let k = k.min(1 << n);
        let t = top_k(&out, k).unwrap().combined;
        prop_assert!((t.total() - 1.0).abs() < 1e-12);
        prop_assert_eq!(t.probs.iter().filter(|&&x| x > 0.0).count(), k);
    }
}
