//! Diffusion-reaction predictions: gate parameters, noisy XEB and
//! fidelity (dense, Monte Carlo and chain contraction), and the spoofer's
//! XEB on a partition too wide to simulate.

use xeblab::circuits::{Architecture, Boundary, GateEnsemble};
use xeblab::drmodel::{attach_defects, contract_chain, dr_for_ensemble, evaluate, propagate_exact, propagate_factorized, propagate_mc, Observable};
use xeblab::experiments::block_partition;
use xeblab::simulator::NoiseModel;

fn main() -> xeblab::Result<()> {
    for ens in [GateEnsemble::Cz, GateEnsemble::Haar2, GateEnsemble::FSim { theta: 90.0, phi: 60.0 }, GateEnsemble::FSim { theta: 90.0, phi: 0.0 }] {
        let p = dr_for_ensemble(&ens, 0, 0)?.params;
        println!("{:<12} D = {:.4}  R = {:.4}", ens.label(), p.d, p.r);
    }
    let haar = dr_for_ensemble(&GateEnsemble::Haar2, 0, 0)?.params;

    let arch = Architecture::brickwork_1d(16, 20, Boundary::Open)?;
    let noisy = attach_defects(&arch, Some(&NoiseModel::depolarizing(0.01)), None);
    let p = propagate_exact(&arch, &haar, &noisy)?;
    println!("N=16 d=20 eps=0.01: chi {:.4}, F {:.4}", evaluate(&p, Observable::Xeb), evaluate(&p, Observable::Fidelity));
    let mc = propagate_mc(&arch, &haar, &noisy, 20_000, 1)?;
    println!("  Monte Carlo:        chi {:.4} ± {:.4}, F {:.4} ± {:.4}", mc.xeb, mc.xeb_se, mc.fidelity, mc.fidelity_se);

    let (x, f) = contract_chain(&arch, &haar, &noisy)?;
    println!("  chain contraction:  chi {:.4}, F {:.4}", x - 1.0, f);

    let long = Architecture::brickwork_1d(40, 16, Boundary::Open)?;
    let (x, f) = contract_chain(&long, &haar, &attach_defects(&long, Some(&NoiseModel::depolarizing(0.01)), None))?;
    println!("N=40 d=16 eps=0.01: chi {:.4}, F {:.3e}", x - 1.0, f);

    let wide = Architecture::brickwork_1d(60, 16, Boundary::Open)?;
    let part = block_partition(&wide, 10)?;
    let s = propagate_factorized(&wide, &haar, &attach_defects(&wide, None, Some(&part)), &part.subsystems)?;
    println!("N=60 d=16 spoofer, blocks of 10: chi {:.3e}, F {:.3e}", evaluate(&s, Observable::Xeb), evaluate(&s, Observable::Fidelity));
    Ok(())
}
