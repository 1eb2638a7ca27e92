//! Partition-based spoofing: omit cut gates, or replace them by maximal
//! depolarizing noise (self-averaging), then optionally keep the top-k
//! bitstrings.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{sample_circuit, Architecture, CircuitInstance, GateEnsemble, Op};
use crate::error::{Error, Result};
use crate::linalg::{derive_seed, pauli, stream, swap4, mul4, Mat4};
use crate::metrics::{ensemble_average, xeb_exact, EnsembleStat};
use crate::simulator::{
    run_program_density, run_program_pure, run_pure, BitstringDistribution, StateVector, DENSITY_MATRIX_CAP,
    STATE_VECTOR_CAP,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub subsystems: Vec<Vec<usize>>,
    /// (layer, index of the pair within the layer).
    pub cut_gates: Vec<(usize, usize)>,
}

fn owners(n: usize, subsystems: &[Vec<usize>]) -> Result<Vec<usize>> {
    let mut owner = vec![usize::MAX; n];
    for (s, qs) in subsystems.iter().enumerate() {
        if qs.is_empty() {
            return Err(Error::Partition(format!("subsystem {s} is empty")));
        }
        for &q in qs {
            if q >= n {
                return Err(Error::Partition(format!("qubit {q} out of range")));
            }
            if owner[q] != usize::MAX {
                return Err(Error::Partition(format!("qubit {q} appears in two subsystems")));
            }
            owner[q] = s;
        }
    }
    if let Some(q) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(Error::Partition(format!("qubit {q} is in no subsystem")));
    }
    Ok(owner)
}

impl Partition {
    /// Scans every layer for gates that straddle two subsystems.
    pub fn from_subsystems(arch: &Architecture, subsystems: Vec<Vec<usize>>) -> Result<Self> {
        let owner = owners(arch.n_qubits, &subsystems)?;
        let mut cut_gates = Vec::new();
        for (t, layer) in arch.layers.iter().enumerate() {
            for (i, &(a, b)) in layer.iter().enumerate() {
                if owner[a] != owner[b] {
                    cut_gates.push((t, i));
                }
            }
        }
        Ok(Partition { subsystems, cut_gates })
    }

    /// Explicit cut list; it must contain every straddling gate and may
    /// contain gates inside a subsystem.
    pub fn with_cut_gates(arch: &Architecture, subsystems: Vec<Vec<usize>>, cut_gates: Vec<(usize, usize)>) -> Result<Self> {
        let base = Partition::from_subsystems(arch, subsystems)?;
        for &(t, i) in &cut_gates {
            if t >= arch.depth() || i >= arch.layers[t].len() {
                return Err(Error::Partition(format!("cut gate ({t}, {i}) does not exist")));
            }
        }
        let listed: HashSet<_> = cut_gates.iter().copied().collect();
        if let Some(g) = base.cut_gates.iter().find(|g| !listed.contains(g)) {
            return Err(Error::Partition(format!("straddling gate {g:?} missing from the cut list")));
        }
        let mut cut_gates = cut_gates;
        cut_gates.sort_unstable();
        cut_gates.dedup();
        Ok(Partition { subsystems: base.subsystems, cut_gates })
    }

    /// Contiguous blocks of the given sizes, in qubit order.
    pub fn blocks(arch: &Architecture, sizes: &[usize]) -> Result<Self> {
        let mut start = 0;
        let subs = sizes
            .iter()
            .map(|&s| {
                let b: Vec<usize> = (start..start + s).collect();
                start += s;
                b
            })
            .collect();
        Partition::from_subsystems(arch, subs)
    }

    /// Two halves split at the middle bond.
    pub fn mid_cut(arch: &Architecture) -> Result<Self> {
        let n = arch.n_qubits;
        Partition::blocks(arch, &[n / 2, n - n / 2])
    }

    pub fn max_subsystem_size(&self) -> usize {
        self.subsystems.iter().map(Vec::len).max().unwrap_or(0)
    }

    fn cut_set(&self) -> HashSet<(usize, usize)> {
        self.cut_gates.iter().copied().collect()
    }
}

pub fn make_cut(arch: &Architecture, cut: &[Vec<usize>]) -> Result<Partition> {
    Partition::from_subsystems(arch, cut.to_vec())
}

/// Cut gates of a strip of `width` qubits whose two boundaries move by one
/// site per layer along the light cone, so the cut line zig-zags through
/// the brickwork. `offset` and `width` must be even.
pub fn zigzag_cut(arch: &Architecture, offset: usize, width: usize) -> Result<Vec<(usize, usize)>> {
    let n = arch.n_qubits;
    if offset % 2 == 1 || width % 2 == 1 || width == 0 || width >= n {
        return Err(Error::Partition(format!("zig-zag cut needs even offset and even width < {n}")));
    }
    let mut cuts = Vec::new();
    for (t, layer) in arch.layers.iter().enumerate() {
        for bond in [(offset + t) % n, (offset + t + width) % n] {
            match layer.iter().position(|&(a, _)| a == bond) {
                Some(i) => cuts.push((t, i)),
                None => {
                    if !(arch.boundary == crate::circuits::Boundary::Open && bond == n - 1) {
                        return Err(Error::Partition(format!("no gate on bond {bond} in layer {t}")));
                    }
                }
            }
        }
    }
    cuts.sort_unstable();
    cuts.dedup();
    Ok(cuts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpoofMode {
    Omit,
    SelfAveraging,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    /// Support size of the post-processed distribution.
    pub k: usize,
    /// Per-subsystem k_i, when selection was done per subsystem.
    pub per_subsystem: Option<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct SpoofOutput {
    pub mode: SpoofMode,
    pub subsystems: Vec<Vec<usize>>,
    /// Per-subsystem distributions, local bit `k` is `subsystems[i][k]`.
    pub parts: Vec<BitstringDistribution>,
    /// Per-subsystem pure states (omit mode only).
    pub states: Option<Vec<StateVector>>,
    pub combined: BitstringDistribution,
    pub top_k: Option<TopK>,
}

fn gather(x: usize, qubits: &[usize]) -> usize {
    qubits.iter().enumerate().fold(0, |acc, (k, &q)| acc | ((x >> q & 1) << k))
}

/// Product distribution over all qubits.
pub fn product_distribution(subsystems: &[Vec<usize>], parts: &[BitstringDistribution]) -> Result<BitstringDistribution> {
    let n: usize = subsystems.iter().map(Vec::len).sum();
    if n > STATE_VECTOR_CAP {
        return Err(Error::Resource { what: "combined product distribution", requested: n, cap: STATE_VECTOR_CAP });
    }
    let probs = (0..1usize << n)
        .map(|x| subsystems.iter().zip(parts).map(|(qs, p)| p.probs[gather(x, qs)]).product())
        .collect();
    Ok(BitstringDistribution { n_qubits: n, probs, normalized: parts.iter().all(|p| p.normalized) })
}

impl SpoofOutput {
    /// Product of the subsystem states (omit mode).
    pub fn product_state(&self) -> Option<StateVector> {
        let states = self.states.as_ref()?;
        let n: usize = self.subsystems.iter().map(Vec::len).sum();
        let amplitudes = (0..1usize << n)
            .map(|x| self.subsystems.iter().zip(states).map(|(qs, s)| s.amplitudes[gather(x, qs)]).product())
            .collect();
        Some(StateVector { n_qubits: n, amplitudes })
    }
}

/// Program of one subsystem in local indices. Cut gates become MDN on the
/// subsystem-side qubits when `mdn` is set and are dropped otherwise;
/// dressing singles are always kept.
fn subsystem_program(circuit: &CircuitInstance, qubits: &[usize], cut: &HashSet<(usize, usize)>, mdn: bool) -> Vec<Op> {
    let n = circuit.n_qubits();
    let mut local = vec![usize::MAX; n];
    for (k, &q) in qubits.iter().enumerate() {
        local[q] = k;
    }
    let inside = |q: usize| local[q] != usize::MAX;
    let mut ops = Vec::new();
    for op_layer in 0..=circuit.depth() {
        if let Some(s) = &circuit.single_qubit_gates {
            for &q in qubits {
                ops.push(Op::Single { q: local[q], u: s[op_layer][q] });
            }
        }
        if op_layer == circuit.depth() {
            break;
        }
        for (i, &(a, b)) in circuit.architecture.layers[op_layer].iter().enumerate() {
            if cut.contains(&(op_layer, i)) {
                if mdn {
                    for q in [a, b] {
                        if inside(q) {
                            ops.push(Op::Mdn { q: local[q] });
                        }
                    }
                }
            } else if inside(a) && inside(b) {
                ops.push(Op::Two { a: local[a], b: local[b], g: circuit.two_qubit_gates[op_layer][i] });
            }
        }
        ops.push(Op::LayerEnd);
    }
    ops
}

fn check_partition(circuit: &CircuitInstance, part: &Partition) -> Result<()> {
    let owner = owners(circuit.n_qubits(), &part.subsystems)?;
    let cut = part.cut_set();
    for (t, layer) in circuit.architecture.layers.iter().enumerate() {
        for (i, &(a, b)) in layer.iter().enumerate() {
            if owner[a] != owner[b] && !cut.contains(&(t, i)) {
                return Err(Error::Partition(format!("gate ({a},{b}) in layer {t} crosses subsystems but is not cut")));
            }
        }
    }
    Ok(())
}

pub fn run_basic(circuit: &CircuitInstance, part: &Partition) -> Result<SpoofOutput> {
    check_partition(circuit, part)?;
    if part.max_subsystem_size() > STATE_VECTOR_CAP {
        return Err(Error::Resource { what: "subsystem simulation", requested: part.max_subsystem_size(), cap: STATE_VECTOR_CAP });
    }
    let cut = part.cut_set();
    let states = part
        .subsystems
        .iter()
        .map(|qs| run_program_pure(&subsystem_program(circuit, qs, &cut, false), qs.len()))
        .collect::<Result<Vec<_>>>()?;
    let parts: Vec<_> = states.iter().map(StateVector::probabilities).collect();
    let combined = product_distribution(&part.subsystems, &parts)?;
    Ok(SpoofOutput {
        mode: SpoofMode::Omit,
        subsystems: part.subsystems.clone(),
        parts,
        states: Some(states),
        combined,
        top_k: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfAveragingOptions {
    /// Pauli-insertion samples for subsystems above the density-matrix cap.
    pub fallback_samples: usize,
    pub seed: u64,
}

impl Default for SelfAveragingOptions {
    fn default() -> Self {
        SelfAveragingOptions { fallback_samples: 256, seed: 0 }
    }
}

pub fn run_self_averaging(circuit: &CircuitInstance, part: &Partition) -> Result<SpoofOutput> {
    run_self_averaging_with(circuit, part, &SelfAveragingOptions::default())
}

pub fn run_self_averaging_with(circuit: &CircuitInstance, part: &Partition, opts: &SelfAveragingOptions) -> Result<SpoofOutput> {
    check_partition(circuit, part)?;
    let cut = part.cut_set();
    let parts = part
        .subsystems
        .iter()
        .enumerate()
        .map(|(s, qs)| {
            let prog = subsystem_program(circuit, qs, &cut, true);
            if qs.len() <= DENSITY_MATRIX_CAP {
                Ok(run_program_density(&prog, qs.len(), None)?.diagonal())
            } else {
                pauli_averaged(&prog, qs.len(), opts.fallback_samples, derive_seed(opts.seed, &[s as u64]))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let combined = product_distribution(&part.subsystems, &parts)?;
    Ok(SpoofOutput {
        mode: SpoofMode::SelfAveraging,
        subsystems: part.subsystems.clone(),
        parts,
        states: None,
        combined,
        top_k: None,
    })
}

/// MDN = uniform average over {I, X, Y, Z}; estimated by sampling.
fn pauli_averaged(prog: &[Op], n: usize, samples: usize, seed: u64) -> Result<BitstringDistribution> {
    if samples == 0 {
        return Err(Error::Resource { what: "self-averaging without Pauli fallback", requested: n, cap: DENSITY_MATRIX_CAP });
    }
    let mut acc = vec![0.0; 1 << n];
    for k in 0..samples {
        let mut rng = stream(seed, &[k as u64]);
        let ops: Vec<Op> = prog
            .iter()
            .map(|op| match op {
                Op::Mdn { q } => Op::Single { q: *q, u: pauli(rng.random_range(0..4)) },
                other => other.clone(),
            })
            .collect();
        let psi = run_program_pure(&ops, n)?;
        for (a, x) in acc.iter_mut().zip(&psi.amplitudes) {
            *a += x.norm_sqr();
        }
    }
    Ok(BitstringDistribution { n_qubits: n, probs: acc.iter().map(|a| a / samples as f64).collect(), normalized: true })
}

fn top_indices(probs: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Uniform mass 1/k on the k most probable bitstrings; ties go to the
/// lowest index.
pub fn top_k(output: &SpoofOutput, k: usize) -> Result<SpoofOutput> {
    let len = output.combined.probs.len();
    if k == 0 || k > len {
        return Err(Error::Invalid(format!("k = {k} outside 1..={len}")));
    }
    let mut probs = vec![0.0; len];
    for i in top_indices(&output.combined.probs, k) {
        probs[i] = 1.0 / k as f64;
    }
    Ok(SpoofOutput {
        combined: BitstringDistribution { n_qubits: output.combined.n_qubits, probs, normalized: true },
        top_k: Some(TopK { k, per_subsystem: None }),
        ..output.clone()
    })
}

/// Local qubits on which a subsystem distribution is exactly uniform and
/// independent of the rest.
pub fn trivial_qubits(dist: &BitstringDistribution) -> Vec<usize> {
    let scale = dist.probs.iter().cloned().fold(0.0, f64::max);
    (0..dist.n_qubits)
        .filter(|&q| {
            let m = 1usize << q;
            (0..dist.probs.len()).all(|x| (dist.probs[x] - dist.probs[x ^ m]).abs() <= 1e-13 * scale)
        })
        .collect()
}

/// Top-k_i per subsystem over non-trivial qubits, trivial qubits expanded
/// uniformly, combined as a product.
pub fn top_k_per_subsystem(output: &SpoofOutput, ks: &[usize]) -> Result<SpoofOutput> {
    if ks.len() != output.parts.len() {
        return Err(Error::Invalid("one k per subsystem is required".into()));
    }
    let mut parts = Vec::with_capacity(ks.len());
    let mut support = 1usize;
    for (dist, &k) in output.parts.iter().zip(ks) {
        let trivial = trivial_qubits(dist);
        let active: Vec<usize> = (0..dist.n_qubits).filter(|q| !trivial.contains(q)).collect();
        let mut marg = vec![0.0; 1 << active.len()];
        for (x, p) in dist.probs.iter().enumerate() {
            marg[gather(x, &active)] += p;
        }
        if k == 0 || k > marg.len() {
            return Err(Error::Invalid(format!("k = {k} outside 1..={}", marg.len())));
        }
        let chosen: HashSet<usize> = top_indices(&marg, k).into_iter().collect();
        let size = k << trivial.len();
        support *= size;
        let probs = (0..dist.probs.len())
            .map(|x| if chosen.contains(&gather(x, &active)) { 1.0 / size as f64 } else { 0.0 })
            .collect();
        parts.push(BitstringDistribution { n_qubits: dist.n_qubits, probs, normalized: true });
    }
    let combined = product_distribution(&output.subsystems, &parts)?;
    Ok(SpoofOutput {
        mode: output.mode,
        subsystems: output.subsystems.clone(),
        parts,
        states: None,
        combined,
        top_k: Some(TopK { k: support, per_subsystem: Some(ks.to_vec()) }),
    })
}

/// Is `g` a SWAP times a diagonal gate?
pub fn is_swap_cphase(g: &Mat4) -> bool {
    let m = mul4(&swap4(), g);
    (0..4).all(|i| (0..4).all(|j| i == j || m[i][j].norm() < 1e-10))
}

#[derive(Clone, Debug)]
pub struct SimplifiedCircuit {
    pub n_qubits: usize,
    pub ops: Vec<Op>,
    pub gates_before: usize,
    pub gates_after: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Event {
    Boundary,
    Gate,
    Mdn,
}

/// Replaces cut gates by MDN on both qubits and then removes gates with
/// three identities: maximally mixed inputs on both qubits, discarded
/// outputs on both qubits, and the SWAP·controlled-phase rule
/// D₁[U D₁[ρ] U†] = D₂[D₁[ρ]] for a qubit sandwiched between two MDNs.
pub fn mdn_propagate_simplify(circuit: &CircuitInstance, part: &Partition) -> Result<SimplifiedCircuit> {
    let arch = &circuit.architecture;
    let (n, depth) = (arch.n_qubits, arch.depth());
    let mut kept: Vec<Vec<bool>> = arch.layers.iter().map(|l| vec![true; l.len()]).collect();
    let mut mdn = vec![vec![false; n]; depth];
    for &(t, i) in &part.cut_gates {
        kept[t][i] = false;
        let (a, b) = arch.layers[t][i];
        mdn[t][a] = true;
        mdn[t][b] = true;
    }
    let gates_before: usize = kept.iter().flatten().filter(|&&k| k).count();
    // gate occupying qubit q in layer t
    let mut slot = vec![vec![None; n]; depth];
    for (t, layer) in arch.layers.iter().enumerate() {
        for (i, &(a, b)) in layer.iter().enumerate() {
            slot[t][a] = Some(i);
            slot[t][b] = Some(i);
        }
    }
    let event = |kept: &Vec<Vec<bool>>, mdn: &Vec<Vec<bool>>, q: usize, t: usize| -> Option<Event> {
        if mdn[t][q] {
            Some(Event::Mdn)
        } else if slot[t][q].is_some_and(|i| kept[t][i]) {
            Some(Event::Gate)
        } else {
            None
        }
    };
    loop {
        let mut changed = false;
        for t in 0..depth {
            for (i, &(a, b)) in arch.layers[t].iter().enumerate() {
                if !kept[t][i] {
                    continue;
                }
                let prev = |q| (0..t).rev().find_map(|s| event(&kept, &mdn, q, s)).unwrap_or(Event::Boundary);
                let next = |q| (t + 1..depth).find_map(|s| event(&kept, &mdn, q, s)).unwrap_or(Event::Boundary);
                let (pa, pb, na, nb) = (prev(a), prev(b), next(a), next(b));
                let mixed_in = pa == Event::Mdn && pb == Event::Mdn;
                let discarded = na == Event::Mdn && nb == Event::Mdn;
                let sandwich = (pa == Event::Mdn && na == Event::Mdn) || (pb == Event::Mdn && nb == Event::Mdn);
                if mixed_in || discarded || sandwich {
                    if !mixed_in && !discarded && !is_swap_cphase(&circuit.two_qubit_gates[t][i]) {
                        return Err(Error::Unsupported(format!(
                            "gate ({a},{b}) in layer {t} sits between MDNs but is not SWAP times a controlled phase"
                        )));
                    }
                    kept[t][i] = false;
                    mdn[t][a] = true;
                    mdn[t][b] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut ops = Vec::new();
    for t in 0..=depth {
        if let Some(s) = &circuit.single_qubit_gates {
            for (q, u) in s[t].iter().enumerate() {
                ops.push(Op::Single { q, u: *u });
            }
        }
        if t == depth {
            break;
        }
        for (i, &(a, b)) in arch.layers[t].iter().enumerate() {
            if kept[t][i] {
                ops.push(Op::Two { a, b, g: circuit.two_qubit_gates[t][i] });
            }
        }
        for (q, &m) in mdn[t].iter().enumerate() {
            if m {
                ops.push(Op::Mdn { q });
            }
        }
        ops.push(Op::LayerEnd);
    }
    let gates_after = kept.iter().flatten().filter(|&&k| k).count();
    Ok(SimplifiedCircuit { n_qubits: n, ops, gates_before, gates_after })
}

/// Full-system program with every cut gate replaced by MDN on both qubits.
pub fn mdn_program(circuit: &CircuitInstance, part: &Partition) -> Vec<Op> {
    let all: Vec<usize> = (0..circuit.n_qubits()).collect();
    subsystem_program(circuit, &all, &part.cut_set(), true)
}

/// Per-circuit XQUATH term 2^{2N}[(p₀ − 2^{−N})² − (p₀ − q₀)²] at x = 0^N.
pub fn xquath_term(p: &BitstringDistribution, q: &BitstringDistribution) -> f64 {
    let two_n = (p.n_qubits as f64).exp2();
    let (p0, q0) = (p.probs[0], q.probs[0]);
    two_n * two_n * ((p0 - 1.0 / two_n).powi(2) - (p0 - q0).powi(2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XquathResult {
    pub statistic: EnsembleStat,
    /// Mean XEB of the same spoofer on the same circuits.
    pub mean_xeb: EnsembleStat,
}

pub fn xquath_delta(
    arch: &Architecture,
    ens: &GateEnsemble,
    part: &Partition,
    mode: SpoofMode,
    n_circuits: usize,
    seed: u64,
) -> Result<XquathResult> {
    if mode != SpoofMode::SelfAveraging {
        return Err(Error::Unsupported("the XQUATH statistic is defined for self-averaging spoofers".into()));
    }
    if arch.n_qubits > 10 {
        return Err(Error::Resource { what: "XQUATH estimate", requested: arch.n_qubits, cap: 10 });
    }
    let vals = (0..n_circuits)
        .into_par_iter()
        .map(|k| {
            let circ = sample_circuit(arch, ens, derive_seed(seed, &[k as u64]));
            let p = run_pure(&circ)?.probabilities();
            let q = run_self_averaging(&circ, part)?.combined;
            Ok((xquath_term(&p, &q), xeb_exact(&p, &q)?))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (x, c): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
    Ok(XquathResult { statistic: ensemble_average(&x)?, mean_xeb: ensemble_average(&c)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{fsim_matrix, Boundary};
    use crate::linalg::{haar2, kron2, ZERO};
    use crate::simulator::DensityMatrix;

    fn brick(n: usize, d: usize) -> Architecture {
        Architecture::brickwork_1d(n, d, Boundary::Open).unwrap()
    }

    #[test]
    fn mid_cut_counts() {
        let a = brick(12, 7);
        let p = make_cut(&a, &[(0..6).collect(), (6..12).collect()]).unwrap();
        assert_eq!(p.cut_gates.len(), 3);
        assert!(p.cut_gates.iter().all(|&(t, i)| a.layers[t][i] == (5, 6)));
        assert!(make_cut(&a, &[(0..12).collect()]).unwrap().cut_gates.is_empty());
        assert!(make_cut(&a, &[(0..6).collect(), (5..12).collect()]).is_err());
        assert!(make_cut(&a, &[(0..6).collect()]).is_err());
    }

    #[test]
    fn grid_vertical_cut_matches_scan() {
        let (l, d) = (3, 8);
        let a = Architecture::grid_2d(l * (l + 1), d).unwrap();
        let cols = l + 1;
        let left: Vec<usize> = (0..a.n_qubits).filter(|q| q % cols < 2).collect();
        let right: Vec<usize> = (0..a.n_qubits).filter(|q| q % cols >= 2).collect();
        let p = make_cut(&a, &[left, right]).unwrap();
        let crossing_layers = a.layers.iter().filter(|layer| layer.iter().any(|&(x, y)| (x % cols < 2) != (y % cols < 2))).count();
        assert_eq!(p.cut_gates.len(), crossing_layers * l);
    }

    #[test]
    fn trivial_partition_reproduces_circuit() {
        let a = brick(6, 6);
        let circ = sample_circuit(&a, &GateEnsemble::Cz, 4);
        let part = make_cut(&a, &[(0..6).collect()]).unwrap();
        let out = run_basic(&circ, &part).unwrap();
        let p = run_pure(&circ).unwrap().probabilities();
        for (x, y) in out.combined.probs.iter().zip(&p.probs) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn combined_is_product() {
        let a = brick(6, 5);
        let circ = sample_circuit(&a, &GateEnsemble::Haar2, 8);
        let part = make_cut(&a, &[vec![0, 2, 4], vec![1, 3, 5]]).unwrap();
        let out = run_basic(&circ, &part).unwrap();
        for x in 0..64 {
            let want = out.parts[0].probs[gather(x, &[0, 2, 4])] * out.parts[1].probs[gather(x, &[1, 3, 5])];
            assert!((out.combined.probs[x] - want).abs() < 1e-15);
        }
        let psi = out.product_state().unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mdn_everywhere_at_end_is_uniform() {
        let a = brick(4, 4);
        let circ = sample_circuit(&a, &GateEnsemble::Haar2, 1);
        let mut ops = circ.program();
        for q in 0..4 {
            ops.push(Op::Mdn { q });
        }
        let d = run_program_density(&ops, 4, None).unwrap().diagonal();
        assert!(d.probs.iter().all(|&p| (p - 1.0 / 16.0).abs() < 1e-14));
    }

    #[test]
    fn top_k_examples() {
        let a = brick(4, 4);
        let circ = sample_circuit(&a, &GateEnsemble::Haar2, 2);
        let out = run_basic(&circ, &Partition::mid_cut(&a).unwrap()).unwrap();
        let full = top_k(&out, 16).unwrap();
        assert!(full.combined.probs.iter().all(|&p| (p - 1.0 / 16.0).abs() < 1e-15));
        let one = top_k(&out, 1).unwrap();
        let argmax = (0..16).max_by(|&x, &y| out.combined.probs[x].total_cmp(&out.combined.probs[y])).unwrap();
        assert_eq!(one.combined.probs[argmax], 1.0);
        let k5 = top_k(&out, 5).unwrap();
        assert_eq!(k5.combined.probs.iter().filter(|&&p| p > 0.0).count(), 5);
        assert!(top_k(&out, 0).is_err());
    }

    #[test]
    fn top_k_ties_lowest_index() {
        let out = SpoofOutput {
            mode: SpoofMode::Omit,
            subsystems: vec![vec![0, 1]],
            parts: vec![BitstringDistribution::uniform(2)],
            states: None,
            combined: BitstringDistribution::uniform(2),
            top_k: None,
        };
        let t = top_k(&out, 2).unwrap();
        assert_eq!(t.combined.probs, vec![0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn per_subsystem_top_k_expands_trivial_qubits() {
        // qubit 1 of the first subsystem is fully mixed
        let p0 = BitstringDistribution::new(2, vec![0.35, 0.15, 0.35, 0.15]).unwrap();
        let p1 = BitstringDistribution::new(1, vec![0.8, 0.2]).unwrap();
        assert_eq!(trivial_qubits(&p0), vec![1]);
        let subs = vec![vec![0, 1], vec![2]];
        let combined = product_distribution(&subs, &[p0.clone(), p1.clone()]).unwrap();
        let out = SpoofOutput { mode: SpoofMode::SelfAveraging, subsystems: subs, parts: vec![p0, p1], states: None, combined, top_k: None };
        let t = top_k_per_subsystem(&out, &[1, 1]).unwrap();
        assert_eq!(t.top_k.as_ref().unwrap().k, 2);
        let support: Vec<usize> = (0..8).filter(|&x| t.combined.probs[x] > 0.0).collect();
        assert_eq!(support, vec![0, 2]);
    }

    fn random_density(seed: u64) -> DensityMatrix {
        let mut rng = stream(seed, &[]);
        let mut rho = DensityMatrix { n_qubits: 2, entries: vec![ZERO; 16] };
        let weights = [0.4, 0.3, 0.2, 0.1];
        for w in weights {
            let u = crate::linalg::haar_unitary(4, &mut rng);
            for r in 0..4 {
                for cc in 0..4 {
                    rho.entries[r * 4 + cc] += u[r][0] * u[cc][0].conj() * w;
                }
            }
        }
        rho
    }

    #[test]
    fn fsim_mdn_identity_on_two_qubits() {
        let g = fsim_matrix(90.0, 60.0);
        assert!(is_swap_cphase(&g));
        assert!(!is_swap_cphase(&crate::linalg::cz4()));
        for seed in 0..20 {
            let mut rng = stream(100 + seed, &[]);
            let u = mul4(&kron2(&haar2(&mut rng), &haar2(&mut rng)), &mul4(&g, &kron2(&haar2(&mut rng), &haar2(&mut rng))));
            let mut lhs = random_density(seed);
            let mut rhs = lhs.clone();
            // qubit 0 is the gate's first qubit
            lhs.apply_mdn(0);
            lhs.apply_two(0, 1, &u);
            lhs.apply_mdn(0);
            rhs.apply_mdn(0);
            rhs.apply_mdn(1);
            for (x, y) in lhs.entries.iter().zip(&rhs.entries) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    fn assert_same_channel(circ: &CircuitInstance, part: &Partition, s: &SimplifiedCircuit) {
        let n = circ.n_qubits();
        let r1 = run_program_density(&mdn_program(circ, part), n, None).unwrap();
        let r2 = run_program_density(&s.ops, n, None).unwrap();
        for (x, y) in r1.entries.iter().zip(&r2.entries) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn simplification_preserves_channel() {
        let a = Architecture::brickwork_1d(6, 8, Boundary::Periodic).unwrap();
        let ens = GateEnsemble::FSim { theta: 90.0, phi: 60.0 };
        let circ = sample_circuit(&a, &ens, 5);
        let cuts = zigzag_cut(&a, 0, 2).unwrap();
        let part = Partition::with_cut_gates(&a, vec![(0..6).collect()], cuts).unwrap();
        let s = mdn_propagate_simplify(&circ, &part).unwrap();
        assert_same_channel(&circ, &part, &s);
    }

    #[test]
    fn time_cut_removes_past_and_mixes() {
        let a = Architecture::brickwork_1d(6, 8, Boundary::Periodic).unwrap();
        let ens = GateEnsemble::FSim { theta: 90.0, phi: 60.0 };
        let circ = sample_circuit(&a, &ens, 6);
        let cuts: Vec<_> = (0..a.layers[4].len()).map(|i| (4, i)).collect();
        let part = Partition::with_cut_gates(&a, vec![(0..6).collect()], cuts).unwrap();
        let s = mdn_propagate_simplify(&circ, &part).unwrap();
        assert_same_channel(&circ, &part, &s);
        let before: usize = a.layers[..4].iter().map(Vec::len).sum();
        assert!(s.gates_after <= s.gates_before - before);
        let d = run_program_density(&s.ops, 6, None).unwrap().diagonal();
        assert!(d.probs.iter().all(|&p| (p - 1.0 / 64.0).abs() < 1e-12));
    }

    #[test]
    fn simplification_rejects_haar_sandwich() {
        let a = brick(4, 6);
        let circ = sample_circuit(&a, &GateEnsemble::Haar2, 0);
        // cut (1,2) in layers 1 and 3 sandwiches qubit 2's layer-2 gate
        let part = Partition::with_cut_gates(&a, vec![(0..4).collect()], vec![(1, 0), (3, 0)]).unwrap();
        assert!(matches!(mdn_propagate_simplify(&circ, &part), Err(Error::Unsupported(_))));
    }

    #[test]
    fn xquath_term_limits() {
        let p = BitstringDistribution::new(2, vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let u = BitstringDistribution::uniform(2);
        assert!(xquath_term(&p, &u).abs() < 1e-15);
        assert!((xquath_term(&p, &p) - 16.0 * 0.15f64.powi(2)).abs() < 1e-13);
    }
}
