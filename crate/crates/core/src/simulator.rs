//! Exact state-vector and density-matrix simulation.
//!
//! Qubit `q` is bit `q` of a basis index. A density matrix is stored
//! row-major, so row qubit `q` is bit `q + n` and column qubit `q` is bit `q`.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{CircuitInstance, Op};
use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, pauli, stream, Mat2, Mat4, ONE, ZERO};

pub const STATE_VECTOR_CAP: usize = 26;
pub const DENSITY_MATRIX_CAP: usize = 12;

pub(crate) fn apply_1q(amps: &mut [C64], bit: usize, u: &Mat2) {
    let m = 1usize << bit;
    for i in 0..amps.len() {
        if i & m == 0 {
            let (a0, a1) = (amps[i], amps[i | m]);
            amps[i] = u[0][0] * a0 + u[0][1] * a1;
            amps[i | m] = u[1][0] * a0 + u[1][1] * a1;
        }
    }
}

/// Applies `g` with basis index `2 * bit_a + bit_b`.
pub(crate) fn apply_2q(amps: &mut [C64], bit_a: usize, bit_b: usize, g: &Mat4) {
    let (ma, mb) = (1usize << bit_a, 1usize << bit_b);
    for i in 0..amps.len() {
        if i & (ma | mb) == 0 {
            let idx = [i, i | mb, i | ma, i | ma | mb];
            let v = idx.map(|k| amps[k]);
            for (r, &k) in idx.iter().enumerate() {
                amps[k] = g[r][0] * v[0] + g[r][1] * v[1] + g[r][2] * v[2] + g[r][3] * v[3];
            }
        }
    }
}

fn conj2(u: &Mat2) -> Mat2 {
    u.map(|r| r.map(|z| z.conj()))
}

fn conj4(g: &Mat4) -> Mat4 {
    g.map(|r| r.map(|z| z.conj()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub n_qubits: usize,
    pub amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn zero(n: usize) -> Self {
        let mut amplitudes = vec![ZERO; 1 << n];
        amplitudes[0] = ONE;
        StateVector { n_qubits: n, amplitudes }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn apply_single(&mut self, q: usize, u: &Mat2) {
        apply_1q(&mut self.amplitudes, q, u);
    }

    pub fn apply_two(&mut self, a: usize, b: usize, g: &Mat4) {
        apply_2q(&mut self.amplitudes, a, b, g);
    }

    pub fn probabilities(&self) -> BitstringDistribution {
        BitstringDistribution {
            n_qubits: self.n_qubits,
            probs: self.amplitudes.iter().map(|a| a.norm_sqr()).collect(),
            normalized: true,
        }
    }

    /// Tensor product with `self` on the low qubits.
    pub fn tensor(&self, high: &StateVector) -> StateVector {
        let mut amplitudes = Vec::with_capacity(self.amplitudes.len() * high.amplitudes.len());
        for h in &high.amplitudes {
            for l in &self.amplitudes {
                amplitudes.push(h * l);
            }
        }
        StateVector { n_qubits: self.n_qubits + high.n_qubits, amplitudes }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub n_qubits: usize,
    /// Row-major `2^n x 2^n` entries.
    pub entries: Vec<C64>,
}

impl DensityMatrix {
    pub fn zero(n: usize) -> Self {
        let mut entries = vec![ZERO; 1 << (2 * n)];
        entries[0] = ONE;
        DensityMatrix { n_qubits: n, entries }
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let dim = psi.amplitudes.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for r in &psi.amplitudes {
            for c in &psi.amplitudes {
                entries.push(r * c.conj());
            }
        }
        DensityMatrix { n_qubits: psi.n_qubits, entries }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.entries[r * self.dim() + c]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut e: f64 = 0.0;
        for r in 0..d {
            for c in r..d {
                e = e.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        e
    }

    pub fn apply_single(&mut self, q: usize, u: &Mat2) {
        let n = self.n_qubits;
        apply_1q(&mut self.entries, q + n, u);
        apply_1q(&mut self.entries, q, &conj2(u));
    }

    pub fn apply_two(&mut self, a: usize, b: usize, g: &Mat4) {
        let n = self.n_qubits;
        apply_2q(&mut self.entries, a + n, b + n, g);
        apply_2q(&mut self.entries, a, b, &conj4(g));
    }

    /// Applies a channel acting on the 2x2 block `[ρ00, ρ01, ρ10, ρ11]` of qubit `q`.
    fn apply_block(&mut self, q: usize, f: impl Fn([C64; 4]) -> [C64; 4]) {
        let (mc, mr) = (1usize << q, 1usize << (q + self.n_qubits));
        for i in 0..self.entries.len() {
            if i & (mc | mr) == 0 {
                let idx = [i, i | mc, i | mr, i | mc | mr];
                let out = f(idx.map(|k| self.entries[k]));
                for (k, v) in idx.iter().zip(out) {
                    self.entries[*k] = v;
                }
            }
        }
    }

    pub fn apply_noise(&mut self, q: usize, noise: &NoiseModel) {
        let e = noise.eps;
        match noise.kind {
            NoiseKind::Depolarizing => self.apply_block(q, |[a, b, c, d]| {
                let (keep, flip) = (1.0 - 2.0 * e / 3.0, 2.0 * e / 3.0);
                let off = 1.0 - 4.0 * e / 3.0;
                [keep * a + flip * d, off * b, off * c, flip * a + keep * d]
            }),
            NoiseKind::AmplitudeDamping => self.apply_block(q, |[a, b, c, d]| {
                let s = (1.0 - e).sqrt();
                [a + e * d, s * b, s * c, (1.0 - e) * d]
            }),
        }
    }

    pub fn apply_mdn(&mut self, q: usize) {
        self.apply_block(q, |[a, _, _, d]| {
            let m = (a + d) * 0.5;
            [m, ZERO, ZERO, m]
        });
    }

    pub fn diagonal(&self) -> BitstringDistribution {
        BitstringDistribution {
            n_qubits: self.n_qubits,
            probs: (0..self.dim()).map(|i| self.get(i, i).re).collect(),
            normalized: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Depolarizing,
    AmplitudeDamping,
}

/// Single-qubit noise applied after every entangling layer on every qubit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub eps: f64,
}

impl NoiseModel {
    pub fn depolarizing(eps: f64) -> Self {
        NoiseModel { kind: NoiseKind::Depolarizing, eps }
    }

    pub fn amplitude_damping(eps: f64) -> Self {
        NoiseModel { kind: NoiseKind::AmplitudeDamping, eps }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eps) {
            return Err(Error::Invalid(format!("noise rate {} outside [0, 1]", self.eps)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BitstringDistribution {
    pub n_qubits: usize,
    pub probs: Vec<f64>,
    pub normalized: bool,
}

impl BitstringDistribution {
    pub fn new(n_qubits: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1 << n_qubits {
            return Err(Error::SizeMismatch(n_qubits, probs.len().trailing_zeros() as usize));
        }
        let s = pairwise_sum(&probs);
        if (s - 1.0).abs() > 1e-10 || probs.iter().any(|&p| p < -1e-12) {
            return Err(Error::Unnormalized);
        }
        Ok(BitstringDistribution { n_qubits, probs, normalized: true })
    }

    pub fn unnormalized(n_qubits: usize, probs: Vec<f64>) -> Self {
        BitstringDistribution { n_qubits, probs, normalized: false }
    }

    pub fn uniform(n_qubits: usize) -> Self {
        let d = 1usize << n_qubits;
        BitstringDistribution { n_qubits, probs: vec![1.0 / d as f64; d], normalized: true }
    }

    pub fn point_mass(n_qubits: usize, x: usize) -> Self {
        let mut probs = vec![0.0; 1 << n_qubits];
        probs[x] = 1.0;
        BitstringDistribution { n_qubits, probs, normalized: true }
    }

    pub fn total(&self) -> f64 {
        pairwise_sum(&self.probs)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for p in &self.probs {
            w.write_all(&p.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() % 8 != 0 || !(bytes.len() / 8).is_power_of_two() {
            return Err(Error::Invalid("binary distribution length is not 8 * 2^n bytes".into()));
        }
        let probs: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let n = probs.len().trailing_zeros() as usize;
        let normalized = (pairwise_sum(&probs) - 1.0).abs() <= 1e-10;
        Ok(BitstringDistribution { n_qubits: n, probs, normalized })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "index,probability")?;
        for (i, p) in self.probs.iter().enumerate() {
            writeln!(w, "{i},{p:e}")?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_cap(what: &'static str, n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(Error::Resource { what, requested: n, cap });
    }
    Ok(())
}

/// Runs a program on `|0^n>`; MDN steps are rejected.
pub fn run_program_pure(ops: &[Op], n: usize) -> Result<StateVector> {
    check_cap("state-vector simulation", n, STATE_VECTOR_CAP)?;
    let mut psi = StateVector::zero(n);
    for op in ops {
        match op {
            Op::Single { q, u } => psi.apply_single(*q, u),
            Op::Two { a, b, g } => psi.apply_two(*a, *b, g),
            Op::Mdn { .. } => return Err(Error::Unsupported("MDN in a pure-state program".into())),
            Op::LayerEnd => {}
        }
    }
    Ok(psi)
}

pub fn run_program_density(ops: &[Op], n: usize, noise: Option<&NoiseModel>) -> Result<DensityMatrix> {
    check_cap("density-matrix simulation", n, DENSITY_MATRIX_CAP)?;
    let mut rho = DensityMatrix::zero(n);
    for op in ops {
        match op {
            Op::Single { q, u } => rho.apply_single(*q, u),
            Op::Two { a, b, g } => rho.apply_two(*a, *b, g),
            Op::Mdn { q } => rho.apply_mdn(*q),
            Op::LayerEnd => {
                if let Some(nm) = noise {
                    for q in 0..n {
                        rho.apply_noise(q, nm);
                    }
                }
            }
        }
    }
    Ok(rho)
}

pub fn run_pure(circuit: &CircuitInstance) -> Result<StateVector> {
    run_program_pure(&circuit.program(), circuit.n_qubits())
}

pub fn run_density(circuit: &CircuitInstance, noise: &NoiseModel) -> Result<DensityMatrix> {
    noise.validate()?;
    run_program_density(&circuit.program(), circuit.n_qubits(), Some(noise))
}

#[derive(Clone, Debug)]
pub struct TrajectoryResult {
    pub distribution: BitstringDistribution,
    pub distribution_se: Vec<f64>,
    pub fidelity: f64,
    pub fidelity_se: f64,
    pub n_traj: usize,
}

const TRAJ_CHUNK: usize = 32;

/// Pauli unraveling of depolarizing noise. Results do not depend on the
/// thread count: trajectories are summed in fixed chunks, chunks in order.
pub fn run_trajectories(
    circuit: &CircuitInstance,
    noise: &NoiseModel,
    n_traj: usize,
    seed: u64,
) -> Result<TrajectoryResult> {
    noise.validate()?;
    if noise.kind != NoiseKind::Depolarizing {
        return Err(Error::Unsupported("amplitude damping has no Pauli unraveling".into()));
    }
    if n_traj == 0 {
        return Err(Error::Invalid("n_traj must be positive".into()));
    }
    let n = circuit.n_qubits();
    check_cap("trajectory simulation", n, STATE_VECTOR_CAP)?;
    let ops = circuit.program();
    let ideal = run_program_pure(&ops, n)?;
    let dim = 1usize << n;
    let paulis = [pauli(1), pauli(2), pauli(3)];

    let run_one = |k: usize| -> StateVector {
        let mut rng = stream(seed, &[k as u64]);
        let mut psi = StateVector::zero(n);
        for op in &ops {
            match op {
                Op::Single { q, u } => psi.apply_single(*q, u),
                Op::Two { a, b, g } => psi.apply_two(*a, *b, g),
                Op::Mdn { .. } => unreachable!("circuit programs contain no MDN"),
                Op::LayerEnd => {
                    for q in 0..n {
                        if rng.random::<f64>() < noise.eps {
                            psi.apply_single(q, &paulis[rng.random_range(0..3)]);
                        }
                    }
                }
            }
        }
        psi
    };

    struct Partial {
        p: Vec<f64>,
        p2: Vec<f64>,
        f: f64,
        f2: f64,
    }
    let n_chunks = n_traj.div_ceil(TRAJ_CHUNK);
    let batch = (rayon::current_num_threads() * 2).max(1);
    let mut acc = Partial { p: vec![0.0; dim], p2: vec![0.0; dim], f: 0.0, f2: 0.0 };
    let mut start = 0;
    while start < n_chunks {
        let end = (start + batch).min(n_chunks);
        let partials: Vec<Partial> = (start..end)
            .into_par_iter()
            .map(|ch| {
                let mut part = Partial { p: vec![0.0; dim], p2: vec![0.0; dim], f: 0.0, f2: 0.0 };
                for k in ch * TRAJ_CHUNK..((ch + 1) * TRAJ_CHUNK).min(n_traj) {
                    let psi = run_one(k);
                    for (i, a) in psi.amplitudes.iter().enumerate() {
                        let p = a.norm_sqr();
                        part.p[i] += p;
                        part.p2[i] += p * p;
                    }
                    let f = ideal.inner(&psi).norm_sqr();
                    part.f += f;
                    part.f2 += f * f;
                }
                part
            })
            .collect();
        for part in partials {
            for i in 0..dim {
                acc.p[i] += part.p[i];
                acc.p2[i] += part.p2[i];
            }
            acc.f += part.f;
            acc.f2 += part.f2;
        }
        start = end;
    }
    let m = n_traj as f64;
    let se = |s: f64, s2: f64| {
        if n_traj < 2 {
            return 0.0;
        }
        let mean = s / m;
        ((s2 / m - mean * mean).max(0.0) * m / (m - 1.0) / m).sqrt()
    };
    let distribution_se = (0..dim).map(|i| se(acc.p[i], acc.p2[i])).collect();
    Ok(TrajectoryResult {
        distribution: BitstringDistribution {
            n_qubits: n,
            probs: acc.p.iter().map(|s| s / m).collect(),
            normalized: true,
        },
        distribution_se,
        fidelity: acc.f / m,
        fidelity_se: se(acc.f, acc.f2),
        n_traj,
    })
}

/// ⟨ψ|ρ|ψ⟩, clipped to [0, 1].
pub fn fidelity(psi: &StateVector, rho: &DensityMatrix) -> Result<f64> {
    if psi.n_qubits != rho.n_qubits {
        return Err(Error::SizeMismatch(psi.n_qubits, rho.n_qubits));
    }
    let d = rho.dim();
    let mut acc = ZERO;
    for r in 0..d {
        let row = &rho.entries[r * d..(r + 1) * d];
        let s: C64 = row.iter().zip(&psi.amplitudes).map(|(x, a)| x * a).sum();
        acc += psi.amplitudes[r].conj() * s;
    }
    if acc.im.abs() > 1e-10 {
        return Err(Error::Consistency(format!("fidelity has imaginary part {:e}", acc.im)));
    }
    Ok(acc.re.clamp(0.0, 1.0))
}

pub fn sample_bitstrings(dist: &BitstringDistribution, m: usize, seed: u64) -> Result<Vec<usize>> {
    if !dist.normalized {
        return Err(Error::Unnormalized);
    }
    let mut cdf = Vec::with_capacity(dist.probs.len());
    let mut s = 0.0;
    for p in &dist.probs {
        s += p.max(0.0);
        cdf.push(s);
    }
    let mut rng = stream(seed, &[0x5A3D]);
    Ok((0..m)
        .map(|_| {
            let u = rng.random::<f64>() * s;
            cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
        })
        .collect())
}

/// 2^{N(k-1)}/k! Σ p^k; equals 1 for Porter-Thomas statistics.
pub fn pt_moment_ratio(dist: &BitstringDistribution, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::Invalid("moment order must be at least 1".into()));
    }
    if !dist.normalized {
        return Err(Error::Unnormalized);
    }
    let n = dist.n_qubits as f64;
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    let scaled: Vec<f64> = dist.probs.iter().map(|p| p.powi(k as i32)).collect();
    Ok(pairwise_sum(&scaled) * (n * (k as f64 - 1.0)).exp2() / fact)
}
