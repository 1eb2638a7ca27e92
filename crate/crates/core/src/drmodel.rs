//! The diffusion-reaction model of averaged random-circuit dynamics.
//!
//! After averaging over single-qubit Haar dressing, two copies of the circuit
//! reduce to a classical stochastic process over per-site states
//! I (vacuum) and Ω (particle). Configurations are bit masks with Ω = 1.
//! A two-qubit gate acts through a 4×4 column-stochastic matrix in the
//! basis (II, IΩ, ΩI, ΩΩ), where the first letter is the gate's first qubit.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{fsim_matrix, Architecture, GateEnsemble};
use crate::error::{Error, Result};
use crate::linalg::{self, haar4, pairwise_sum, pauli, stream, Mat4, ONE};
use crate::simulator::{apply_2q, NoiseKind, NoiseModel};
use crate::spoofer::Partition;

pub const DENSE_CAP: usize = 26;
pub const ETA: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DRParams {
    pub d: f64,
    pub r: f64,
    pub eta: f64,
}

impl DRParams {
    pub fn new(d: f64, r: f64) -> Result<Self> {
        let p = DRParams { d, r, eta: ETA };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let tol = 1e-9;
        if !(self.r >= -tol && self.r <= self.d + tol && self.d <= 1.0 + tol && self.r <= 2.0 / 3.0 + tol) {
            return Err(Error::Invalid(format!(
                "DR parameters need 0 <= R <= D <= 1 and R <= 2/3, got D = {}, R = {}",
                self.d, self.r
            )));
        }
        if self.eta != ETA {
            return Err(Error::Invalid(format!("reaction ratio must be 3, got {}", self.eta)));
        }
        Ok(())
    }

    pub fn haar() -> Self {
        DRParams { d: 0.8, r: 0.6, eta: ETA }
    }

    pub fn cz() -> Self {
        DRParams { d: 2.0 / 3.0, r: 2.0 / 3.0, eta: ETA }
    }
}

/// `m[out][in]`, basis (II, IΩ, ΩI, ΩΩ).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferMatrix4(pub [[f64; 4]; 4]);

impl TransferMatrix4 {
    pub fn column_sum_error(&self) -> f64 {
        (0..4)
            .map(|c| ((0..4).map(|r| self.0[r][c]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub fn build_t(p: &DRParams) -> TransferMatrix4 {
    let (d, r, eta) = (p.d, p.r, p.eta);
    TransferMatrix4([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0 - d, d - r, r / eta],
        [0.0, d - r, 1.0 - d, r / eta],
        [0.0, r, r, 1.0 - 2.0 * r / eta],
    ])
}

/// Single-site four-copy vectors |I⟩⟩ and |Ω⟩⟩, index `a + 2b + 4c + 8d`
/// for copy lines (ket, bra, ket, bra).
fn site_vectors() -> [[f64; 16]; 2] {
    let mut v = [[0.0; 16]; 2];
    for idx in 0..16 {
        let (a, b, c, d) = (idx & 1, (idx >> 1) & 1, (idx >> 2) & 1, (idx >> 3) & 1);
        if a == b && c == d {
            v[0][idx] = 0.5;
        }
        let s: num_complex::Complex64 = (1..4).map(|mu| pauli(mu)[a][b] * pauli(mu)[c][d]).sum();
        v[1][idx] = s.re * 0.5;
    }
    v
}

/// Gate T-matrix from the four-copy contraction, before reading off (D, R).
pub fn gate_transfer_matrix(g: &Mat4) -> Result<TransferMatrix4> {
    let ue = linalg::unitarity_error4(g);
    if ue > 1e-10 {
        return Err(Error::NotUnitary(ue));
    }
    let gc = g.map(|r| r.map(|z| z.conj()));
    let sv = site_vectors();
    let pair_vec = |s: usize| -> Vec<num_complex::Complex64> {
        let (s0, s1) = (s >> 1, s & 1);
        (0..256).map(|i| ONE * sv[s0][i & 15] * sv[s1][i >> 4]).collect()
    };
    let mut t = [[0.0; 4]; 4];
    for s_in in 0..4 {
        let mut v = pair_vec(s_in);
        // line k of site j is bit 4j + k; the gate's first qubit is site 0
        for (k, m) in [g, &gc, g, &gc].into_iter().enumerate() {
            apply_2q(&mut v, k, 4 + k, m);
        }
        for (s_out, row) in t.iter_mut().enumerate() {
            let bra = pair_vec(s_out);
            let z: num_complex::Complex64 = bra.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            if z.im.abs() > 1e-10 {
                return Err(Error::Consistency(format!("T0 entry has imaginary part {:e}", z.im)));
            }
            let n_omega = (s_in >> 1) + (s_in & 1);
            row[s_in] = z.re / 3f64.powi(n_omega as i32);
        }
    }
    let t = TransferMatrix4(t);
    let cs = t.column_sum_error();
    if cs > 1e-12_f64.max(10.0 * ue) {
        return Err(Error::Consistency(format!("T column sums deviate from 1 by {cs:e}")));
    }
    Ok(t)
}

pub fn extract_dr(g: &Mat4) -> Result<DRParams> {
    let t = gate_transfer_matrix(g)?;
    let d = 1.0 - t.0[1][1];
    let r = t.0[3][1];
    let back = t.0[1][3];
    let eta_ok = if r > 1e-9 { (r / back - ETA).abs() < 1e-9 } else { back.abs() < 1e-9 };
    if !eta_ok {
        return Err(Error::Consistency(format!("reaction ratio {} differs from 3", r / back)));
    }
    Ok(DRParams { d, r, eta: ETA })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDR {
    pub params: DRParams,
    /// Monte Carlo (D, R) with standard errors, for the Haar ensemble only.
    pub mc: Option<McDR>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McDR {
    pub d: f64,
    pub d_se: f64,
    pub r: f64,
    pub r_se: f64,
    pub samples: usize,
}

pub fn dr_for_ensemble(ens: &GateEnsemble, mc_samples: usize, seed: u64) -> Result<EnsembleDR> {
    match *ens {
        GateEnsemble::Cz => Ok(EnsembleDR { params: extract_dr(&linalg::cz4())?, mc: None }),
        GateEnsemble::FSim { theta, phi } | GateEnsemble::DiscreteFSim { theta, phi, .. } => {
            Ok(EnsembleDR { params: extract_dr(&fsim_matrix(theta, phi))?, mc: None })
        }
        GateEnsemble::Haar2 => {
            let mc = if mc_samples >= 2 {
                let mut rng = stream(seed, &[0xD2]);
                let mut dv = Vec::with_capacity(mc_samples);
                let mut rv = Vec::with_capacity(mc_samples);
                for _ in 0..mc_samples {
                    let t = gate_transfer_matrix(&haar4(&mut rng))?;
                    dv.push(1.0 - t.0[1][1]);
                    rv.push(t.0[3][1]);
                }
                let ds = crate::metrics::ensemble_average(&dv)?;
                let rs = crate::metrics::ensemble_average(&rv)?;
                Some(McDR {
                    d: ds.mean,
                    d_se: ds.standard_error,
                    r: rs.mean,
                    r_se: rs.standard_error,
                    samples: mc_samples,
                })
            } else {
                None
            };
            Ok(EnsembleDR { params: DRParams::haar(), mc })
        }
    }
}

/// Noise coefficient c in I_ε = diag(1, 1 − cε).
pub fn noise_coefficient(kind: NoiseKind) -> f64 {
    match kind {
        NoiseKind::Depolarizing => 4.0 / 3.0,
        NoiseKind::AmplitudeDamping => 2.0 / 3.0,
    }
}

/// Diagonal site factor diag(1, x); only `x` is stored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteFactor(pub f64);

impl SiteFactor {
    pub const IDENTITY: SiteFactor = SiteFactor(1.0);
    pub const PROJECT_I: SiteFactor = SiteFactor(0.0);

    pub fn noise(noise: &NoiseModel) -> SiteFactor {
        SiteFactor(1.0 - noise_coefficient(noise.kind) * noise.eps)
    }

    pub fn compose(self, other: SiteFactor) -> SiteFactor {
        SiteFactor(self.0 * other.0)
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[1.0, 0.0], [0.0, self.0]]
    }
}

/// Site factors per (layer, qubit), applied after the layer's gates.
#[derive(Clone, Debug, PartialEq)]
pub struct Defects {
    pub factors: Vec<Vec<SiteFactor>>,
}

impl Defects {
    pub fn none(arch: &Architecture) -> Self {
        Defects { factors: vec![vec![SiteFactor::IDENTITY; arch.n_qubits]; arch.depth()] }
    }
}

pub fn attach_defects(arch: &Architecture, noise: Option<&NoiseModel>, part: Option<&Partition>) -> Defects {
    let mut def = Defects::none(arch);
    if let Some(nm) = noise {
        let f = SiteFactor::noise(nm);
        for row in def.factors.iter_mut() {
            for x in row.iter_mut() {
                *x = x.compose(f);
            }
        }
    }
    if let Some(p) = part {
        for &(t, i) in &p.cut_gates {
            let (a, b) = arch.layers[t][i];
            def.factors[t][a] = SiteFactor::PROJECT_I;
            def.factors[t][b] = SiteFactor::PROJECT_I;
        }
    }
    def
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParticleDistribution {
    Dense { n_sites: usize, weights: Vec<f64> },
    Factorized { parts: Vec<SubsystemWeights> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsystemWeights {
    /// Global qubit indices; local bit `k` is qubit `qubits[k]`.
    pub qubits: Vec<usize>,
    pub weights: Vec<f64>,
}

pub(crate) fn apply_t(w: &mut [f64], bit_a: usize, bit_b: usize, t: &TransferMatrix4) {
    let (ma, mb) = (1usize << bit_a, 1usize << bit_b);
    let m = &t.0;
    for i in 0..w.len() {
        if i & (ma | mb) == 0 {
            let idx = [i, i | mb, i | ma, i | ma | mb];
            let v = idx.map(|k| w[k]);
            // row 0 and column 0 are (1, 0, 0, 0)
            w[idx[0]] = v[0];
            for r in 1..4 {
                w[idx[r]] = m[r][1] * v[1] + m[r][2] * v[2] + m[r][3] * v[3];
            }
        }
    }
}

pub(crate) fn apply_factor(w: &mut [f64], bit: usize, f: f64) {
    if f == 1.0 {
        return;
    }
    let m = 1usize << bit;
    for (i, x) in w.iter_mut().enumerate() {
        if i & m != 0 {
            *x *= f;
        }
    }
}

fn check_defects(arch: &Architecture, defects: &Defects) -> Result<()> {
    if defects.factors.len() != arch.depth() || defects.factors.iter().any(|r| r.len() != arch.n_qubits) {
        return Err(Error::Invalid("defect map does not match the architecture".into()));
    }
    Ok(())
}

/// Dense propagation of u^{⊗N} through every layer.
pub fn propagate_exact(arch: &Architecture, params: &DRParams, defects: &Defects) -> Result<ParticleDistribution> {
    check_defects(arch, defects)?;
    let n = arch.n_qubits;
    if n > DENSE_CAP {
        return Err(Error::Resource { what: "dense DR propagation", requested: n, cap: DENSE_CAP });
    }
    let t = build_t(params);
    let mut w = vec![0.5f64.powi(n as i32); 1 << n];
    for (layer, factors) in arch.layers.iter().zip(&defects.factors) {
        for &(a, b) in layer {
            apply_t(&mut w, a, b, &t);
        }
        for (q, f) in factors.iter().enumerate() {
            apply_factor(&mut w, q, f.0);
        }
    }
    Ok(ParticleDistribution::Dense { n_sites: n, weights: w })
}

/// Independent propagation of each subsystem. Every gate straddling two
/// subsystems must carry P_I on both of its sites.
pub fn propagate_factorized(
    arch: &Architecture,
    params: &DRParams,
    defects: &Defects,
    subsystems: &[Vec<usize>],
) -> Result<ParticleDistribution> {
    check_defects(arch, defects)?;
    let n = arch.n_qubits;
    let mut owner = vec![usize::MAX; n];
    for (s, qs) in subsystems.iter().enumerate() {
        for &q in qs {
            if q >= n || owner[q] != usize::MAX {
                return Err(Error::Partition(format!("qubit {q} out of range or listed twice")));
            }
            owner[q] = s;
        }
    }
    if owner.contains(&usize::MAX) {
        return Err(Error::Partition("subsystems do not cover every qubit".into()));
    }
    for (t, layer) in arch.layers.iter().enumerate() {
        for &(a, b) in layer {
            if owner[a] != owner[b] && (defects.factors[t][a].0 != 0.0 || defects.factors[t][b].0 != 0.0) {
                return Err(Error::Partition(format!(
                    "gate ({a},{b}) in layer {t} crosses subsystems without P_I on both sites"
                )));
            }
        }
    }
    let tm = build_t(params);
    let parts: Vec<SubsystemWeights> = subsystems
        .par_iter()
        .map(|qs| {
            let mut local = vec![usize::MAX; n];
            for (k, &q) in qs.iter().enumerate() {
                local[q] = k;
            }
            let mut w = vec![0.5f64.powi(qs.len() as i32); 1 << qs.len()];
            for (layer, factors) in arch.layers.iter().zip(&defects.factors) {
                for &(a, b) in layer {
                    if local[a] != usize::MAX && local[b] != usize::MAX {
                        apply_t(&mut w, local[a], local[b], &tm);
                    }
                }
                for (k, &q) in qs.iter().enumerate() {
                    apply_factor(&mut w, k, factors[q].0);
                }
            }
            SubsystemWeights { qubits: qs.clone(), weights: w }
        })
        .collect();
    if let Some(big) = parts.iter().find(|p| p.qubits.len() > DENSE_CAP) {
        return Err(Error::Resource { what: "factorized DR propagation", requested: big.qubits.len(), cap: DENSE_CAP });
    }
    Ok(ParticleDistribution::Factorized { parts })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observable {
    Xeb,
    Fidelity,
}

/// (1 + χ, F) of one dense weight vector over `n` sites.
fn contract(w: &[f64], n: usize) -> (f64, f64) {
    let inv3: Vec<f64> = (0..=n).map(|k| 3f64.powi(-(k as i32))).collect();
    let x: Vec<f64> = w.iter().enumerate().map(|(i, v)| v * inv3[i.count_ones() as usize]).collect();
    (pairwise_sum(&x) * (n as f64).exp2(), pairwise_sum(w))
}

pub fn evaluate(p: &ParticleDistribution, which: Observable) -> f64 {
    let (one_plus_chi, f) = match p {
        ParticleDistribution::Dense { n_sites, weights } => contract(weights, *n_sites),
        ParticleDistribution::Factorized { parts } => parts.iter().fold((1.0, 1.0), |(x, f), s| {
            let (xs, fs) = contract(&s.weights, s.qubits.len());
            (x * xs, f * fs)
        }),
    };
    match which {
        Observable::Xeb => one_plus_chi - 1.0,
        Observable::Fidelity => f,
    }
}

impl ParticleDistribution {
    pub fn n_sites(&self) -> usize {
        match self {
            ParticleDistribution::Dense { n_sites, .. } => *n_sites,
            ParticleDistribution::Factorized { parts } => parts.iter().map(|p| p.qubits.len()).sum(),
        }
    }

    /// Per-subsystem (1 + χ_i, F_i).
    pub fn subsystem_values(&self) -> Vec<(f64, f64)> {
        match self {
            ParticleDistribution::Dense { n_sites, weights } => vec![contract(weights, *n_sites)],
            ParticleDistribution::Factorized { parts } => {
                parts.iter().map(|s| contract(&s.weights, s.qubits.len())).collect()
            }
        }
    }

    /// Weight of each total particle number.
    pub fn particle_count_marginal(&self) -> Vec<f64> {
        let dense = |w: &[f64], n: usize| {
            let mut m = vec![0.0; n + 1];
            for (i, v) in w.iter().enumerate() {
                m[i.count_ones() as usize] += v;
            }
            m
        };
        match self {
            ParticleDistribution::Dense { n_sites, weights } => dense(weights, *n_sites),
            ParticleDistribution::Factorized { parts } => {
                parts.iter().fold(vec![1.0], |acc, s| {
                    let m = dense(&s.weights, s.qubits.len());
                    let mut out = vec![0.0; acc.len() + m.len() - 1];
                    for (i, a) in acc.iter().enumerate() {
                        for (j, b) in m.iter().enumerate() {
                            out[i + j] += a * b;
                        }
                    }
                    out
                })
            }
        }
    }
}

/// Largest number of live history bits in `contract_chain`.
pub const CHAIN_BIT_CAP: usize = 26;

/// Dense tensor over labelled bits; bit `k` of an index is `labels[k]`.
struct HistoryTensor {
    labels: Vec<(usize, usize)>,
    data: Vec<f64>,
}

impl HistoryTensor {
    fn pos(&self, l: (usize, usize)) -> Option<usize> {
        self.labels.iter().position(|&x| x == l)
    }

    fn ensure(&mut self, l: (usize, usize)) -> Result<usize> {
        if let Some(p) = self.pos(l) {
            return Ok(p);
        }
        if self.labels.len() == CHAIN_BIT_CAP {
            return Err(Error::Resource { what: "chain contraction bits", requested: CHAIN_BIT_CAP + 1, cap: CHAIN_BIT_CAP });
        }
        self.data.extend_from_within(..);
        self.labels.push(l);
        Ok(self.labels.len() - 1)
    }

    fn scale(&mut self, l: (usize, usize), f: [f64; 2]) {
        let m = 1usize << self.pos(l).expect("label present");
        for (i, x) in self.data.iter_mut().enumerate() {
            *x *= f[(i & m != 0) as usize];
        }
    }

    fn sum_out(&mut self, l: (usize, usize)) {
        let p = self.pos(l).expect("label present");
        let low = (1usize << p) - 1;
        let half = self.data.len() / 2;
        let mut out = vec![0.0; half];
        for (j, o) in out.iter_mut().enumerate() {
            let i = ((j & !low) << 1) | (j & low);
            *o = self.data[i] + self.data[i | (1 << p)];
        }
        self.data = out;
        self.labels.remove(p);
    }
}

struct ChainGate {
    a: usize,
    b: usize,
    seg_a: usize,
    seg_b: usize,
}

/// Exact (1 + χ, F) for an open nearest-neighbour 1D architecture,
/// contracting the particle histories site by site. Memory and time scale
/// as 2^depth rather than 2^N.
pub fn contract_chain(arch: &Architecture, params: &DRParams, defects: &Defects) -> Result<(f64, f64)> {
    check_defects(arch, defects)?;
    let n = arch.n_qubits;
    let t = build_t(params);
    let mut seg = vec![0usize; n];
    let mut bonds: Vec<Vec<ChainGate>> = (0..n.saturating_sub(1)).map(|_| Vec::new()).collect();
    let mut factors: Vec<Vec<f64>> = vec![vec![1.0]; n];
    for (layer, fl) in arch.layers.iter().zip(&defects.factors) {
        for &(a, b) in layer {
            if a.abs_diff(b) != 1 {
                return Err(Error::Unsupported(format!("chain contraction needs nearest-neighbour gates, got ({a}, {b})")));
            }
            bonds[a.min(b)].push(ChainGate { a, b, seg_a: seg[a], seg_b: seg[b] });
            for q in [a, b] {
                seg[q] += 1;
                factors[q].push(1.0);
            }
        }
        for (q, f) in fl.iter().enumerate() {
            *factors[q].last_mut().expect("segment") *= f.0;
        }
    }
    let mut uses: Vec<Vec<usize>> = seg.iter().map(|&m| vec![0; m + 1]).collect();
    for g in bonds.iter().flatten() {
        for (q, s) in [(g.a, g.seg_a), (g.b, g.seg_b)] {
            uses[q][s] += 1;
            uses[q][s + 1] += 1;
        }
    }
    let run = |v: [f64; 2]| -> Result<f64> {
        let mut ten = HistoryTensor { labels: Vec::new(), data: vec![1.0] };
        let mut left = uses.clone();
        for i in 0..n {
            for s in 0..=seg[i] {
                ten.ensure((i, s))?;
                let mut f = [1.0, factors[i][s]];
                if s == 0 {
                    f = [f[0] * 0.5, f[1] * 0.5];
                }
                if s == seg[i] {
                    f = [f[0] * v[0], f[1] * v[1]];
                }
                ten.scale((i, s), f);
            }
            for g in bonds.get(i).map_or(&[][..], Vec::as_slice) {
                let labels = [(g.a, g.seg_a), (g.b, g.seg_b), (g.a, g.seg_a + 1), (g.b, g.seg_b + 1)];
                let mut bits = [0usize; 4];
                for (k, &l) in labels.iter().enumerate() {
                    bits[k] = ten.ensure(l)?;
                }
                let bit = |i: usize, k: usize| (i >> bits[k]) & 1;
                for (idx, x) in ten.data.iter_mut().enumerate() {
                    let s_in = 2 * bit(idx, 0) + bit(idx, 1);
                    let s_out = 2 * bit(idx, 2) + bit(idx, 3);
                    *x *= t.0[s_out][s_in];
                }
                for l in labels {
                    left[l.0][l.1] -= 1;
                    if l.0 == i && left[l.0][l.1] == 0 {
                        ten.sum_out(l);
                    }
                }
            }
            for s in 0..=seg[i] {
                if left[i][s] == 0 && ten.pos((i, s)).is_some() {
                    ten.sum_out((i, s));
                }
            }
        }
        debug_assert!(ten.labels.is_empty());
        Ok(ten.data[0])
    };
    Ok((run([2.0, 2.0 / 3.0])?, run([1.0, 1.0])?))
}

/// Least-squares fit of the product ansatz α(1/4, 3β/4) per site to the
/// final single-site marginals of a dense distribution.
pub fn fit_weak_noise(p: &ParticleDistribution) -> Result<(f64, f64)> {
    let ParticleDistribution::Dense { n_sites, weights } = p else {
        return Err(Error::Unsupported("weak-noise fit needs a dense distribution".into()));
    };
    let n = *n_sites;
    let z = pairwise_sum(weights);
    if z <= 0.0 {
        return Err(Error::Invalid("distribution has no weight".into()));
    }
    let mut occ = 0.0;
    for q in 0..n {
        let m: Vec<f64> = weights.iter().enumerate().filter(|(i, _)| i >> q & 1 == 1).map(|(_, v)| *v).collect();
        occ += pairwise_sum(&m) / z;
    }
    let rho = occ / n as f64;
    let beta = rho / (3.0 * (1.0 - rho));
    let alpha = z.powf(1.0 / n as f64) / (0.25 + 0.75 * beta);
    Ok((alpha, beta))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub xeb: f64,
    pub xeb_se: f64,
    pub fidelity: f64,
    pub fidelity_se: f64,
    pub n_samples: usize,
}

const MC_CHUNK: usize = 1024;

/// One stochastic trajectory from a given initial configuration.
/// Returns the final weight and particle count.
fn trajectory<R: Rng>(
    state: &mut [u8],
    arch: &Architecture,
    t: &TransferMatrix4,
    defects: &Defects,
    rng: &mut R,
) -> (f64, usize) {
    let mut w = 1.0;
    for (layer, factors) in arch.layers.iter().zip(&defects.factors) {
        for &(a, b) in layer {
            let s = 2 * state[a] as usize + state[b] as usize;
            if s != 0 {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut out = 3;
                for r in 1..4 {
                    acc += t.0[r][s];
                    if u < acc {
                        out = r;
                        break;
                    }
                }
                state[a] = (out >> 1) as u8;
                state[b] = (out & 1) as u8;
            }
        }
        for (q, f) in factors.iter().enumerate() {
            if state[q] == 1 {
                w *= f.0;
            }
        }
        if w == 0.0 {
            return (0.0, 0);
        }
    }
    (w, state.iter().map(|&s| s as usize).sum())
}

/// Monte Carlo estimate of (χ, F). The vacuum sector is invariant and is
/// added exactly; trajectories are drawn from non-vacuum initial states.
pub fn propagate_mc(
    arch: &Architecture,
    params: &DRParams,
    defects: &Defects,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_defects(arch, defects)?;
    if n_samples < 2 {
        return Err(Error::Invalid("need at least two Monte Carlo samples".into()));
    }
    let n = arch.n_qubits;
    let t = build_t(params);
    let n_chunks = n_samples.div_ceil(MC_CHUNK);
    let sums: Vec<[f64; 4]> = (0..n_chunks)
        .into_par_iter()
        .map(|ch| {
            let mut rng = stream(seed, &[0x3C, ch as u64]);
            let mut acc = [0.0; 4];
            let mut state = vec![0u8; n];
            for _ in ch * MC_CHUNK..((ch + 1) * MC_CHUNK).min(n_samples) {
                loop {
                    for s in state.iter_mut() {
                        *s = rng.random::<bool>() as u8;
                    }
                    if state.iter().any(|&s| s == 1) {
                        break;
                    }
                }
                let (w, k) = trajectory(&mut state, arch, &t, defects, &mut rng);
                let x = w * 3f64.powi(-(k as i32));
                acc[0] += x;
                acc[1] += x * x;
                acc[2] += w;
                acc[3] += w * w;
            }
            acc
        })
        .collect();
    let mut tot = [0.0; 4];
    for s in &sums {
        for k in 0..4 {
            tot[k] += s[k];
        }
    }
    let m = n_samples as f64;
    let stat = |s: f64, s2: f64| {
        let mean = s / m;
        (mean, ((s2 / m - mean * mean).max(0.0) / (m - 1.0)).sqrt())
    };
    let (x, x_se) = stat(tot[0], tot[1]);
    let (f, f_se) = stat(tot[2], tot[3]);
    let two_n = (n as f64).exp2();
    let nonvac = 1.0 - 1.0 / two_n;
    Ok(McEstimate {
        xeb: nonvac * two_n * x,
        xeb_se: nonvac * two_n * x_se,
        fidelity: 1.0 / two_n + nonvac * f,
        fidelity_se: nonvac * f_se,
        n_samples,
    })
}

/// Weighted histogram of the final particle number over `n_samples`
/// trajectories started from u^{⊗N}.
pub fn sample_particle_counts(
    arch: &Architecture,
    params: &DRParams,
    defects: &Defects,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_defects(arch, defects)?;
    let n = arch.n_qubits;
    let t = build_t(params);
    let n_chunks = n_samples.div_ceil(MC_CHUNK);
    let hists: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|ch| {
            let mut rng = stream(seed, &[0x4C, ch as u64]);
            let mut h = vec![0.0; n + 1];
            let mut state = vec![0u8; n];
            for _ in ch * MC_CHUNK..((ch + 1) * MC_CHUNK).min(n_samples) {
                for s in state.iter_mut() {
                    *s = rng.random::<bool>() as u8;
                }
                let (w, k) = trajectory(&mut state, arch, &t, defects, &mut rng);
                h[k] += w;
            }
            h
        })
        .collect();
    let mut out = vec![0.0; n + 1];
    for h in hists {
        for (o, v) in out.iter_mut().zip(h) {
            *o += v;
        }
    }
    Ok(out)
}
