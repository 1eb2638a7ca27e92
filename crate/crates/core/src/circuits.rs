//! Circuit architectures, gate ensembles and seeded circuit sampling.
//!
//! A circuit of depth `d` consists of `d` entangling layers. Ensembles with
//! single-qubit dressing carry `d + 1` dressing layers: one before each
//! entangling layer and a final one before measurement.

use std::collections::HashSet;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::path::Path;

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, haar2, haar4, pauli, stream, Mat2, Mat4, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Open,
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ArchKind {
    Brickwork1d,
    Grid2d { rows: usize, cols: usize },
    Custom,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub n_qubits: usize,
    pub layers: Vec<Vec<(usize, usize)>>,
    pub kind: ArchKind,
    pub boundary: Boundary,
}

#[derive(Serialize, Deserialize)]
struct ArchFile {
    n_qubits: usize,
    layers: Vec<Vec<[usize; 2]>>,
}

/// Coupling orientations of the 2D grid, cycled in this order.
pub const GRID_ORIENTATIONS: [&str; 4] = ["right", "left", "down", "up"];

impl Architecture {
    pub fn new(n_qubits: usize, layers: Vec<Vec<(usize, usize)>>) -> Result<Self> {
        let a = Architecture {
            n_qubits,
            layers,
            kind: ArchKind::Custom,
            boundary: Boundary::Open,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::Architecture("n_qubits must be positive".into()));
        }
        for (t, layer) in self.layers.iter().enumerate() {
            let mut seen = HashSet::new();
            for (i, &(a, b)) in layer.iter().enumerate() {
                if a >= self.n_qubits || b >= self.n_qubits {
                    return Err(Error::Architecture(format!(
                        "layer {t}, pair {i} ({a},{b}): index out of range for {} qubits",
                        self.n_qubits
                    )));
                }
                if a == b || !seen.insert(a) || !seen.insert(b) {
                    return Err(Error::Architecture(format!(
                        "layer {t}, pair {i} ({a},{b}): qubit used twice in one layer"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn brickwork_1d(n: usize, depth: usize, boundary: Boundary) -> Result<Self> {
        if n < 2 {
            return Err(Error::Architecture("brickwork needs at least 2 qubits".into()));
        }
        if boundary == Boundary::Periodic && (n < 4 || n % 2 == 1) {
            return Err(Error::Architecture(format!(
                "periodic brickwork needs an even qubit count >= 4, got {n}"
            )));
        }
        let layers = (0..depth)
            .map(|t| {
                let mut layer: Vec<(usize, usize)> =
                    (t % 2..n.saturating_sub(1)).step_by(2).map(|q| (q, q + 1)).collect();
                if t % 2 == 1 && boundary == Boundary::Periodic {
                    layer.push((n - 1, 0));
                }
                layer
            })
            .collect();
        let a = Architecture {
            n_qubits: n,
            layers,
            kind: ArchKind::Brickwork1d,
            boundary,
        };
        a.validate()?;
        Ok(a)
    }

    /// `L x (L+1)` grid with qubit `r * (L+1) + c`.
    pub fn grid_2d(n: usize, depth: usize) -> Result<Self> {
        let l = (1..=n).find(|l| l * (l + 1) >= n).unwrap_or(0);
        if l == 0 || l * (l + 1) != n {
            return Err(Error::Architecture(format!(
                "grid-2d needs n_qubits = L(L+1), {n} is not of that form"
            )));
        }
        let (rows, cols) = (l, l + 1);
        let idx = |r: usize, c: usize| r * cols + c;
        let layers = (0..depth)
            .map(|t| {
                let mut layer = Vec::new();
                match t % 4 {
                    0 | 1 => {
                        for r in 0..rows {
                            for c0 in (t % 4..cols.saturating_sub(1)).step_by(2) {
                                layer.push((idx(r, c0), idx(r, c0 + 1)));
                            }
                        }
                    }
                    _ => {
                        for r0 in ((t % 4 - 2)..rows.saturating_sub(1)).step_by(2) {
                            for c0 in 0..cols {
                                layer.push((idx(r0, c0), idx(r0 + 1, c0)));
                            }
                        }
                    }
                }
                layer
            })
            .collect();
        let a = Architecture {
            n_qubits: n,
            layers,
            kind: ArchKind::Grid2d { rows, cols },
            boundary: Boundary::Open,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn to_json(&self) -> String {
        let f = ArchFile {
            n_qubits: self.n_qubits,
            layers: self
                .layers
                .iter()
                .map(|l| l.iter().map(|&(a, b)| [a, b]).collect())
                .collect(),
        };
        serde_json::to_string(&f).expect("architecture serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ArchFile = serde_json::from_str(s)?;
        let layers = f
            .layers
            .into_iter()
            .map(|l| l.into_iter().map(|[a, b]| (a, b)).collect())
            .collect();
        Architecture::new(f.n_qubits, layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Architecture spec as it appears in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ArchSpec {
    Brickwork1d {
        #[serde(default = "open")]
        boundary: Boundary,
    },
    Grid2d,
    File {
        path: String,
    },
}

fn open() -> Boundary {
    Boundary::Open
}

pub fn build_architecture(spec: &ArchSpec, n_qubits: usize, depth: usize) -> Result<Architecture> {
    if let ArchSpec::File { path } = spec {
        return load_architecture(Path::new(path));
    }
    if n_qubits < 2 || depth < 1 {
        return Err(Error::Architecture(format!(
            "need n_qubits >= 2 and depth >= 1, got {n_qubits} and {depth}"
        )));
    }
    match spec {
        ArchSpec::Brickwork1d { boundary } => Architecture::brickwork_1d(n_qubits, depth, *boundary),
        ArchSpec::Grid2d => Architecture::grid_2d(n_qubits, depth),
        ArchSpec::File { .. } => unreachable!(),
    }
}

pub fn load_architecture(path: &Path) -> Result<Architecture> {
    Architecture::from_json(&std::fs::read_to_string(path)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZMode {
    Continuous,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum GateEnsemble {
    #[serde(rename = "cz")]
    Cz,
    #[serde(rename = "haar2")]
    Haar2,
    #[serde(rename = "fsim")]
    FSim { theta: f64, phi: f64 },
    #[serde(rename = "discrete-fsim")]
    DiscreteFSim { theta: f64, phi: f64, z_mode: ZMode },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dressing {
    None,
    Haar,
    Discrete,
}

impl GateEnsemble {
    pub fn dressing(&self) -> Dressing {
        match self {
            GateEnsemble::Haar2 => Dressing::None,
            GateEnsemble::Cz | GateEnsemble::FSim { .. } => Dressing::Haar,
            GateEnsemble::DiscreteFSim { .. } => Dressing::Discrete,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GateEnsemble::FSim { theta, phi } | GateEnsemble::DiscreteFSim { theta, phi, .. } => {
                for (name, v) in [("theta", theta), ("phi", phi)] {
                    if !(0.0..360.0).contains(&v) {
                        return Err(Error::Invalid(format!("{name} = {v} outside [0, 360)")));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            GateEnsemble::Cz => "cz".into(),
            GateEnsemble::Haar2 => "haar2".into(),
            GateEnsemble::FSim { theta, phi } => format!("fsim({theta},{phi})"),
            GateEnsemble::DiscreteFSim { theta, phi, z_mode } => {
                format!("discrete-fsim({theta},{phi},{z_mode:?})").to_lowercase()
            }
        }
    }
}

/// fSim(θ, φ) with angles in degrees.
pub fn fsim_matrix(theta: f64, phi: f64) -> Mat4 {
    let (t, p) = (theta.to_radians(), phi.to_radians());
    let mut m = [[ZERO; 4]; 4];
    m[0][0] = ONE;
    m[1][1] = c(t.cos(), 0.0);
    m[2][2] = c(t.cos(), 0.0);
    m[1][2] = c(0.0, -t.sin());
    m[2][1] = c(0.0, -t.sin());
    m[3][3] = C64::from_polar(1.0, -p);
    m
}

/// Z(θ) = diag(1, e^{iθ}).
pub fn z_rotation(theta: f64) -> Mat2 {
    [[ONE, ZERO], [ZERO, C64::from_polar(1.0, theta)]]
}

/// The three discrete half-rotations √X, √Y, √W = exp(-iπσ/4), W = (X+Y)/√2.
pub fn sqrt_v(which: usize) -> Mat2 {
    let sigma = match which {
        0 => pauli(1),
        1 => pauli(2),
        2 => {
            let (x, y) = (pauli(1), pauli(2));
            let mut w = [[ZERO; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    w[i][j] = (x[i][j] + y[i][j]) * FRAC_1_SQRT_2;
                }
            }
            w
        }
        _ => panic!("V index {which} out of range"),
    };
    let mut m = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let id = if i == j { ONE } else { ZERO };
            m[i][j] = (id - linalg::I * sigma[i][j]) * FRAC_1_SQRT_2;
        }
    }
    m
}

pub fn discrete_single(v: usize, theta1: f64, theta2: f64) -> Mat2 {
    linalg::mul2(&linalg::mul2(&z_rotation(theta1), &sqrt_v(v)), &z_rotation(theta2))
}

/// The twelve elements Z(θ1)VZ(θ2) with θ1, θ2 ∈ {0, π}.
pub fn binary_discrete_set() -> Vec<Mat2> {
    let mut out = Vec::with_capacity(12);
    for v in 0..3 {
        for &t1 in &[0.0, PI] {
            for &t2 in &[0.0, PI] {
                out.push(discrete_single(v, t1, t2));
            }
        }
    }
    out
}

/// One step of an explicit gate program.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Single { q: usize, u: Mat2 },
    Two { a: usize, b: usize, g: Mat4 },
    /// Maximal depolarizing noise ρ ↦ Tr_q(ρ) ⊗ I/2.
    Mdn { q: usize },
    /// End of an entangling layer; noise channels act here.
    LayerEnd,
}

#[derive(Clone, Debug)]
pub struct CircuitInstance {
    pub architecture: Architecture,
    pub ensemble: Option<GateEnsemble>,
    pub seed: u64,
    pub two_qubit_gates: Vec<Vec<Mat4>>,
    /// `depth + 1` dressing layers of `n_qubits` gates each.
    pub single_qubit_gates: Option<Vec<Vec<Mat2>>>,
}

const TAG_TWO: u64 = 1;
const TAG_SINGLE: u64 = 2;
const TAG_V: u64 = 3;

impl CircuitInstance {
    /// Circuit from explicit gates; shapes and unitarity are checked.
    pub fn from_gates(
        architecture: Architecture,
        two_qubit_gates: Vec<Vec<Mat4>>,
        single_qubit_gates: Option<Vec<Vec<Mat2>>>,
    ) -> Result<Self> {
        architecture.validate()?;
        if two_qubit_gates.len() != architecture.depth()
            || two_qubit_gates.iter().zip(&architecture.layers).any(|(g, l)| g.len() != l.len())
        {
            return Err(Error::Invalid("two-qubit gate array does not match architecture".into()));
        }
        for g in two_qubit_gates.iter().flatten() {
            let e = linalg::unitarity_error4(g);
            if e > 1e-12 {
                return Err(Error::NotUnitary(e));
            }
        }
        if let Some(s) = &single_qubit_gates {
            if s.len() != architecture.depth() + 1 || s.iter().any(|l| l.len() != architecture.n_qubits) {
                return Err(Error::Invalid("dressing array must be (depth + 1) x n_qubits".into()));
            }
            for u in s.iter().flatten() {
                let e = linalg::unitarity_error2(u);
                if e > 1e-12 {
                    return Err(Error::NotUnitary(e));
                }
            }
        }
        Ok(CircuitInstance {
            architecture,
            ensemble: None,
            seed: 0,
            two_qubit_gates,
            single_qubit_gates,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.architecture.n_qubits
    }

    pub fn depth(&self) -> usize {
        self.architecture.depth()
    }

    /// Flattened program: dressing, layer, `LayerEnd`, ..., final dressing.
    pub fn program(&self) -> Vec<Op> {
        let mut ops = Vec::new();
        for t in 0..=self.depth() {
            if let Some(s) = &self.single_qubit_gates {
                for (q, u) in s[t].iter().enumerate() {
                    ops.push(Op::Single { q, u: *u });
                }
            }
            if t < self.depth() {
                for (&(a, b), g) in self.architecture.layers[t].iter().zip(&self.two_qubit_gates[t]) {
                    ops.push(Op::Two { a, b, g: *g });
                }
                ops.push(Op::LayerEnd);
            }
        }
        ops
    }
}

pub fn sample_circuit(arch: &Architecture, ens: &GateEnsemble, seed: u64) -> CircuitInstance {
    let two_qubit_gates = arch
        .layers
        .iter()
        .enumerate()
        .map(|(t, layer)| {
            (0..layer.len())
                .map(|i| match *ens {
                    GateEnsemble::Cz => linalg::cz4(),
                    GateEnsemble::Haar2 => haar4(&mut stream(seed, &[TAG_TWO, t as u64, i as u64])),
                    GateEnsemble::FSim { theta, phi } | GateEnsemble::DiscreteFSim { theta, phi, .. } => {
                        fsim_matrix(theta, phi)
                    }
                })
                .collect()
        })
        .collect();
    let n = arch.n_qubits;
    let single_qubit_gates = match ens.dressing() {
        Dressing::None => None,
        Dressing::Haar => Some(
            (0..=arch.depth())
                .map(|t| (0..n).map(|q| haar2(&mut stream(seed, &[TAG_SINGLE, t as u64, q as u64]))).collect())
                .collect(),
        ),
        Dressing::Discrete => {
            let z_mode = match ens {
                GateEnsemble::DiscreteFSim { z_mode, .. } => *z_mode,
                _ => unreachable!(),
            };
            let vs = discrete_v_choices(n, arch.depth() + 1, seed);
            Some(
                (0..=arch.depth())
                    .map(|t| {
                        (0..n)
                            .map(|q| {
                                let mut rng = stream(seed, &[TAG_SINGLE, t as u64, q as u64]);
                                let mut angle = || match z_mode {
                                    ZMode::Continuous => rng.random::<f64>() * 2.0 * PI,
                                    ZMode::Binary => {
                                        if rng.random::<bool>() {
                                            PI
                                        } else {
                                            0.0
                                        }
                                    }
                                };
                                let (t1, t2) = (angle(), angle());
                                discrete_single(vs[t][q], t1, t2)
                            })
                            .collect()
                    })
                    .collect(),
            )
        }
    };
    CircuitInstance {
        architecture: arch.clone(),
        ensemble: Some(*ens),
        seed,
        two_qubit_gates,
        single_qubit_gates,
    }
}

/// V indices per (dressing layer, qubit); consecutive layers always differ.
pub fn discrete_v_choices(n: usize, layers: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::with_capacity(layers);
    for t in 0..layers {
        let row = (0..n)
            .map(|q| {
                let mut rng = stream(seed, &[TAG_V, t as u64, q as u64]);
                match out.last() {
                    None => rng.random_range(0..3),
                    Some(prev) => (prev[q] + 1 + rng.random_range(0..2)) % 3,
                }
            })
            .collect();
        out.push(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dagger2, mul2, unitarity_error4};

    #[test]
    fn brickwork_small() {
        let a = Architecture::brickwork_1d(4, 2, Boundary::Open).unwrap();
        assert_eq!(a.layers, vec![vec![(0, 1), (2, 3)], vec![(1, 2)]]);
        let p = Architecture::brickwork_1d(4, 2, Boundary::Periodic).unwrap();
        assert_eq!(p.layers[1], vec![(1, 2), (3, 0)]);
        assert!(Architecture::brickwork_1d(5, 2, Boundary::Periodic).is_err());
    }

    #[test]
    fn brickwork_twelve_alternates() {
        let a = Architecture::brickwork_1d(12, 16, Boundary::Open).unwrap();
        assert_eq!(a.depth(), 16);
        for (t, l) in a.layers.iter().enumerate() {
            assert_eq!(l.len(), if t % 2 == 0 { 6 } else { 5 });
        }
    }

    #[test]
    fn grid_first_layer_horizontal() {
        let a = Architecture::grid_2d(6, 1).unwrap();
        assert_eq!(a.layers, vec![vec![(0, 1), (3, 4)]]);
        let b = Architecture::grid_2d(6, 4).unwrap();
        assert_eq!(b.layers[1], vec![(1, 2), (4, 5)]);
        assert_eq!(b.layers[2], vec![(0, 3), (1, 4), (2, 5)]);
        assert!(b.layers[3].is_empty());
        assert!(Architecture::grid_2d(7, 1).is_err());
    }

    #[test]
    fn json_round_trip_and_errors() {
        let a = Architecture::from_json(r#"{"n_qubits":3,"layers":[[[0,1]],[[1,2]]]}"#).unwrap();
        assert_eq!(a.n_qubits, 3);
        assert_eq!(a.depth(), 2);
        assert_eq!(Architecture::from_json(&a.to_json()).unwrap(), a);
        let err = Architecture::from_json(r#"{"n_qubits":3,"layers":[[[1,2]],[[0,0]]]}"#).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
        assert!(Architecture::from_json(r#"{"n_qubits":2,"layers":[[[0,2]]]}"#).is_err());
    }

    #[test]
    fn fsim_examples() {
        let id = fsim_matrix(0.0, 0.0);
        assert_eq!(id, linalg::id4());
        let g = fsim_matrix(90.0, 60.0);
        assert!((g[1][2] - c(0.0, -1.0)).norm() < 1e-15);
        assert!(g[1][1].norm() < 1e-15);
        assert!((g[3][3] - C64::from_polar(1.0, -PI / 3.0)).norm() < 1e-15);
        let h = fsim_matrix(90.0, 180.0);
        assert!((h[3][3] + ONE).norm() < 1e-15);
        assert!(unitarity_error4(&h) < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = Architecture::brickwork_1d(6, 5, Boundary::Open).unwrap();
        for ens in [
            GateEnsemble::Haar2,
            GateEnsemble::Cz,
            GateEnsemble::DiscreteFSim { theta: 90.0, phi: 60.0, z_mode: ZMode::Continuous },
        ] {
            let x = sample_circuit(&a, &ens, 11);
            let y = sample_circuit(&a, &ens, 11);
            assert_eq!(x.two_qubit_gates, y.two_qubit_gates);
            assert_eq!(x.single_qubit_gates, y.single_qubit_gates);
            let z = sample_circuit(&a, &ens, 12);
            if ens != GateEnsemble::Cz {
                assert!(x.two_qubit_gates != z.two_qubit_gates || x.single_qubit_gates != z.single_qubit_gates);
            }
        }
        assert!(sample_circuit(&a, &GateEnsemble::Haar2, 1).single_qubit_gates.is_none());
    }

    #[test]
    fn discrete_v_never_repeats() {
        for seed in 0..50 {
            let v = discrete_v_choices(5, 20, seed);
            for t in 1..20 {
                for q in 0..5 {
                    assert_ne!(v[t][q], v[t - 1][q]);
                }
            }
        }
    }

    #[test]
    fn binary_set_is_a_one_design() {
        let set = binary_discrete_set();
        assert_eq!(set.len(), 12);
        let rho = [[c(0.7, 0.0), c(0.1, 0.2)], [c(0.1, -0.2), c(0.3, 0.0)]];
        let mut avg = [[ZERO; 2]; 2];
        for u in &set {
            let r = mul2(&mul2(u, &rho), &dagger2(u));
            for i in 0..2 {
                for j in 0..2 {
                    avg[i][j] += r[i][j] / 12.0;
                }
            }
        }
        assert!((avg[0][0] - c(0.5, 0.0)).norm() < 1e-12);
        assert!(avg[0][1].norm() < 1e-12);
    }

    #[test]
    fn program_layout() {
        let a = Architecture::brickwork_1d(4, 2, Boundary::Open).unwrap();
        let p = sample_circuit(&a, &GateEnsemble::Cz, 0).program();
        let singles = p.iter().filter(|o| matches!(o, Op::Single { .. })).count();
        let ends = p.iter().filter(|o| matches!(o, Op::LayerEnd)).count();
        assert_eq!(singles, 12);
        assert_eq!(ends, 2);
        assert!(matches!(p.last(), Some(Op::Single { .. })));
    }
}
