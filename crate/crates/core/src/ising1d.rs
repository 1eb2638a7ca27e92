//! Spectral gaps of the two-layer period operator of 1D brickwork circuits
//! in the particle-occupation basis.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drmodel::{apply_factor, apply_t, build_t, evaluate, DRParams, Observable, ParticleDistribution, TransferMatrix4};
use crate::error::{Error, Result};
use crate::linalg::stream;

pub const WIDTH_CAP: usize = 16;
pub const DENSE_WIDTH_CAP: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Left,
    Right,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FieldConfig {
    Ideal,
    /// Site factor 1 − cε on every site after every layer.
    BulkNoise { eps: f64, c: f64 },
    /// P_I on the boundary site each time the gate across the cut bond
    /// would act. The strip starts at an even global site.
    BoundaryOmission { side: Side },
}

/// Linear map on R^dim.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let v = self * DVector::from_column_slice(x);
        y.copy_from_slice(v.as_slice());
    }
}

/// (odd layer)·(even layer) on an open strip of `l` sites, with the site
/// factors of each layer folded in. Applied matrix-free.
#[derive(Clone, Debug)]
pub struct PeriodOperator {
    pub l: usize,
    pub params: DRParams,
    pub config: FieldConfig,
    t: TransferMatrix4,
    /// Site factors after the even and odd layer.
    factors: [Vec<f64>; 2],
}

pub fn build_period_operator(l: usize, params: &DRParams, config: FieldConfig) -> Result<PeriodOperator> {
    params.validate()?;
    if l < 2 {
        return Err(Error::Invalid("the strip needs at least 2 sites".into()));
    }
    if l > WIDTH_CAP {
        return Err(Error::Resource { what: "period operator width", requested: l, cap: WIDTH_CAP });
    }
    let mut factors = [vec![1.0; l], vec![1.0; l]];
    match config {
        FieldConfig::Ideal => {}
        FieldConfig::BulkNoise { eps, c } => {
            let x = 1.0 - c * eps;
            if !(0.0..=1.0).contains(&x) || !(eps >= 0.0) {
                return Err(Error::Invalid(format!("noise factor 1 - c·eps = {x} outside [0, 1]")));
            }
            factors = [vec![x; l], vec![x; l]];
        }
        FieldConfig::BoundaryOmission { side } => {
            if matches!(side, Side::Right | Side::Both) {
                factors[(l - 1) % 2][l - 1] = 0.0;
            }
            if matches!(side, Side::Left | Side::Both) {
                factors[1][0] = 0.0;
            }
        }
    }
    Ok(PeriodOperator { l, params: *params, config, t: build_t(params), factors })
}

impl PeriodOperator {
    /// One brickwork layer of the given parity followed by its site factors.
    pub fn apply_layer(&self, w: &mut [f64], parity: usize) {
        for a in (parity..self.l - 1).step_by(2) {
            apply_t(w, a, a + 1, &self.t);
        }
        for (q, &f) in self.factors[parity].iter().enumerate() {
            apply_factor(w, q, f);
        }
    }

    /// Weights after `depth` layers starting from u^{⊗l}.
    pub fn propagate(&self, depth: usize) -> ParticleDistribution {
        let mut w = vec![0.5f64.powi(self.l as i32); 1 << self.l];
        for t in 0..depth {
            self.apply_layer(&mut w, t % 2);
        }
        ParticleDistribution::Dense { n_sites: self.l, weights: w }
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.l > DENSE_WIDTH_CAP {
            return Err(Error::Resource { what: "dense period operator", requested: self.l, cap: DENSE_WIDTH_CAP });
        }
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            e[j] = 0.0;
            m.column_mut(j).copy_from_slice(&col);
        }
        Ok(m)
    }
}

impl LinearOperator for PeriodOperator {
    fn dim(&self) -> usize {
        1 << self.l
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
        self.apply_layer(y, 0);
        self.apply_layer(y, 1);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub l: usize,
    pub config: Option<FieldConfig>,
    pub lambda0: f64,
    pub lambda1: f64,
    /// Per-layer decay rate ln(λ0/λ1)/2.
    pub delta: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigOptions {
    pub block: usize,
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions { block: 6, tol: 1e-10, max_iterations: 200_000, seed: 0 }
    }
}

fn orthonormalize(q: &mut [Vec<f64>]) {
    for i in 0..q.len() {
        for _ in 0..2 {
            for j in 0..i {
                let (head, tail) = q.split_at_mut(i);
                let dot: f64 = head[j].iter().zip(&tail[0]).map(|(a, b)| a * b).sum();
                for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                    *x -= dot * y;
                }
            }
        }
        let norm = q[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in q[i].iter_mut() {
            *x /= norm;
        }
    }
}

/// Null vector of (H − θ) by SVD.
fn ritz_vector(h: &DMatrix<f64>, theta: Complex64) -> DVector<Complex64> {
    let k = h.nrows();
    let m = DMatrix::from_fn(k, k, |i, j| Complex64::new(h[(i, j)], 0.0) - if i == j { theta } else { Complex64::new(0.0, 0.0) });
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let imin = (0..k).min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b])).unwrap_or(0);
    vt.row(imin).adjoint()
}

/// Relative residual |A v − θ v| / |θ| of a Ritz pair, v = Q y.
fn residual<A: LinearOperator + ?Sized>(op: &A, q: &[Vec<f64>], aq: &[Vec<f64>], y: &DVector<Complex64>, theta: Complex64) -> f64 {
    let n = op.dim();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let mut v = Complex64::new(0.0, 0.0);
        let mut av = Complex64::new(0.0, 0.0);
        for (k, yk) in y.iter().enumerate() {
            v += yk * q[k][i];
            av += yk * aq[k][i];
        }
        num += (av - theta * v).norm_sqr();
        den += v.norm_sqr();
    }
    (num / den).sqrt() / theta.norm().max(f64::MIN_POSITIVE)
}

/// Top two eigenvalue magnitudes by block subspace iteration with
/// Rayleigh-Ritz extraction.
pub fn top_two_eigs_of<A: LinearOperator + ?Sized>(op: &A, opts: &EigOptions) -> Result<(f64, f64, usize)> {
    let n = op.dim();
    let k = opts.block.clamp(2, n);
    let mut rng = stream(opts.seed, &[0x15]);
    let mut q: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random::<f64>() - 0.25).collect()).collect();
    orthonormalize(&mut q);
    let mut aq = vec![vec![0.0; n]; k];
    let mut residuals = Vec::new();
    for it in 1..=opts.max_iterations {
        aq.par_iter_mut().zip(&q).for_each(|(y, x)| op.apply(x, y));
        let check = it % 10 == 0 || n <= k;
        if check {
            let h = DMatrix::from_fn(k, k, |i, j| q[i].iter().zip(&aq[j]).map(|(a, b)| a * b).sum::<f64>());
            let mut ev: Vec<Complex64> = h.complex_eigenvalues().iter().copied().collect();
            ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
            let res: Vec<f64> = ev[..2].iter().map(|&th| residual(op, &q, &aq, &ritz_vector(&h, th), th)).collect();
            residuals = res.clone();
            if res.iter().all(|&r| r < opts.tol) || n <= k {
                return Ok((ev[0].norm(), ev[1].norm(), it));
            }
        }
        std::mem::swap(&mut q, &mut aq);
        orthonormalize(&mut q);
    }
    Err(Error::NoConvergence { iterations: opts.max_iterations, residuals })
}

/// Gap of a period operator. The all-vacuum state is an exact eigenvector
/// with eigenvalue 1 in a block of its own, so only the particle sector
/// is iterated.
pub fn top_two_eigs(op: &PeriodOperator) -> Result<GapResult> {
    top_two_eigs_with(op, &EigOptions::default())
}

struct Sector<'a>(&'a PeriodOperator);

impl LinearOperator for Sector<'_> {
    fn dim(&self) -> usize {
        self.0.dim() - 1
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut full = vec![0.0; self.0.dim()];
        full[1..].copy_from_slice(x);
        let mut out = vec![0.0; full.len()];
        self.0.apply(&full, &mut out);
        y.copy_from_slice(&out[1..]);
    }
}

pub fn top_two_eigs_with(op: &PeriodOperator, opts: &EigOptions) -> Result<GapResult> {
    let (top, _, iterations) = top_two_eigs_of(&Sector(op), opts)?;
    let (lambda0, lambda1) = if top > 1.0 { (top, 1.0) } else { (1.0, top) };
    Ok(GapResult {
        l: op.l,
        config: Some(op.config),
        lambda0,
        lambda1,
        delta: gap_from(lambda0, lambda1),
        iterations,
    })
}

pub fn gap_from(lambda0: f64, lambda1: f64) -> f64 {
    (lambda0 / lambda1).ln().max(0.0) / 2.0
}

/// χ ≈ m·C·e^{−Δd}; only the exponent follows from the spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayModel {
    pub delta: f64,
    pub prefactor: f64,
}

/// Exact χ of the strip after `depth` layers.
pub fn exact_xeb(op: &PeriodOperator, depth: usize) -> f64 {
    evaluate(&op.propagate(depth), Observable::Xeb)
}

/// Prefactor from the geometric mean of χ(d)e^{Δd} at two anchor depths.
pub fn fit_decay(op: &PeriodOperator, gap: &GapResult, anchors: (usize, usize)) -> DecayModel {
    let c = |d: usize| exact_xeb(op, d) * (gap.delta * d as f64).exp();
    DecayModel { delta: gap.delta, prefactor: (c(anchors.0) * c(anchors.1)).sqrt() }
}

pub fn predict_xeb_decay(model: &DecayModel, d: usize, multiplicity: usize) -> f64 {
    multiplicity as f64 * model.prefactor * (-model.delta * d as f64).exp()
}

/// Δ1(l) for strips with one omitted boundary.
pub fn delta1_sweep(params: &DRParams, widths: &[usize]) -> Result<Vec<GapResult>> {
    widths
        .par_iter()
        .map(|&l| top_two_eigs(&build_period_operator(l, params, FieldConfig::BoundaryOmission { side: Side::Right })?))
        .collect()
}

/// Δ_{N,ε} on the (N, ε) grid, row-major in N.
pub fn bulk_noise_grid(params: &DRParams, sizes: &[usize], epss: &[f64], c: f64) -> Result<Vec<GapResult>> {
    let points: Vec<(usize, f64)> = sizes.iter().flat_map(|&n| epss.iter().map(move |&e| (n, e))).collect();
    points
        .par_iter()
        .map(|&(n, eps)| top_two_eigs(&build_period_operator(n, params, FieldConfig::BulkNoise { eps, c })?))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    pub value: f64,
    pub size: usize,
    pub saturated: bool,
}

/// Δ at the largest size once successive differences drop below `tol`.
/// `results` must be sorted by size.
pub fn saturation(results: &[GapResult], tol: f64) -> Option<Saturation> {
    let last = results.last()?;
    let saturated = results.len() >= 2 && (last.delta - results[results.len() - 2].delta).abs() < tol;
    Some(Saturation { value: last.delta, size: last.l, saturated })
}

/// Least-squares polynomial of degree ≤ 3 evaluated at zero.
pub fn extrapolate_to_zero(xs: &[f64], ys: &[f64], degree: usize) -> Result<f64> {
    if degree > 3 || xs.len() != ys.len() || xs.len() <= degree {
        return Err(Error::Invalid(format!("cannot fit degree {degree} to {} points", xs.len())));
    }
    let a = DMatrix::from_fn(xs.len(), degree + 1, |i, j| xs[i].powi(j as i32));
    let b = DVector::from_column_slice(ys);
    let coef = a.svd(true, true).solve(&b, 1e-14).map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(coef[0])
}

/// Slope and R² of the ordinary least-squares line.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx, if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{Architecture, Boundary};
    use crate::drmodel::{attach_defects, propagate_factorized};
    use crate::spoofer::Partition;

    fn haar() -> DRParams {
        DRParams::haar()
    }

    #[test]
    fn ideal_conserves_weight() {
        let op = build_period_operator(4, &haar(), FieldConfig::Ideal).unwrap();
        let m = op.to_dense().unwrap();
        for j in 0..16 {
            assert!((m.column(j).sum() - 1.0).abs() < 1e-10);
        }
        assert!(m.iter().all(|&x| x >= -1e-12));
    }

    #[test]
    fn ideal_degenerate_top() {
        let g = top_two_eigs(&build_period_operator(6, &haar(), FieldConfig::Ideal).unwrap()).unwrap();
        assert!((g.lambda0 - 1.0).abs() < 1e-9 && (g.lambda1 - 1.0).abs() < 1e-9);
        assert!(g.delta < 1e-8);
    }

    #[test]
    fn noise_opens_gap() {
        let g = top_two_eigs(&build_period_operator(6, &haar(), FieldConfig::BulkNoise { eps: 0.01, c: 4.0 / 3.0 }).unwrap()).unwrap();
        assert!(g.lambda0 > g.lambda1 && g.delta > 0.0);
    }

    #[test]
    fn diagonal_operator() {
        let d: Vec<f64> = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0].iter().map(|x: &f64| (-x).exp()).collect();
        let m = DMatrix::from_diagonal(&DVector::from_vec(d));
        let (l0, l1, _) = top_two_eigs_of(&m, &EigOptions { block: 4, ..Default::default() }).unwrap();
        assert!((gap_from(l0, l1) - 0.25).abs() < 1e-12);
    }

    fn dense_top_two(m: &DMatrix<f64>) -> (f64, f64) {
        let mut ev: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        (ev[0], ev[1])
    }

    #[test]
    fn dense_oracle_l8() {
        for config in [
            FieldConfig::BulkNoise { eps: 0.02, c: 4.0 / 3.0 },
            FieldConfig::BoundaryOmission { side: Side::Right },
            FieldConfig::BoundaryOmission { side: Side::Both },
        ] {
            let op = build_period_operator(8, &haar(), config).unwrap();
            let g = top_two_eigs(&op).unwrap();
            let (l0, l1) = dense_top_two(&op.to_dense().unwrap());
            assert!((g.lambda0 - l0).abs() < 1e-8, "{config:?}");
            assert!((g.lambda1 - l1).abs() < 1e-8, "{config:?}");
        }
    }

    #[test]
    fn spin_basis_similarity() {
        for l in [3, 4, 6] {
            let op = build_period_operator(l, &DRParams::cz(), FieldConfig::BulkNoise { eps: 0.03, c: 4.0 / 3.0 }).unwrap();
            let m = op.to_dense().unwrap();
            let b1 = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
            let b = (1..l).fold(b1.clone(), |acc, _| b1.kronecker(&acc));
            let spin = b.clone().try_inverse().unwrap() * &m * &b;
            let (a0, a1) = dense_top_two(&m);
            let (s0, s1) = dense_top_two(&spin);
            assert!((a0 - s0).abs() < 1e-10 && (a1 - s1).abs() < 1e-10);
        }
    }

    #[test]
    fn decay_matches_factorized_propagation() {
        let l = 10;
        let op = build_period_operator(l, &haar(), FieldConfig::BoundaryOmission { side: Side::Right }).unwrap();
        let g = top_two_eigs(&op).unwrap();
        let (d0, d1) = (20, 40);
        let xeb_at = |d: usize| {
            let a = Architecture::brickwork_1d(2 * l, d, Boundary::Open).unwrap();
            let part = Partition::mid_cut(&a).unwrap();
            let def = attach_defects(&a, None, Some(&part));
            let p = propagate_factorized(&a, &haar(), &def, &part.subsystems).unwrap();
            p.subsystem_values()[0].0 - 1.0
        };
        let slope = (xeb_at(d1).ln() - xeb_at(d0).ln()) / (d1 - d0) as f64;
        assert!((-slope - g.delta).abs() < 0.05 * g.delta, "{slope} vs {}", g.delta);
        let model = fit_decay(&op, &g, (d0, d1));
        let one = predict_xeb_decay(&model, 30, 1);
        assert!((predict_xeb_decay(&model, 30, 2) - 2.0 * one).abs() < 1e-15);
        assert!((one - exact_xeb(&op, 30)).abs() < 0.05 * one);
    }

    #[test]
    fn extrapolation_recovers_polynomial() {
        let xs = [0.01, 0.02, 0.03, 0.05, 0.08];
        let ys: Vec<f64> = xs.iter().map(|x| 0.3 - 2.0 * x + 5.0 * x * x).collect();
        assert!((extrapolate_to_zero(&xs, &ys, 2).unwrap() - 0.3).abs() < 1e-10);
        let (s, b, r2) = linear_fit(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]);
        assert!((s - 2.0).abs() < 1e-12 && b.abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn caps() {
        assert!(build_period_operator(17, &haar(), FieldConfig::Ideal).is_err());
        assert!(build_period_operator(11, &haar(), FieldConfig::Ideal).unwrap().to_dense().is_err());
    }
}
