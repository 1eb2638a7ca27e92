//! Linear cross-entropy benchmark and ensemble statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::simulator::BitstringDistribution;

/// χ = 2^N Σ_x p(x) q(x) − 1.
pub fn xeb_exact(p: &BitstringDistribution, q: &BitstringDistribution) -> Result<f64> {
    if p.n_qubits != q.n_qubits {
        return Err(Error::SizeMismatch(p.n_qubits, q.n_qubits));
    }
    if !p.normalized || !q.normalized {
        return Err(Error::Unnormalized);
    }
    let prods: Vec<f64> = p.probs.iter().zip(&q.probs).map(|(a, b)| a * b).collect();
    Ok(pairwise_sum(&prods) * (p.n_qubits as f64).exp2() - 1.0)
}

/// Unbiased sample estimator (2^N/m) Σ_i p(x_i) − 1.
pub fn xeb_empirical(p: &BitstringDistribution, samples: &[usize]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Invalid("at least one sample is required".into()));
    }
    let vals: Vec<f64> = samples.iter().map(|&x| p.probs[x]).collect();
    Ok(pairwise_sum(&vals) * (p.n_qubits as f64).exp2() / samples.len() as f64 - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStat {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); zero for one instance.
    pub std: f64,
    pub standard_error: f64,
    pub n_instances: usize,
}

impl EnsembleStat {
    /// Is `value` within `k` standard errors of the mean?
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.standard_error
    }
}

pub fn ensemble_average(values: &[f64]) -> Result<EnsembleStat> {
    let n = values.len();
    if n == 0 {
        return Err(Error::Invalid("ensemble is empty".into()));
    }
    let mean = pairwise_sum(values) / n as f64;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let std = if n > 1 { (pairwise_sum(&dev) / (n - 1) as f64).sqrt() } else { 0.0 };
    Ok(EnsembleStat { mean, std, standard_error: std / (n as f64).sqrt(), n_instances: n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_q_gives_zero() {
        let p = BitstringDistribution::new(2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(xeb_exact(&p, &BitstringDistribution::uniform(2)).unwrap().abs() < 1e-15);
    }

    #[test]
    fn point_masses() {
        let p = BitstringDistribution::point_mass(1, 0);
        assert_eq!(xeb_exact(&p, &p).unwrap(), 1.0);
        let p = BitstringDistribution::new(3, vec![0.05, 0.3, 0.05, 0.1, 0.1, 0.2, 0.1, 0.1]).unwrap();
        assert!((xeb_empirical(&p, &[1]).unwrap() - (8.0 * 0.3 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_mismatch_and_unnormalized() {
        let p = BitstringDistribution::uniform(2);
        assert!(xeb_exact(&p, &BitstringDistribution::uniform(3)).is_err());
        let q = BitstringDistribution::unnormalized(2, vec![0.5; 4]);
        assert!(matches!(xeb_exact(&p, &q), Err(Error::Unnormalized)));
    }

    #[test]
    fn ensemble_examples() {
        let s = ensemble_average(&[2.5, 2.5, 2.5]).unwrap();
        assert_eq!((s.mean, s.std), (2.5, 0.0));
        let s = ensemble_average(&[0.0, 2.0]).unwrap();
        assert_eq!(s.mean, 1.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        assert!((s.standard_error - 1.0).abs() < 1e-15);
        assert!(ensemble_average(&[]).is_err());
    }
}
