//! Small dense complex matrices, Haar sampling and seed streams.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Mat2 = [[C64; 2]; 2];
pub type Mat4 = [[C64; 4]; 4];

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn id2() -> Mat2 {
    [[ONE, ZERO], [ZERO, ONE]]
}

pub fn id4() -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = ONE;
    }
    m
}

pub fn pauli(mu: usize) -> Mat2 {
    match mu {
        0 => id2(),
        1 => [[ZERO, ONE], [ONE, ZERO]],
        2 => [[ZERO, -I], [I, ZERO]],
        3 => [[ONE, ZERO], [ZERO, -ONE]],
        _ => panic!("pauli index {mu} out of range"),
    }
}

pub fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut m = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    m
}

pub fn mul4(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

pub fn dagger2(a: &Mat2) -> Mat2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

pub fn dagger4(a: &Mat4) -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = a[j][i].conj();
        }
    }
    m
}

/// Kronecker product with `a` on the more significant (first) qubit.
pub fn kron2(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = a[i >> 1][j >> 1] * b[i & 1][j & 1];
        }
    }
    m
}

pub fn unitarity_error2(u: &Mat2) -> f64 {
    let p = mul2(&dagger2(u), u);
    let mut e: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let t = if i == j { ONE } else { ZERO };
            e = e.max((p[i][j] - t).norm());
        }
    }
    e
}

pub fn unitarity_error4(u: &Mat4) -> f64 {
    let p = mul4(&dagger4(u), u);
    let mut e: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let t = if i == j { ONE } else { ZERO };
            e = e.max((p[i][j] - t).norm());
        }
    }
    e
}

pub fn swap4() -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    m[0][0] = ONE;
    m[1][2] = ONE;
    m[2][1] = ONE;
    m[3][3] = ONE;
    m
}

pub fn cz4() -> Mat4 {
    let mut m = id4();
    m[3][3] = -ONE;
    m
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    C64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar unitary via Gram-Schmidt QR of a complex Gaussian matrix.
/// Gram-Schmidt yields R with a positive real diagonal, which is the phase fix.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Vec<C64>> {
    let mut cols: Vec<Vec<C64>> = (0..n).map(|_| (0..n).map(|_| gaussian(rng)).collect()).collect();
    for j in 0..n {
        for k in 0..j {
            let (head, tail) = cols.split_at_mut(j);
            let qk = &head[k];
            let v = &mut tail[0];
            let proj: C64 = qk.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
            for (vi, qi) in v.iter_mut().zip(qk) {
                *vi -= proj * qi;
            }
        }
        let norm = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in cols[j].iter_mut() {
            *z /= norm;
        }
    }
    // cols[j] is column j; return row-major
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

pub fn haar2<R: Rng + ?Sized>(rng: &mut R) -> Mat2 {
    let u = haar_unitary(2, rng);
    [[u[0][0], u[0][1]], [u[1][0], u[1][1]]]
}

pub fn haar4<R: Rng + ?Sized>(rng: &mut R) -> Mat4 {
    let u = haar_unitary(4, rng);
    let mut m = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = u[i][j];
        }
    }
    m
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed determined by `seed` and `path` alone.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut h = splitmix(seed);
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

/// Counter-based stream: the generator depends only on `seed` and `path`.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

/// Pairwise summation, reproducible independent of scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_samples_are_unitary() {
        let mut rng = stream(7, &[1]);
        for _ in 0..100 {
            assert!(unitarity_error2(&haar2(&mut rng)) < 1e-12);
            assert!(unitarity_error4(&haar4(&mut rng)) < 1e-12);
        }
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a: u64 = stream(3, &[1, 2]).random();
        let b: u64 = stream(3, &[1, 2]).random();
        let c: u64 = stream(3, &[2, 1]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn kron_orders_first_factor_high() {
        let x = pauli(1);
        let k = kron2(&x, &id2());
        assert_eq!(k[2][0], ONE);
        assert_eq!(k[1][0], ZERO);
    }

    #[test]
    fn pairwise_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
    }
}
