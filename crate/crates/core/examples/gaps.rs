//! Spectral gaps of the one-dimensional period operator: a strip with an
//! omitted boundary, and bulk noise extrapolated to zero noise.

use xeblab::drmodel::DRParams;
use xeblab::ising1d::{bulk_noise_grid, delta1_sweep, extrapolate_to_zero, saturation};

fn main() -> xeblab::Result<()> {
    let haar = DRParams::haar();
    for g in delta1_sweep(&haar, &[4, 6, 8, 10, 12])? {
        println!("l={:<2} lambda1 {:.6}  delta1 {:.4}", g.l, g.lambda1, g.delta);
    }
    let epss = [0.06, 0.08, 0.1, 0.12];
    let mut sat = Vec::new();
    for &eps in &epss {
        let grid = bulk_noise_grid(&haar, &[8, 10, 12], &[eps], 4.0 / 3.0)?;
        let s = saturation(&grid, 1e-3).expect("non-empty grid");
        println!("eps={eps:<5} delta {:.4} at N={} (saturated: {})", s.value, s.size, s.saturated);
        sat.push(s.value);
    }
    println!("zero-noise limit (quadratic fit) {:.3}", extrapolate_to_zero(&epss, &sat, 2)?);
    Ok(())
}
