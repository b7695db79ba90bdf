//! Shared fixtures for the benchmarks.

use fguide_core::GaussianMixture;

/// `k` isotropic modes on a circle of radius `radius`.
pub fn ring(k: usize, radius: f64, variance: f64) -> GaussianMixture {
    let means = (0..k)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / k as f64;
            vec![radius * a.cos(), radius * a.sin()]
        })
        .collect();
    GaussianMixture::isotropic(vec![1.0 / k as f64; k], means, variance).expect("valid ring")
}
