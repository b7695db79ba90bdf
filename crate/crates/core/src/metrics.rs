//! Sample-quality metrics: Gaussian Fréchet distance, mode-based
//! precision/recall proxies and per-step trajectory aggregates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::diffusion::SampleBatch;
use crate::error::{check_dim, input, Result};
use crate::mixture::GaussianMixture;

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-8;

/// Mean and covariance of a point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSummary {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl GaussianSummary {
    pub fn new(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return input("summary needs a positive dimension");
        }
        check_dim("covariance rows", covariance.len(), d)?;
        for row in &covariance {
            check_dim("covariance row", row.len(), d)?;
        }
        for i in 0..d {
            for j in 0..i {
                if (covariance[i][j] - covariance[j][i]).abs() > SYMMETRY_TOL {
                    return input(format!("covariance is not symmetric at ({i}, {j})"));
                }
            }
        }
        let summary = Self { mean, covariance };
        let min_eig = SymmetricEigen::new(summary.cov_matrix())
            .eigenvalues
            .min();
        if min_eig < -PSD_TOL {
            return input(format!("covariance is not positive semidefinite (eigenvalue {min_eig})"));
        }
        Ok(summary)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[Vec<f64>] {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.covariance[i][j])
    }
}

/// Sample mean and unbiased covariance, symmetrized.
pub fn summarize(samples: &[Vec<f64>]) -> Result<GaussianSummary> {
    if samples.len() < 2 {
        return input(format!("need at least 2 samples to summarize, got {}", samples.len()));
    }
    let d = samples[0].len();
    let mut mean = DVector::zeros(d);
    for s in samples {
        check_dim("sample", s.len(), d)?;
        mean += DVector::from_column_slice(s);
    }
    mean /= samples.len() as f64;
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let c = DVector::from_column_slice(s) - &mean;
        cov += &c * c.transpose();
    }
    cov /= (samples.len() - 1) as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    GaussianSummary::new(
        mean.iter().copied().collect(),
        (0..d).map(|i| cov.row(i).iter().copied().collect()).collect(),
    )
}

/// `tr((A^{1/2} B A^{1/2})^{1/2})` via the spectral decomposition.
fn trace_sqrt_product_spectral(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(a.clone());
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let m = &root * b * &root;
    let m = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(m).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum()
}

/// For 2×2 PSD `M`, `tr √M = √(tr M + 2√det M)`, with `tr M = tr(AB)` and
/// `det M = det A · det B`.
fn trace_sqrt_product_2x2(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let tr = (a * b).trace();
    let det = (a.determinant() * b.determinant()).max(0.0);
    (tr + 2.0 * det.sqrt()).max(0.0).sqrt()
}

fn frechet_with(a: &GaussianSummary, b: &GaussianSummary, spectral_only: bool) -> Result<f64> {
    check_dim("summary", b.dim(), a.dim())?;
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let (sa, sb) = (a.cov_matrix(), b.cov_matrix());
    let cross = match a.dim() {
        1 => (sa[(0, 0)] * sb[(0, 0)]).max(0.0).sqrt(),
        2 if !spectral_only => trace_sqrt_product_2x2(&sa, &sb),
        _ => trace_sqrt_product_spectral(&sa, &sb),
    };
    Ok((mean_term + sa.trace() + sb.trace() - 2.0 * cross).max(0.0))
}

/// `‖μ_a − μ_b‖² + tr(Σ_a + Σ_b − 2(Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2})`.
pub fn frechet_gaussian(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    frechet_with(a, b, false)
}

/// Same quantity, always through the eigendecomposition path.
pub fn frechet_gaussian_spectral(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    frechet_with(a, b, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PRReport {
    pub precision: f64,
    pub recall: f64,
    /// Samples within the radius whose nearest component is `k`.
    pub hits: Vec<usize>,
}

/// Default Mahalanobis radius for [`mode_precision_recall`].
pub const DEFAULT_RADIUS_SIGMAS: f64 = 3.0;

/// Precision: fraction of samples within `radius_sigmas` Mahalanobis units of
/// their nearest component. Recall: fraction of components that are nearest
/// and within the radius for at least `max(1, n·b_k/10)` samples.
pub fn mode_precision_recall(samples: &[Vec<f64>], gmm: &GaussianMixture, radius_sigmas: f64) -> Result<PRReport> {
    if !(radius_sigmas > 0.0) {
        return input(format!("radius must be positive, got {radius_sigmas}"));
    }
    if samples.is_empty() {
        return input("precision/recall needs at least one sample");
    }
    let k = gmm.num_components();
    let r2 = radius_sigmas * radius_sigmas;
    let mut hits = vec![0usize; k];
    for s in samples {
        let mut best = (f64::INFINITY, 0);
        for c in 0..k {
            let m = gmm.mahalanobis_sq(c, s)?;
            if m < best.0 {
                best = (m, c);
            }
        }
        if best.0 <= r2 {
            hits[best.1] += 1;
        }
    }
    let n = samples.len() as f64;
    let covered = hits
        .iter()
        .zip(gmm.weights())
        .filter(|(&h, &b)| h as f64 >= (n * b / 10.0).max(1.0))
        .count();
    Ok(PRReport {
        precision: hits.iter().sum::<usize>() as f64 / n,
        recall: covered as f64 / k as f64,
        hits,
    })
}

/// Aggregates over successful chains at one reverse step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    /// Diffusion step `t`, from `T` down to `1`.
    pub t: usize,
    pub mean_confidence: f64,
    pub mean_entropy: f64,
    /// Mean max-confidence of the most confident quarter of chains.
    pub top_quartile_confidence: f64,
    pub mean_grad_norm: f64,
}

pub fn trajectory_stats(batch: &SampleBatch) -> Result<Vec<StepStats>> {
    let chains: Vec<_> = batch.successful().collect();
    if chains.is_empty() {
        return input("trajectory statistics need at least one successful chain");
    }
    for c in &chains {
        check_dim("trajectory log", c.log.len(), batch.steps)?;
    }
    let n = chains.len() as f64;
    let top = chains.len().div_ceil(4);
    Ok((0..batch.steps)
        .map(|i| {
            let mut conf: Vec<f64> = chains.iter().map(|c| c.log[i].max_confidence).collect();
            let mean_confidence = conf.iter().sum::<f64>() / n;
            conf.sort_by(|a, b| b.total_cmp(a));
            StepStats {
                t: batch.steps - i,
                mean_confidence,
                mean_entropy: chains.iter().map(|c| c.log[i].entropy).sum::<f64>() / n,
                top_quartile_confidence: conf[..top].iter().sum::<f64>() / top as f64,
                mean_grad_norm: chains.iter().map(|c| c.log[i].grad_norm).sum::<f64>() / n,
            }
        })
        .collect())
}
