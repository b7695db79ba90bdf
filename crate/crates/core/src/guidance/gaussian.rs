//! Closed form of RKL guidance when the logits are mixture log-densities
//! `ℓ_k(x) = log b_k + log f_k(x)`.
//!
//! Under that reading `softmax(ℓ)` is the component posterior `w_k(x)` and
//! the gradient is `Σ_k Σ_k⁻¹(μ_k − x) Γ_k` with
//! `Γ_k = τ1·1[k=y] − τ2·p_τ2(k|x) + α(q_y(k) − w_k(x))`.

use crate::error::{check_dim, input, Result};
use crate::mixture::GaussianMixture;
use crate::prob::{softmax, tempered_softmax};

use super::TargetDistribution;

/// Per-component weights `Γ_k(x, y, α, ε)`.
pub fn gamma_weights(
    gmm: &GaussianMixture,
    x: &[f64],
    y: usize,
    tau1: f64,
    tau2: f64,
    alpha: f64,
    target: &TargetDistribution,
) -> Result<Vec<f64>> {
    if !(tau1 > 0.0) || !(tau2 > 0.0) {
        return input("temperatures must be positive");
    }
    let k = gmm.num_components();
    check_dim("target distribution", target.probs().len(), k)?;
    if y >= k {
        return input(format!("class {y} out of range for {k} components"));
    }
    let logits = gmm.joint_log_densities(x)?;
    let tempered = tempered_softmax(&logits, tau2);
    let posterior = softmax(&logits);
    Ok((0..k)
        .map(|i| {
            let indicator = if i == y { 1.0 } else { 0.0 };
            tau1 * indicator - tau2 * tempered[i] + alpha * (target.probs()[i] - posterior[i])
        })
        .collect())
}

fn assemble(gmm: &GaussianMixture, x: &[f64], gamma: &[f64], density_factor: bool) -> Result<Vec<f64>> {
    let scores = gmm.component_scores(x)?;
    let mut out = vec![0.0; gmm.dim()];
    for (k, (s, g)) in scores.iter().zip(gamma).enumerate() {
        let factor = if density_factor {
            gmm.component_log_density(k, x)?.exp()
        } else {
            1.0
        };
        for (o, si) in out.iter_mut().zip(s) {
            *o += factor * g * si;
        }
    }
    Ok(out)
}

/// `Σ_k Σ_k⁻¹(μ_k − x) Γ_k`, equal to the RKL guidance gradient of the
/// analytic classifier.
pub fn gaussian_rkl_grad(
    gmm: &GaussianMixture,
    x: &[f64],
    y: usize,
    tau1: f64,
    tau2: f64,
    alpha: f64,
    target: &TargetDistribution,
) -> Result<Vec<f64>> {
    let gamma = gamma_weights(gmm, x, y, tau1, tau2, alpha, target)?;
    assemble(gmm, x, &gamma, false)
}

/// The same sum with an extra density factor `f_k(x)` on every component.
/// Diagnostic only; it does not match the RKL gradient in general.
pub fn gaussian_rkl_grad_verbatim(
    gmm: &GaussianMixture,
    x: &[f64],
    y: usize,
    tau1: f64,
    tau2: f64,
    alpha: f64,
    target: &TargetDistribution,
) -> Result<Vec<f64>> {
    let gamma = gamma_weights(gmm, x, y, tau1, tau2, alpha, target)?;
    assemble(gmm, x, &gamma, true)
}
