//! Tilted batch weighting of per-chain guidance.

use crate::error::{check_dim, input, Result};
use crate::prob::logsumexp;

use super::GuidanceGradient;

/// `w_i = exp(t·ℓ_i) / Σ_j exp(t·ℓ_j)` over a batch of log-probabilities.
pub fn tilted_weights(log_probs: &[f64], t: f64) -> Result<Vec<f64>> {
    if log_probs.is_empty() {
        return input("tilted weights need at least one sample");
    }
    if log_probs.iter().any(|l| !l.is_finite()) || !t.is_finite() {
        return input("tilted weights need finite log-probabilities and tilt");
    }
    let scaled: Vec<f64> = log_probs.iter().map(|l| t * l).collect();
    let lse = logsumexp(&scaled);
    Ok(scaled.iter().map(|s| (s - lse).exp()).collect())
}

/// `n · w_i`, so that `t = 0` gives every chain weight one.
pub fn mean_one_tilted_weights(log_probs: &[f64], t: f64) -> Result<Vec<f64>> {
    let n = log_probs.len() as f64;
    Ok(tilted_weights(log_probs, t)?.into_iter().map(|w| n * w).collect())
}

/// Scales each chain's gradient by its mean-one tilted weight.
///
/// `t = 0` and single-chain batches return the input unchanged.
pub fn tilted_guidance(grads: &[GuidanceGradient], log_probs: &[f64], t: f64) -> Result<Vec<GuidanceGradient>> {
    check_dim("tilted log-probabilities", log_probs.len(), grads.len())?;
    if t == 0.0 || grads.len() <= 1 {
        if !t.is_finite() {
            return input("tilt must be finite");
        }
        return Ok(grads.to_vec());
    }
    let weights = mean_one_tilted_weights(log_probs, t)?;
    Ok(grads.iter().zip(&weights).map(|(g, w)| g.scaled(*w)).collect())
}
