//! Guidance scores and their input gradients.
//!
//! All kernels work from the logits `f_i(x)` and logit gradients `∇f_i(x)` of
//! a [`LogitModel`], evaluated once per call. Class probabilities inside the
//! entropy and divergence terms use unit temperature; `tau1` and `tau2` only
//! enter the base term `τ1 f_y − log Σ exp(τ2 f_i)`.

mod divergence;
mod gaussian;
mod spec;
mod tilt;

pub use divergence::{
    corollary_guidance_grad, divergence_guidance_grad, divergence_value, f_divergence_guidance_grad, f_weight,
    f_weight_with, DivergenceKind, JsWeight,
};
pub use gaussian::{gamma_weights, gaussian_rkl_grad, gaussian_rkl_grad_verbatim};
pub use spec::{
    ChainRule, GuidanceKind, GuidanceSpec, MeanShift, Schedule, DEFAULT_ALPHA, DEFAULT_EPSILON, DEFAULT_LAMBDA_END,
    DEFAULT_LAMBDA_START, JS_ALPHA,
};
pub use tilt::{mean_one_tilted_weights, tilted_guidance, tilted_weights};

use serde::{Deserialize, Serialize};

use crate::classifier::LogitModel;
use crate::error::{check_dim, input, Result};
use crate::prob::{logsumexp, softmax, tempered_softmax};

/// `∇_x S` together with the per-class weights that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceGradient {
    pub value: Vec<f64>,
    /// Kind-specific per-class coefficients: `w_f` for divergences,
    /// `p(log p + 1)` for entropy, `τ1·1[i=y] − τ2·p_τ2(i)` for the base term.
    pub class_weights: Vec<f64>,
    /// `log p_{τ1,τ2}(y|x)` at the evaluation point.
    pub log_prob: f64,
    /// Unit-temperature class probabilities at the evaluation point.
    pub probs: Vec<f64>,
}

impl GuidanceGradient {
    pub fn norm(&self) -> f64 {
        crate::prob::norm(&self.value)
    }

    pub(crate) fn scaled(&self, factor: f64) -> Self {
        Self {
            value: self.value.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Smoothed target `q_y(i) = (1−ε)/K + ε·1[i=y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDistribution {
    q: Vec<f64>,
    epsilon: f64,
    target: usize,
}

impl TargetDistribution {
    pub fn new(classes: usize, target: usize, epsilon: f64) -> Result<Self> {
        if classes == 0 {
            return input("target distribution needs at least one class");
        }
        if target >= classes {
            return input(format!("target class {target} out of range for {classes} classes"));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return input(format!("epsilon must lie in [0, 1], got {epsilon}"));
        }
        let other = (1.0 - epsilon) / classes as f64;
        let mut q = vec![other; classes];
        // Target mass is the complement so that q sums to one exactly for K = 1.
        q[target] = 1.0 - other * (classes - 1) as f64;
        Ok(Self { q, epsilon, target })
    }

    pub fn probs(&self) -> &[f64] {
        &self.q
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn target(&self) -> usize {
        self.target
    }
}

fn check_temperatures(tau1: f64, tau2: f64) -> Result<()> {
    if !(tau1 > 0.0) || !(tau2 > 0.0) {
        return input(format!("temperatures must be positive, got tau1={tau1}, tau2={tau2}"));
    }
    Ok(())
}

fn check_class(y: usize, classes: usize) -> Result<()> {
    if y >= classes {
        return input(format!("class {y} out of range for {classes} classes"));
    }
    Ok(())
}

/// `τ1 f_y − log Σ_i exp(τ2 f_i)`.
pub fn log_prob_tau(logits: &[f64], y: usize, tau1: f64, tau2: f64) -> Result<f64> {
    check_temperatures(tau1, tau2)?;
    check_class(y, logits.len())?;
    let scaled: Vec<f64> = logits.iter().map(|f| tau2 * f).collect();
    Ok(tau1 * logits[y] - logsumexp(&scaled))
}

/// Logits, gradients and unit-temperature probabilities at one point.
pub(crate) struct Evaluation {
    pub logits: Vec<f64>,
    pub grads: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl Evaluation {
    pub fn at<M: LogitModel + ?Sized>(model: &M, x: &[f64]) -> Result<Self> {
        check_dim("guidance point", x.len(), model.input_dim())?;
        let (logits, grads) = model.logits_and_grads(x)?;
        let probs = softmax(&logits);
        Ok(Self { logits, grads, probs })
    }

    pub fn dim(&self) -> usize {
        self.grads.first().map_or(0, Vec::len)
    }

    /// `Σ_i c_i ∇f_i`.
    pub fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (c, g) in coeffs.iter().zip(&self.grads) {
            for (o, gi) in out.iter_mut().zip(g) {
                *o += c * gi;
            }
        }
        out
    }

    /// `Σ_i c_i g_i` with `g_i = ∇f_i − Σ_j p_j ∇f_j`.
    pub fn combine_centered(&self, coeffs: &[f64]) -> Vec<f64> {
        let total: f64 = coeffs.iter().sum();
        let mean_grad = self.combine(&self.probs);
        self.combine(coeffs)
            .into_iter()
            .zip(mean_grad)
            .map(|(a, m)| a - total * m)
            .collect()
    }

    pub fn base(&self, y: usize, tau1: f64, tau2: f64) -> Result<GuidanceGradient> {
        check_class(y, self.logits.len())?;
        let log_prob = log_prob_tau(&self.logits, y, tau1, tau2)?;
        let tempered = tempered_softmax(&self.logits, tau2);
        let class_weights: Vec<f64> = tempered
            .iter()
            .enumerate()
            .map(|(i, p)| if i == y { tau1 - tau2 * p } else { -tau2 * p })
            .collect();
        let value = self.combine(&class_weights);
        Ok(GuidanceGradient {
            value,
            class_weights,
            log_prob,
            probs: self.probs.clone(),
        })
    }
}

/// `τ1 ∇f_y − τ2 Σ_i p_τ2(i|x) ∇f_i`, the gradient of `log p_{τ1,τ2}(y|x)`.
pub fn base_guidance_grad<M: LogitModel + ?Sized>(
    model: &M,
    x: &[f64],
    y: usize,
    tau1: f64,
    tau2: f64,
) -> Result<GuidanceGradient> {
    Evaluation::at(model, x)?.base(y, tau1, tau2)
}

pub(crate) fn entropy_from(eval: &Evaluation, y: usize, tau1: f64, tau2: f64, lambda: f64) -> Result<GuidanceGradient> {
    if !(lambda >= 0.0) {
        return input(format!("entropy weight must be non-negative, got {lambda}"));
    }
    let base = eval.base(y, tau1, tau2)?;
    let weights: Vec<f64> = eval
        .probs
        .iter()
        .map(|&p| if p > 0.0 { p * (p.ln() + 1.0) } else { 0.0 })
        .collect();
    let reg = eval.combine_centered(&weights);
    let value = base.value.iter().zip(&reg).map(|(b, r)| b - lambda * r).collect();
    Ok(GuidanceGradient {
        value,
        class_weights: weights,
        ..base
    })
}

/// Gradient of `log p_{τ1,τ2}(y|x) + λ H(p(·|x))`.
pub fn entropy_guidance_grad<M: LogitModel + ?Sized>(
    model: &M,
    x: &[f64],
    y: usize,
    tau1: f64,
    tau2: f64,
    lambda: f64,
) -> Result<GuidanceGradient> {
    entropy_from(&Evaluation::at(model, x)?, y, tau1, tau2, lambda)
}

/// Dispatches on `spec.kind`; `lambda` is the current entropy weight.
pub fn guidance_grad<M: LogitModel + ?Sized>(
    model: &M,
    x: &[f64],
    y: usize,
    spec: &GuidanceSpec,
    lambda: f64,
) -> Result<GuidanceGradient> {
    let eval = Evaluation::at(model, x)?;
    match spec.kind {
        GuidanceKind::None => eval.base(y, spec.tau1, spec.tau2),
        GuidanceKind::Entropy => entropy_from(&eval, y, spec.tau1, spec.tau2, lambda),
        kind => {
            let div = kind.divergence().expect("divergence kinds handled above");
            let q = TargetDistribution::new(model.num_classes(), y, spec.epsilon)?;
            divergence::divergence_from(&eval, y, spec.tau1, spec.tau2, spec.alpha, &q, |q, p| {
                f_weight(div, q, p)
            })
        }
    }
}
