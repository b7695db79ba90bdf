//! f-divergence regularized guidance.
//!
//! With `D_f(q‖p) = Σ_i q_i f(p_i/q_i)` the gradient of
//! `log p_{τ1,τ2}(y|x) − α D_f(q_y ‖ p(·|x))` is the base term minus
//! `α Σ_i w_f(q_i, p_i) g_i(x)` with `w_f(q, p) = p f′(p/q)`.

use serde::{Deserialize, Serialize};

use crate::classifier::LogitModel;
use crate::error::{check_dim, input, Result};

use super::{Evaluation, GuidanceGradient, GuidanceSpec, TargetDistribution};

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    /// `KL(q‖p)`, generator `−log t`.
    Rkl,
    /// `KL(p‖q)`, generator `t log t`.
    Fkl,
    /// Jensen–Shannon, `½KL(q‖m) + ½KL(p‖m)`.
    Js,
    /// Squared Hellinger `Σ(√p − √q)²`, generator `(√t − 1)²`.
    Hellinger,
}

/// Constant convention for the JS weight.
///
/// `DerivativeConsistent` is `½ p log(2p/(q+p))`, the derivative of the
/// mixture-form JS divergence. `AsPrinted` drops the ½ and is kept only so
/// the oracle suite can demonstrate that it disagrees with the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JsWeight {
    #[default]
    DerivativeConsistent,
    AsPrinted,
}

impl DivergenceKind {
    pub const ALL: [DivergenceKind; 4] = [
        DivergenceKind::Rkl,
        DivergenceKind::Fkl,
        DivergenceKind::Js,
        DivergenceKind::Hellinger,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DivergenceKind::Rkl => "rkl",
            DivergenceKind::Fkl => "fkl",
            DivergenceKind::Js => "js",
            DivergenceKind::Hellinger => "hellinger",
        }
    }

    /// Generator `f(t)`, normalized so that `f(1) = 0`.
    pub fn generator(self, t: f64) -> f64 {
        match self {
            DivergenceKind::Rkl => -t.ln(),
            DivergenceKind::Fkl => xlogy(t, t),
            DivergenceKind::Js => 0.5 * (xlogy(t, 2.0 * t / (1.0 + t)) + (2.0 / (1.0 + t)).ln()),
            DivergenceKind::Hellinger => (t.sqrt() - 1.0).powi(2),
        }
    }

    /// Generator derivative `f′(t)` on `(0, ∞)`.
    pub fn generator_derivative(self, t: f64) -> f64 {
        match self {
            DivergenceKind::Rkl => -1.0 / t,
            DivergenceKind::Fkl => t.ln() + 1.0,
            DivergenceKind::Js => 0.5 * (2.0 * t / (1.0 + t)).ln(),
            DivergenceKind::Hellinger => 1.0 - 1.0 / t.sqrt(),
        }
    }
}

/// `x log y` with the `0 log 0 = 0` convention.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Scalar weight multiplying `g_i` in the divergence gradient.
pub fn f_weight(kind: DivergenceKind, q: f64, p: f64) -> Result<f64> {
    f_weight_with(kind, q, p, JsWeight::DerivativeConsistent)
}

pub fn f_weight_with(kind: DivergenceKind, q: f64, p: f64, js: JsWeight) -> Result<f64> {
    if !(q > 0.0) {
        return input(format!("target probability must be positive, got {q}"));
    }
    if !(p >= 0.0) {
        return input(format!("class probability must be non-negative, got {p}"));
    }
    Ok(match kind {
        // non-vanishing at p → 0: the zero-avoiding behaviour
        DivergenceKind::Rkl => -q,
        DivergenceKind::Fkl => {
            if p == 0.0 {
                0.0
            } else {
                p * ((p / q).ln() + 1.0)
            }
        }
        DivergenceKind::Js => {
            let w = if p == 0.0 { 0.0 } else { p * (2.0 * p / (q + p)).ln() };
            match js {
                JsWeight::DerivativeConsistent => 0.5 * w,
                JsWeight::AsPrinted => w,
            }
        }
        DivergenceKind::Hellinger => p - (p * q).sqrt(),
    })
}

fn check_simplex(name: &str, v: &[f64], strictly_positive: bool) -> Result<()> {
    if v.is_empty() {
        return input(format!("{name} is empty"));
    }
    let bad = v
        .iter()
        .any(|x| !x.is_finite() || *x < 0.0 || (strictly_positive && *x == 0.0));
    let sum: f64 = v.iter().sum();
    if bad || (sum - 1.0).abs() > SIMPLEX_TOL {
        return input(format!("{name} is not a valid probability vector"));
    }
    Ok(())
}

/// `D_f(q‖p) = Σ_i q_i f(p_i/q_i)`.
pub fn divergence_value(kind: DivergenceKind, q: &[f64], p: &[f64]) -> Result<f64> {
    check_simplex("target distribution", q, true)?;
    check_simplex("class distribution", p, false)?;
    check_dim("class distribution", p.len(), q.len())?;
    let total: f64 = q.iter().zip(p).map(|(qi, pi)| qi * kind.generator(pi / qi)).sum();
    // rounding can push a zero divergence a hair below zero
    Ok(total.max(0.0))
}

pub(crate) fn divergence_from<W>(
    eval: &Evaluation,
    y: usize,
    tau1: f64,
    tau2: f64,
    alpha: f64,
    target: &TargetDistribution,
    weight: W,
) -> Result<GuidanceGradient>
where
    W: Fn(f64, f64) -> Result<f64>,
{
    if !(alpha >= 0.0) {
        return input(format!("divergence weight must be non-negative, got {alpha}"));
    }
    check_dim("target distribution", target.probs().len(), eval.probs.len())?;
    let base = eval.base(y, tau1, tau2)?;
    let weights = target
        .probs()
        .iter()
        .zip(&eval.probs)
        .map(|(&q, &p)| weight(q, p))
        .collect::<Result<Vec<f64>>>()?;
    let reg = eval.combine_centered(&weights);
    let value = base.value.iter().zip(&reg).map(|(b, r)| b - alpha * r).collect();
    Ok(GuidanceGradient {
        value,
        class_weights: weights,
        ..base
    })
}

/// Generic f-divergence guidance gradient with an arbitrary weight function
/// `w(q, p)`.
#[allow(clippy::too_many_arguments)]
pub fn f_divergence_guidance_grad<M, W>(
    model: &M,
    x: &[f64],
    y: usize,
    tau1: f64,
    tau2: f64,
    alpha: f64,
    target: &TargetDistribution,
    weight: W,
) -> Result<GuidanceGradient>
where
    M: LogitModel + ?Sized,
    W: Fn(f64, f64) -> Result<f64>,
{
    divergence_from(&Evaluation::at(model, x)?, y, tau1, tau2, alpha, target, weight)
}

fn spec_divergence(spec: &GuidanceSpec) -> Result<DivergenceKind> {
    spec.kind
        .divergence()
        .ok_or_else(|| crate::Error::Input(format!("guidance kind {} is not a divergence", spec.kind)))
}

/// Divergence-regularized guidance for `spec.kind ∈ {rkl, fkl, js, hellinger}`.
pub fn divergence_guidance_grad<M: LogitModel + ?Sized>(
    model: &M,
    x: &[f64],
    y: usize,
    spec: &GuidanceSpec,
    target: &TargetDistribution,
) -> Result<GuidanceGradient> {
    let kind = spec_divergence(spec)?;
    f_divergence_guidance_grad(model, x, y, spec.tau1, spec.tau2, spec.alpha, target, |q, p| {
        f_weight(kind, q, p)
    })
}

/// The closed forms specialized to each divergence, written out term by term:
/// RKL `+α Σ q_i g_i`, FKL `−α Σ p_i(log(p_i/q_i) + 1) g_i`,
/// JS `−α Σ ½ p_i log(2p_i/(q_i+p_i)) g_i`, Hellinger `+α Σ √(q_i p_i) g_i`.
pub fn corollary_guidance_grad<M: LogitModel + ?Sized>(
    model: &M,
    x: &[f64],
    y: usize,
    spec: &GuidanceSpec,
    target: &TargetDistribution,
) -> Result<GuidanceGradient> {
    let kind = spec_divergence(spec)?;
    let eval = Evaluation::at(model, x)?;
    check_dim("target distribution", target.probs().len(), eval.probs.len())?;
    let base = eval.base(y, spec.tau1, spec.tau2)?;
    let pairs = target.probs().iter().zip(&eval.probs);
    // coefficients of g_i in the score gradient, sign included
    let coeffs: Vec<f64> = match kind {
        DivergenceKind::Rkl => pairs.map(|(q, _)| spec.alpha * q).collect(),
        DivergenceKind::Fkl => pairs
            .map(|(q, p)| if *p == 0.0 { 0.0 } else { -spec.alpha * p * ((p / q).ln() + 1.0) })
            .collect(),
        DivergenceKind::Js => pairs
            .map(|(q, p)| if *p == 0.0 { 0.0 } else { -spec.alpha * 0.5 * p * (2.0 * p / (q + p)).ln() })
            .collect(),
        DivergenceKind::Hellinger => pairs.map(|(q, p)| spec.alpha * (q * p).sqrt()).collect(),
    };
    let reg = eval.combine_centered(&coeffs);
    let value = base.value.iter().zip(&reg).map(|(b, r)| b + r).collect();
    Ok(GuidanceGradient {
        value,
        class_weights: coeffs,
        ..base
    })
}
