use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

use super::DivergenceKind;

/// Which regularizer augments the base guidance score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceKind {
    /// Base term `log p_{τ1,τ2}(y|x)` only.
    None,
    Entropy,
    Rkl,
    Fkl,
    Js,
    Hellinger,
}

impl GuidanceKind {
    pub const ALL: [GuidanceKind; 6] = [
        GuidanceKind::None,
        GuidanceKind::Entropy,
        GuidanceKind::Rkl,
        GuidanceKind::Fkl,
        GuidanceKind::Js,
        GuidanceKind::Hellinger,
    ];

    pub fn divergence(self) -> Option<DivergenceKind> {
        match self {
            GuidanceKind::Rkl => Some(DivergenceKind::Rkl),
            GuidanceKind::Fkl => Some(DivergenceKind::Fkl),
            GuidanceKind::Js => Some(DivergenceKind::Js),
            GuidanceKind::Hellinger => Some(DivergenceKind::Hellinger),
            GuidanceKind::None | GuidanceKind::Entropy => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GuidanceKind::None => "none",
            GuidanceKind::Entropy => "entropy",
            GuidanceKind::Rkl => "rkl",
            GuidanceKind::Fkl => "fkl",
            GuidanceKind::Js => "js",
            GuidanceKind::Hellinger => "hellinger",
        }
    }
}

impl std::fmt::Display for GuidanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A per-step scalar schedule over the reverse trajectory.
///
/// `Linear` runs from `start` at the first reverse step (t = T) to `end` at
/// the last one (t = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Schedule {
    Constant { value: f64 },
    Linear { start: f64, end: f64 },
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule::Constant { value }
    }

    /// Value at step `t ∈ [1, steps]`.
    pub fn at(&self, t: usize, steps: usize) -> f64 {
        match *self {
            Schedule::Constant { value } => value,
            Schedule::Linear { start, end } => {
                if steps <= 1 {
                    start
                } else {
                    let frac = (t.saturating_sub(1)) as f64 / (steps - 1) as f64;
                    end + (start - end) * frac
                }
            }
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = match *self {
            Schedule::Constant { value } => value >= 0.0 && value.is_finite(),
            Schedule::Linear { start, end } => start >= 0.0 && end >= 0.0 && start.is_finite() && end.is_finite(),
        };
        if !ok {
            return input(format!("{what} schedule must be finite and non-negative"));
        }
        Ok(())
    }
}

/// How the gradient taken at `x̂₀` is mapped back to `x_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainRule {
    /// Use `∇_{x̂₀} S` as the guidance direction directly.
    Identity,
    /// Multiply by `1/√ᾱ_t`, the scalar part of `∂x̂₀/∂x_t`.
    InvSqrtAlphaBar,
}

/// How the guidance direction shifts the reverse-step mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanShift {
    /// `μ + γ_t Σ_t g` with `Σ_t = β̃_t I`.
    Variance,
    /// `μ + γ_t g`.
    Direct,
}

/// Full description of a guided sampling run's guidance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceSpec {
    pub kind: GuidanceKind,
    pub tau1: f64,
    pub tau2: f64,
    /// Divergence weight `α`.
    pub alpha: f64,
    /// Target bias `ε` of the smoothed target distribution.
    pub epsilon: f64,
    /// Batch tilt `t`; `None` disables tilted weighting.
    pub tilt: Option<f64>,
    /// Entropy weight `λ_t`.
    pub lambda: Schedule,
    /// Guidance scale `γ_t`.
    pub gamma: Schedule,
    pub chain_rule: ChainRule,
    pub mean_shift: MeanShift,
}

/// Divergence weight with the best ablation FID.
pub const DEFAULT_ALPHA: f64 = 0.1;
/// Alternative divergence weight preset for JS guidance.
pub const JS_ALPHA: f64 = 0.09;
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_LAMBDA_START: f64 = 0.2;
pub const DEFAULT_LAMBDA_END: f64 = 0.05;

impl Default for GuidanceSpec {
    fn default() -> Self {
        Self {
            kind: GuidanceKind::None,
            tau1: 1.0,
            tau2: 1.0,
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
            tilt: None,
            lambda: Schedule::Linear {
                start: DEFAULT_LAMBDA_START,
                end: DEFAULT_LAMBDA_END,
            },
            gamma: Schedule::constant(1.0),
            chain_rule: ChainRule::Identity,
            mean_shift: MeanShift::Variance,
        }
    }
}

impl GuidanceSpec {
    pub fn with_kind(kind: GuidanceKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau1 > 0.0) || !(self.tau2 > 0.0) || !self.tau1.is_finite() || !self.tau2.is_finite() {
            return input("tau1 and tau2 must be positive and finite");
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return input("alpha must be non-negative and finite");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return input("epsilon must lie in [0, 1]");
        }
        if let Some(t) = self.tilt {
            if !t.is_finite() {
                return input("tilt must be finite");
            }
        }
        self.lambda.validate("lambda")?;
        self.gamma.validate("gamma")
    }
}
