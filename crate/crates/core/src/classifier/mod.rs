//! Logit models, calibration losses and ECE-regularized fine-tuning.

mod affine;
mod calibration;
mod finetune;

pub use affine::AffineClassifier;
pub use calibration::{binned_ece, smooth_ece_bins, smooth_ece_loss, BinContribution, CalibrationBatch};
pub use finetune::{finetune_ece, finetune_gradient, finetune_loss, FinetuneConfig, LabeledPoint};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mixture::GaussianMixture;

/// Default number of confidence bins for ECE reporting.
pub const DEFAULT_BINS: usize = 15;
/// Smoothing constant of the smooth ECE surrogate.
pub const DEFAULT_SMOOTHING: f64 = 1e-4;
/// Weight of the smooth ECE term relative to cross-entropy.
pub const DEFAULT_ECE_WEIGHT: f64 = 1.0;

/// Anything producing class logits `f_i(x)` and their input gradients.
pub trait LogitModel: Send + Sync {
    fn num_classes(&self) -> usize;

    fn input_dim(&self) -> usize;

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// `∇_x f_i(x)` for every class, one row per class.
    fn logit_grads(&self, x: &[f64]) -> Result<Vec<Vec<f64>>>;

    /// Logits and gradients together; backends may share work.
    fn logits_and_grads(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        Ok((self.logits(x)?, self.logit_grads(x)?))
    }
}

/// Bayes classifier over mixture components: `ℓ_k(x) = log b_k + log f_k(x)`.
#[derive(Debug, Clone)]
pub struct AnalyticClassifier {
    mixture: GaussianMixture,
}

impl AnalyticClassifier {
    pub fn new(mixture: GaussianMixture) -> Self {
        Self { mixture }
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.mixture
    }
}

impl LogitModel for AnalyticClassifier {
    fn num_classes(&self) -> usize {
        self.mixture.num_components()
    }

    fn input_dim(&self) -> usize {
        self.mixture.dim()
    }

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.mixture.joint_log_densities(x)
    }

    fn logit_grads(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.mixture.component_scores(x)
    }
}

/// The two logit backends.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum Classifier {
    Analytic { mixture: GaussianMixture },
    Affine(AffineClassifier),
}

impl Classifier {
    pub fn analytic(mixture: GaussianMixture) -> Self {
        Classifier::Analytic { mixture }
    }
}

impl LogitModel for Classifier {
    fn num_classes(&self) -> usize {
        match self {
            Classifier::Analytic { mixture } => mixture.num_components(),
            Classifier::Affine(m) => m.num_classes(),
        }
    }

    fn input_dim(&self) -> usize {
        match self {
            Classifier::Analytic { mixture } => mixture.dim(),
            Classifier::Affine(m) => m.input_dim(),
        }
    }

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Classifier::Analytic { mixture } => mixture.joint_log_densities(x),
            Classifier::Affine(m) => m.logits(x),
        }
    }

    fn logit_grads(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        match self {
            Classifier::Analytic { mixture } => mixture.component_scores(x),
            Classifier::Affine(m) => m.logit_grads(x),
        }
    }
}
