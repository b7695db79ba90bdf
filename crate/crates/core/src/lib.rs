//! Regularized classifier guidance for diffusion sampling on analytic
//! Gaussian mixtures.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod classifier;
pub mod diffusion;
pub mod error;
pub mod guidance;
pub mod metrics;
pub mod mixture;
pub mod oracles;
pub mod prob;

pub use classifier::{AffineClassifier, AnalyticClassifier, Classifier, LogitModel};
pub use diffusion::{build_schedule, sample_guided, NoiseSchedule, SampleBatch};
pub use error::{Error, Result};
pub use guidance::{GuidanceGradient, GuidanceKind, GuidanceSpec, TargetDistribution};
pub use mixture::{GaussianMixture, MixtureSpec};
