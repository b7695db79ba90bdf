//! The `calibrate` verb: ECE-regularized fine-tuning of a deliberately
//! miscalibrated affine classifier, compared against plain cross-entropy
//! fine-tuning from the same starting point.

use std::path::Path;

use fguide_core::classifier::{
    binned_ece, finetune_ece, smooth_ece_loss, AffineClassifier, CalibrationBatch, FinetuneConfig, LabeledPoint,
};
use fguide_core::prob::softmax;
use fguide_core::{GaussianMixture, LogitModel};
use serde::{Deserialize, Serialize};

use crate::config::{CalibrationConfig, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::run::{derive_seed, ensure_dir, write_csv, write_text};

const STREAM_CAL_TRAIN: u64 = 11;
const STREAM_CAL_TEST: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMetrics {
    pub accuracy: f64,
    pub binned_ece: f64,
    pub smooth_ece: f64,
}

/// One line of `calibration.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub seed: u64,
    pub lambda: f64,
    pub accuracy: f64,
    pub binned_ece: f64,
    pub smooth_ece: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub seed: u64,
    /// Miscalibrated starting point.
    pub initial: CalibrationMetrics,
    /// Fine-tuned with `λ = 0`.
    pub plain: CalibrationMetrics,
    /// Fine-tuned with the configured `λ`.
    pub tuned: CalibrationMetrics,
    pub model: AffineClassifier,
}

impl CalibrationOutcome {
    /// `1 − ECE_tuned / ECE_plain` on held-out data.
    pub fn ece_reduction(&self) -> f64 {
        1.0 - self.tuned.binned_ece / self.plain.binned_ece
    }
}

pub fn evaluate(model: &AffineClassifier, data: &[LabeledPoint], beta: f64, bins: usize) -> CliResult<CalibrationMetrics> {
    let probs = data
        .iter()
        .map(|p| Ok(softmax(&model.logits(&p.x)?)))
        .collect::<fguide_core::Result<Vec<_>>>()?;
    let labels: Vec<usize> = data.iter().map(|p| p.label).collect();
    let batch = CalibrationBatch::from_probabilities(&probs, &labels)?;
    Ok(CalibrationMetrics {
        accuracy: batch.accuracy(),
        binned_ece: binned_ece(&batch, bins)?,
        smooth_ece: smooth_ece_loss(&batch, beta, bins)?,
    })
}

fn labeled(gmm: &GaussianMixture, n: usize, seed: u64) -> CliResult<Vec<LabeledPoint>> {
    Ok(gmm
        .sample(n, seed)?
        .into_iter()
        .map(|(x, label)| LabeledPoint::new(x, label))
        .collect())
}

/// Trains a classifier to convergence, divides its logits by
/// `cfg.temperature`, then fine-tunes it twice from there: once with `λ = 0`
/// and once with `cfg.finetune.lambda`.
pub fn calibration_experiment(cfg: &CalibrationConfig, gmm: &GaussianMixture, seed: u64) -> CliResult<CalibrationOutcome> {
    if !(cfg.temperature > 0.0) || cfg.train_samples == 0 || cfg.test_samples == 0 {
        return Err(CliError::Config(
            "calibration: temperature must be positive and sample counts at least 1".into(),
        ));
    }
    let train = labeled(gmm, cfg.train_samples, derive_seed(seed, STREAM_CAL_TRAIN, 0))?;
    let test = labeled(gmm, cfg.test_samples, derive_seed(seed, STREAM_CAL_TEST, 0))?;
    let with_seed = |c: &FinetuneConfig| FinetuneConfig { seed, ..c.clone() };
    let zeros = AffineClassifier::zeros(gmm.dim(), gmm.num_components());
    let base = finetune_ece(&zeros, &train, &with_seed(&cfg.base))?;
    let miscalibrated = base.scaled(1.0 / cfg.temperature);
    let plain_cfg = FinetuneConfig {
        lambda: 0.0,
        ..with_seed(&cfg.finetune)
    };
    let plain = finetune_ece(&miscalibrated, &train, &plain_cfg)?;
    let tuned = finetune_ece(&miscalibrated, &train, &with_seed(&cfg.finetune))?;
    let beta = cfg.finetune.beta;
    Ok(CalibrationOutcome {
        seed,
        initial: evaluate(&miscalibrated, &test, beta, cfg.bins)?,
        plain: evaluate(&plain, &test, beta, cfg.bins)?,
        tuned: evaluate(&tuned, &test, beta, cfg.bins)?,
        model: tuned,
    })
}

/// Runs the calibration experiment for every configured seed and writes
/// `calibration.csv` plus one `calibrated_<seed>.json` model per seed.
pub fn calibrate(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<CalibrationOutcome>> {
    let cal = cfg.calibration.clone().unwrap_or_default();
    let gmm = cfg.mixture()?;
    let seeds = cal.seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
    if seeds.is_empty() {
        return Err(CliError::Config("calibration.seeds: must list at least one seed".into()));
    }
    let outcomes = seeds
        .iter()
        .map(|&s| calibration_experiment(&cal, &gmm, s))
        .collect::<CliResult<Vec<_>>>()?;
    ensure_dir(out)?;
    let mut rows = Vec::new();
    for o in &outcomes {
        for (lambda, m) in [(0.0, o.plain), (cal.finetune.lambda, o.tuned)] {
            rows.push(CalibrationRow {
                seed: o.seed,
                lambda,
                accuracy: m.accuracy,
                binned_ece: m.binned_ece,
                smooth_ece: m.smooth_ece,
            });
        }
        let json = serde_json::to_string_pretty(&o.model).expect("model serializes");
        write_text(&out.join(format!("calibrated_{}.json", o.seed)), &json)?;
    }
    write_csv(&out.join("calibration.csv"), &rows)?;
    Ok(outcomes)
}
