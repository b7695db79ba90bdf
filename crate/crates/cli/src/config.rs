//! JSON experiment configuration.
//!
//! Relative file paths inside a config resolve against the config file's
//! directory. [`load_config`] inlines every referenced file, so the resolved
//! config is self-contained and its canonical JSON fully determines a run.

use std::fs;
use std::path::{Path, PathBuf};

use fguide_core::classifier::{AffineClassifier, FinetuneConfig, DEFAULT_BINS};
use fguide_core::diffusion::{build_schedule, NoiseSchedule};
use fguide_core::guidance::{GuidanceKind, GuidanceSpec};
use fguide_core::metrics::DEFAULT_RADIUS_SIGMAS;
use fguide_core::{GaussianMixture, MixtureSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MixtureSource {
    Path(PathBuf),
    Inline(MixtureSpec),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierConfig {
    /// Bayes classifier of the mixture itself.
    #[default]
    Analytic,
    /// Affine softmax classifier read from `path` or given inline as `model`.
    Affine {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<AffineClassifier>,
    },
    /// Affine classifier trained on fresh mixture samples, labelled by
    /// component, then divided by `temperature`.
    Train {
        #[serde(default = "default_train_samples")]
        samples: usize,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default = "plain_training")]
        training: FinetuneConfig,
    },
}

fn default_train_samples() -> usize {
    2000
}

fn default_temperature() -> f64 {
    1.0
}

/// Cross-entropy only, enough epochs to converge on desk-scale data.
pub fn plain_training() -> FinetuneConfig {
    FinetuneConfig {
        lambda: 0.0,
        epochs: 30,
        lr: 0.5,
        ..FinetuneConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Defaults to `0.1 / steps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_start: Option<f64>,
    /// Defaults to `20 / steps`, capped at 0.999.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_end: Option<f64>,
}

fn default_steps() -> usize {
    100
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            beta_start: None,
            beta_end: None,
        }
    }
}

impl ScheduleConfig {
    pub fn beta_range(&self) -> (f64, f64) {
        let t = self.steps.max(1) as f64;
        let start = self.beta_start.unwrap_or((0.1 / t).min(0.999));
        let end = self.beta_end.unwrap_or((20.0 / t).min(0.999));
        (start, end)
    }

    pub fn build(&self) -> fguide_core::Result<NoiseSchedule> {
        let (start, end) = self.beta_range();
        build_schedule(self.steps, start, end)
    }
}

/// Optional sweep axes; the run covers their Cartesian product.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_start: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_end: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "default_radius")]
    pub radius_sigmas: f64,
    /// Size of the fresh reference samples; defaults to the chain count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_samples: Option<usize>,
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS_SIGMAS
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            radius_sigmas: default_radius(),
            reference_samples: None,
        }
    }
}

/// Settings of the `calibrate` verb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "default_train_samples")]
    pub train_samples: usize,
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
    /// Softmax temperature applied to the converged classifier before
    /// fine-tuning; values above one make it underconfident.
    #[serde(default = "default_miscalibration")]
    pub temperature: f64,
    #[serde(default = "plain_training")]
    pub base: FinetuneConfig,
    #[serde(default = "default_finetune")]
    pub finetune: FinetuneConfig,
    /// Seeds to average over; defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_test_samples() -> usize {
    5000
}

fn default_miscalibration() -> f64 {
    5.0
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

pub fn default_finetune() -> FinetuneConfig {
    FinetuneConfig {
        epochs: 5,
        lr: 0.2,
        ..FinetuneConfig::default()
    }
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            train_samples: default_train_samples(),
            test_samples: default_test_samples(),
            temperature: default_miscalibration(),
            base: plain_training(),
            finetune: default_finetune(),
            seeds: None,
            bins: default_bins(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mixture: MixtureSource,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub guidance: GuidanceSpec,
    /// Guidance kinds to run; empty means `guidance.kind` only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kinds: Vec<GuidanceKind>,
    #[serde(default = "default_chains")]
    pub chains: usize,
    /// Target classes; defaults to `[0]`.
    #[serde(default = "default_classes")]
    pub classes: Vec<usize>,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub metrics: MetricsConfig,
    /// Runs fail with a numeric error when any row loses a larger share of
    /// its chains.
    #[serde(default = "default_max_failed")]
    pub max_failed_fraction: f64,
    /// Per-oracle trial budget of the smoke oracle run recorded in `run.json`;
    /// `0` skips it.
    #[serde(default = "default_oracle_trials")]
    pub oracle_trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
    /// Output directory; the `--out` flag takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_chains() -> usize {
    1000
}

fn default_classes() -> Vec<usize> {
    vec![0]
}

fn default_max_failed() -> f64 {
    0.5
}

fn default_oracle_trials() -> usize {
    10
}

fn config_err(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        CliError::Config(format!("{} at `{field}`: {}", path.display(), e.inner()))
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    pub fn mixture(&self) -> CliResult<GaussianMixture> {
        match &self.mixture {
            MixtureSource::Inline(spec) => {
                GaussianMixture::try_from(spec.clone()).map_err(|e| config_err("mixture", e))
            }
            MixtureSource::Path(p) => Err(config_err("mixture", format!("unresolved path {}", p.display()))),
        }
    }

    pub fn kinds(&self) -> Vec<GuidanceKind> {
        if self.kinds.is_empty() {
            vec![self.guidance.kind]
        } else {
            self.kinds.clone()
        }
    }

    /// Inlines referenced files relative to `base`.
    pub fn resolve_files(mut self, base: &Path) -> CliResult<Self> {
        if let MixtureSource::Path(p) = &self.mixture {
            let spec: MixtureSpec = read_json(&resolve(base, p))?;
            self.mixture = MixtureSource::Inline(spec);
        }
        if let ClassifierConfig::Affine { path: Some(p), model } = &self.classifier {
            if model.is_some() {
                return Err(config_err("classifier", "give either `path` or `model`, not both"));
            }
            let loaded: AffineClassifier = read_json(&resolve(base, p))?;
            self.classifier = ClassifierConfig::Affine {
                path: None,
                model: Some(loaded),
            };
        }
        Ok(self)
    }

    pub fn validate(&self) -> CliResult<()> {
        let gmm = self.mixture()?;
        let k = gmm.num_components();
        if self.chains == 0 {
            return Err(config_err("chains", "must be at least 1"));
        }
        if self.classes.is_empty() {
            return Err(config_err("classes", "must list at least one class"));
        }
        let classes = match &self.classifier {
            ClassifierConfig::Analytic | ClassifierConfig::Train { .. } => k,
            ClassifierConfig::Affine { model: Some(m), .. } => {
                use fguide_core::LogitModel;
                if m.input_dim() != gmm.dim() {
                    return Err(config_err(
                        "classifier.model",
                        format!("input dimension {} does not match mixture dimension {}", m.input_dim(), gmm.dim()),
                    ));
                }
                m.num_classes()
            }
            ClassifierConfig::Affine { .. } => return Err(config_err("classifier", "affine backend needs `path` or `model`")),
        };
        if let ClassifierConfig::Train { samples, temperature, .. } = &self.classifier {
            if *samples == 0 || !(*temperature > 0.0) {
                return Err(config_err("classifier", "training needs samples >= 1 and a positive temperature"));
            }
        }
        for (i, c) in self.classes.iter().enumerate() {
            if *c >= classes {
                return Err(config_err(&format!("classes[{i}]"), format!("class {c} out of range for {classes} classes")));
            }
        }
        self.guidance.validate().map_err(|e| config_err("guidance", e))?;
        self.schedule.build().map_err(|e| config_err("schedule", e))?;
        let axes = [
            ("sweep.tilt", &self.sweep.tilt),
            ("sweep.alpha", &self.sweep.alpha),
            ("sweep.epsilon", &self.sweep.epsilon),
            ("sweep.lambda_start", &self.sweep.lambda_start),
            ("sweep.lambda_end", &self.sweep.lambda_end),
        ];
        for (name, axis) in axes {
            if let Some(values) = axis {
                if values.is_empty() {
                    return Err(config_err(name, "sweep axis must not be empty"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(config_err(name, "sweep values must be finite"));
                }
            }
        }
        if !(self.metrics.radius_sigmas > 0.0) {
            return Err(config_err("metrics.radius_sigmas", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.max_failed_fraction) {
            return Err(config_err("max_failed_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Config without the output directory, as canonical JSON with sorted keys.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let value = serde_json::to_value(&c).expect("config serializes");
        serde_json::to_string_pretty(&value).expect("json value serializes")
    }

    pub fn hash(&self) -> String {
        hash_json(&self.canonical_json())
    }
}

pub fn hash_json(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Reads, resolves and validates a config file.
pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let raw: ExperimentConfig = read_json(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let cfg = raw.resolve_files(base)?;
    cfg.validate()?;
    Ok(cfg)
}
