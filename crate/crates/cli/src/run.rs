//! The `run` verb: sampling experiments over guidance kinds, sweep points and
//! target classes.

use std::fs;
use std::path::Path;
use std::time::Instant;

use fguide_core::classifier::{finetune_ece, AffineClassifier, Classifier, LabeledPoint};
use fguide_core::diffusion::sample_guided;
use fguide_core::guidance::{GuidanceKind, GuidanceSpec, Schedule};
use fguide_core::metrics::{frechet_gaussian, mode_precision_recall, summarize, trajectory_stats};
use fguide_core::oracles::{run_oracles, OracleSuite};
use fguide_core::{GaussianMixture, LogitModel};
use serde::{Deserialize, Serialize};

use crate::config::{hash_json, ClassifierConfig, ExperimentConfig};
use crate::error::{CliError, CliResult};

/// SplitMix64 finalizer over `seed` and two stream tags.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_CHAINS: u64 = 1;
const STREAM_MIXTURE_REF: u64 = 2;
const STREAM_CLASS_REF: u64 = 3;
const STREAM_TRAINING: u64 = 4;

/// Builds the logit model named by the config.
pub fn build_classifier(cfg: &ExperimentConfig, gmm: &GaussianMixture) -> CliResult<Classifier> {
    Ok(match &cfg.classifier {
        ClassifierConfig::Analytic => Classifier::analytic(gmm.clone()),
        ClassifierConfig::Affine { model: Some(m), .. } => Classifier::Affine(m.clone()),
        ClassifierConfig::Affine { .. } => {
            return Err(CliError::Config("classifier: affine backend needs `path` or `model`".into()))
        }
        ClassifierConfig::Train {
            samples,
            temperature,
            training,
        } => {
            let data: Vec<LabeledPoint> = gmm
                .sample(*samples, derive_seed(cfg.seed, STREAM_TRAINING, 0))?
                .into_iter()
                .map(|(x, label)| LabeledPoint::new(x, label))
                .collect();
            let zeros = AffineClassifier::zeros(gmm.dim(), gmm.num_components());
            let trained = finetune_ece(&zeros, &data, training)?;
            Classifier::Affine(trained.scaled(1.0 / temperature))
        }
    })
}

/// One point of the sweep grid, with every swept quantity resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tilt: Option<f64>,
    pub alpha: f64,
    pub epsilon: f64,
    pub lambda_start: f64,
    pub lambda_end: f64,
}

impl SweepPoint {
    pub fn apply(&self, base: &GuidanceSpec, kind: GuidanceKind) -> GuidanceSpec {
        GuidanceSpec {
            kind,
            tilt: self.tilt,
            alpha: self.alpha,
            epsilon: self.epsilon,
            lambda: Schedule::Linear {
                start: self.lambda_start,
                end: self.lambda_end,
            },
            ..base.clone()
        }
    }
}

/// Cartesian product of the sweep axes in the order tilt, alpha, epsilon,
/// lambda_start, lambda_end; missing axes take the base spec's value.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let g = &cfg.guidance;
    let (ls, le) = match g.lambda {
        Schedule::Constant { value } => (value, value),
        Schedule::Linear { start, end } => (start, end),
    };
    let tilts: Vec<Option<f64>> = match &cfg.sweep.tilt {
        Some(v) => v.iter().map(|t| Some(*t)).collect(),
        None => vec![g.tilt],
    };
    let axis = |v: &Option<Vec<f64>>, d: f64| v.clone().unwrap_or_else(|| vec![d]);
    let alphas = axis(&cfg.sweep.alpha, g.alpha);
    let epsilons = axis(&cfg.sweep.epsilon, g.epsilon);
    let starts = axis(&cfg.sweep.lambda_start, ls);
    let ends = axis(&cfg.sweep.lambda_end, le);
    let mut points = Vec::new();
    for &tilt in &tilts {
        for &alpha in &alphas {
            for &epsilon in &epsilons {
                for &lambda_start in &starts {
                    for &lambda_end in &ends {
                        points.push(SweepPoint {
                            tilt,
                            alpha,
                            epsilon,
                            lambda_start,
                            lambda_end,
                        });
                    }
                }
            }
        }
    }
    points
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub point: usize,
    /// SHA-256 of the canonical JSON of the row's guidance spec.
    pub point_hash: String,
    pub kind: GuidanceKind,
    pub tilt: Option<f64>,
    pub alpha: f64,
    pub epsilon: f64,
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub class: usize,
    /// Fréchet distance to fresh samples of the target component.
    pub frechet_class: f64,
    /// Fréchet distance to fresh samples of the whole mixture.
    pub frechet_mixture: f64,
    pub precision: f64,
    pub recall: f64,
    /// Mean max-confidence at the last reverse step.
    pub mean_final_confidence: f64,
    pub failed_chains: usize,
}

/// One line of `trajectories.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub point: usize,
    pub kind: GuidanceKind,
    pub class: usize,
    pub t: usize,
    pub mean_confidence: f64,
    pub mean_entropy: f64,
    pub top_quartile_confidence: f64,
    pub mean_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub trials: usize,
    pub passed: bool,
    pub failed: Vec<String>,
}

/// Provenance and headline numbers of a run, written to `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub rows: Vec<ResultRow>,
    pub trajectories: Vec<TrajectoryRow>,
    pub oracles: Option<OracleSummary>,
    pub wall_clock_seconds: f64,
}

fn frechet_or_nan(points: &[Vec<f64>], reference: &[Vec<f64>]) -> CliResult<f64> {
    if points.len() < 2 || reference.len() < 2 {
        return Ok(f64::NAN);
    }
    Ok(frechet_gaussian(&summarize(points)?, &summarize(reference)?)?)
}

fn component(gmm: &GaussianMixture, k: usize) -> CliResult<GaussianMixture> {
    Ok(GaussianMixture::new(
        vec![1.0],
        vec![gmm.mean_of(k).to_vec()],
        vec![gmm.covariance_of(k)],
    )?)
}

/// Runs every (kind, point, class) combination without touching the
/// filesystem.
pub fn execute(cfg: &ExperimentConfig) -> CliResult<RunRecord> {
    let started = Instant::now();
    cfg.validate()?;
    let gmm = cfg.mixture()?;
    let model = build_classifier(cfg, &gmm)?;
    if model.input_dim() != gmm.dim() {
        return Err(CliError::Config("classifier input dimension does not match the mixture".into()));
    }
    let schedule = cfg.schedule.build()?;
    let n_ref = cfg.metrics.reference_samples.unwrap_or(cfg.chains).max(2);
    let strip = |s: Vec<(Vec<f64>, usize)>| s.into_iter().map(|(x, _)| x).collect::<Vec<_>>();
    let mixture_ref = strip(gmm.sample(n_ref, derive_seed(cfg.seed, STREAM_MIXTURE_REF, 0))?);
    let class_refs = cfg
        .classes
        .iter()
        .map(|&c| {
            let samples = component(&gmm, c.min(gmm.num_components() - 1))?
                .sample(n_ref, derive_seed(cfg.seed, STREAM_CLASS_REF, c as u64))?;
            Ok(strip(samples))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let points = sweep_points(cfg);
    let mut rows = Vec::new();
    let mut trajectories = Vec::new();
    for kind in cfg.kinds() {
        for (pi, point) in points.iter().enumerate() {
            let spec = point.apply(&cfg.guidance, kind);
            let point_hash = hash_json(&serde_json::to_string(&spec).expect("spec serializes"));
            for (ci, &class) in cfg.classes.iter().enumerate() {
                let seed = derive_seed(cfg.seed, STREAM_CHAINS, class as u64);
                let batch = sample_guided(&gmm, &model, &spec, &schedule, class, cfg.chains, seed)?;
                let finals = batch.points();
                let (precision, recall) = if finals.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    let pr = mode_precision_recall(&finals, &gmm, cfg.metrics.radius_sigmas)?;
                    (pr.precision, pr.recall)
                };
                let stats = if finals.is_empty() {
                    Vec::new()
                } else {
                    trajectory_stats(&batch)?
                };
                rows.push(ResultRow {
                    point: pi,
                    point_hash: point_hash.clone(),
                    kind,
                    tilt: point.tilt,
                    alpha: point.alpha,
                    epsilon: point.epsilon,
                    lambda_start: point.lambda_start,
                    lambda_end: point.lambda_end,
                    class,
                    frechet_class: frechet_or_nan(&finals, &class_refs[ci])?,
                    frechet_mixture: frechet_or_nan(&finals, &mixture_ref)?,
                    precision,
                    recall,
                    mean_final_confidence: stats.last().map_or(f64::NAN, |s| s.mean_confidence),
                    failed_chains: batch.failed_count(),
                });
                trajectories.extend(stats.iter().map(|s| TrajectoryRow {
                    point: pi,
                    kind,
                    class,
                    t: s.t,
                    mean_confidence: s.mean_confidence,
                    mean_entropy: s.mean_entropy,
                    top_quartile_confidence: s.top_quartile_confidence,
                    mean_grad_norm: s.mean_grad_norm,
                }));
            }
        }
    }

    let oracles = (cfg.oracle_trials > 0).then(|| {
        let bundle = run_oracles(&OracleSuite {
            trials: cfg.oracle_trials,
            seed: cfg.seed,
            ..OracleSuite::default()
        });
        OracleSummary {
            trials: cfg.oracle_trials,
            passed: bundle.passed(),
            failed: bundle.failures().map(|r| r.name.clone()).collect(),
        }
    });

    Ok(RunRecord {
        config_hash: cfg.hash(),
        rows,
        trajectories,
        oracles,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Runs the experiment and writes `config.json`, `results.csv`,
/// `trajectories.csv` and `run.json` into `out`. Fails with a numeric error
/// after writing when any row lost more than `max_failed_fraction` of its
/// chains.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> CliResult<RunRecord> {
    let record = execute(cfg)?;
    ensure_dir(out)?;
    write_text(&out.join("config.json"), &cfg.canonical_json())?;
    write_csv(&out.join("results.csv"), &record.rows)?;
    write_csv(&out.join("trajectories.csv"), &record.trajectories)?;
    let json = serde_json::to_string_pretty(&record).expect("run record serializes");
    write_text(&out.join("run.json"), &json)?;
    let limit = cfg.max_failed_fraction * cfg.chains as f64;
    if let Some(bad) = record.rows.iter().find(|r| r.failed_chains as f64 > limit) {
        return Err(CliError::Numeric(format!(
            "{} of {} chains failed for kind {} at point {} class {}",
            bad.failed_chains, cfg.chains, bad.kind, bad.point, bad.class
        )));
    }
    Ok(record)
}
