//! Built-in experiment presets.

use std::path::Path;

use fguide_core::guidance::{GuidanceKind, GuidanceSpec, DEFAULT_ALPHA, DEFAULT_EPSILON, JS_ALPHA};
use fguide_core::GaussianMixture;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, MixtureSource, Sweep};
use crate::error::CliResult;
use crate::run::{ensure_dir, run, write_text, RunRecord};

pub const TILT_SWEEP: [f64; 6] = [0.1, 0.0, -0.1, -0.2, -0.3, -0.5];
pub const ALPHA_SWEEP: [f64; 4] = [0.0, 0.05, 0.1, 0.15];
pub const EPSILON_SWEEP: [f64; 3] = [0.05, 0.1, 0.2];
pub const DIVERGENCE_ALPHA_SWEEP: [f64; 3] = [DEFAULT_ALPHA, JS_ALPHA, 0.08];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Tilt, α, ε and JS/FKL α sweeps, one sub-run each.
    Tables,
}

/// `k` isotropic modes evenly spaced on a circle, equal weights.
pub fn ring_mixture(k: usize, radius: f64, variance: f64) -> fguide_core::Result<GaussianMixture> {
    let means = (0..k)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / k as f64;
            vec![radius * a.cos(), radius * a.sin()]
        })
        .collect();
    GaussianMixture::isotropic(vec![1.0 / k as f64; k], means, variance)
}

/// Base config of the `tables` preset: a 10-mode ring with the analytic
/// classifier.
pub fn tables_base(seed: u64) -> ExperimentConfig {
    let mixture = ring_mixture(10, 4.0, 0.3).expect("ring mixture is valid");
    serde_json::from_value(serde_json::json!({
        "seed": seed,
        "mixture": mixture.to_spec(),
        "chains": 1000,
    }))
    .expect("preset config deserializes")
}

/// Sub-runs of the `tables` preset, named by their output subdirectory.
pub fn tables_stages(base: &ExperimentConfig) -> Vec<(&'static str, ExperimentConfig)> {
    let stage = |kinds: Vec<GuidanceKind>, guidance: GuidanceSpec, sweep: Sweep| ExperimentConfig {
        kinds,
        guidance,
        sweep,
        ..base.clone()
    };
    let g = GuidanceSpec {
        alpha: DEFAULT_ALPHA,
        epsilon: DEFAULT_EPSILON,
        ..base.guidance.clone()
    };
    vec![
        (
            "tilt",
            stage(
                vec![GuidanceKind::None],
                g.clone(),
                Sweep {
                    tilt: Some(TILT_SWEEP.to_vec()),
                    ..Sweep::default()
                },
            ),
        ),
        (
            "alpha",
            stage(
                vec![GuidanceKind::Rkl],
                g.clone(),
                Sweep {
                    alpha: Some(ALPHA_SWEEP.to_vec()),
                    ..Sweep::default()
                },
            ),
        ),
        (
            "epsilon",
            stage(
                vec![GuidanceKind::Rkl],
                g.clone(),
                Sweep {
                    epsilon: Some(EPSILON_SWEEP.to_vec()),
                    ..Sweep::default()
                },
            ),
        ),
        (
            "divergence_alpha",
            stage(
                vec![GuidanceKind::Js, GuidanceKind::Fkl],
                g,
                Sweep {
                    alpha: Some(DIVERGENCE_ALPHA_SWEEP.to_vec()),
                    ..Sweep::default()
                },
            ),
        ),
    ]
}

/// Runs every stage of `preset` into `out/<stage>`.
pub fn run_preset(preset: Preset, base: &ExperimentConfig, out: &Path) -> CliResult<Vec<(&'static str, RunRecord)>> {
    match preset {
        Preset::Tables => {
            debug_assert!(matches!(base.mixture, MixtureSource::Inline(_)));
            ensure_dir(out)?;
            let stages = tables_stages(base);
            let names: Vec<&str> = stages.iter().map(|(n, _)| *n).collect();
            write_text(
                &out.join("preset.json"),
                &serde_json::to_string_pretty(&serde_json::json!({"preset": preset, "stages": names}))
                    .expect("json serializes"),
            )?;
            stages
                .into_iter()
                .map(|(name, cfg)| Ok((name, run(&cfg, &out.join(name))?)))
                .collect()
        }
    }
}
