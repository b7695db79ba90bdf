use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::LogitModel;
use crate::error::{check_dim, input, Error, Result};
use crate::guidance::{guidance_grad, tilted_guidance, ChainRule, GuidanceGradient, GuidanceSpec, MeanShift};
use crate::mixture::GaussianMixture;
use crate::prob::entropy;

use super::{eps_from_score, predict_x0, NoiseSchedule};

/// Diagnostics recorded at every reverse step, evaluated at `x̂₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub max_confidence: f64,
    pub entropy: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub x: Vec<f64>,
    /// Current step; `0` once the chain has produced its final sample.
    pub t: usize,
    pub label: usize,
    pub log: Vec<TrajectoryRecord>,
    /// Set when the state or its guidance became non-finite; the chain is
    /// frozen from that step on.
    pub failed: bool,
}

impl ChainState {
    pub fn new(x: Vec<f64>, t: usize, label: usize) -> Self {
        Self {
            x,
            t,
            label,
            log: Vec::new(),
            failed: false,
        }
    }
}

/// Guidance applied by one [`reverse_step`].
#[derive(Debug, Clone, Copy)]
pub struct StepGuidance<'a> {
    pub grad: &'a [f64],
    pub gamma: f64,
    pub mean_shift: MeanShift,
    pub record: TrajectoryRecord,
}

/// Draws `x_{t−1} ∼ N(μ + γ_t Σ_t g, Σ_t)` with `Σ_t = β̃_t I`
/// (`μ + γ_t g` under [`MeanShift::Direct`]), decrements `t` and appends the
/// step's record.
pub fn reverse_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    schedule: &NoiseSchedule,
    mu: &[f64],
    guidance: StepGuidance<'_>,
    rng: &mut R,
) -> Result<()> {
    if state.t == 0 || state.t > schedule.steps() {
        return input(format!("chain at step {} cannot take a reverse step", state.t));
    }
    check_dim("reverse mean", mu.len(), state.x.len())?;
    check_dim("guidance gradient", guidance.grad.len(), state.x.len())?;
    let var = schedule.posterior_variance(state.t);
    let shift = match guidance.mean_shift {
        MeanShift::Variance => guidance.gamma * var,
        MeanShift::Direct => guidance.gamma,
    };
    let sd = var.sqrt();
    for ((x, m), g) in state.x.iter_mut().zip(mu).zip(guidance.grad) {
        let z: f64 = rng.sample(StandardNormal);
        *x = m + shift * g + sd * z;
    }
    state.t -= 1;
    state.log.push(guidance.record);
    Ok(())
}

/// Final states of a guided sampling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub chains: Vec<ChainState>,
    pub label: usize,
    pub steps: usize,
}

impl SampleBatch {
    /// Final points of the chains that did not fail.
    pub fn points(&self) -> Vec<Vec<f64>> {
        self.successful().map(|c| c.x.clone()).collect()
    }

    pub fn successful(&self) -> impl Iterator<Item = &ChainState> + '_ {
        self.chains.iter().filter(|c| !c.failed)
    }

    pub fn failed_count(&self) -> usize {
        self.chains.iter().filter(|c| c.failed).count()
    }

    pub fn failed_fraction(&self) -> f64 {
        if self.chains.is_empty() {
            0.0
        } else {
            self.failed_count() as f64 / self.chains.len() as f64
        }
    }
}

/// Per-chain RNG: stream `chain` of the ChaCha generator keyed by `seed`.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

struct Pending {
    grad: GuidanceGradient,
    eps: Vec<f64>,
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn evaluate<M: LogitModel + ?Sized>(
    chain: &ChainState,
    diffused: &GaussianMixture,
    model: &M,
    spec: &GuidanceSpec,
    alpha_bar: f64,
    lambda: f64,
) -> Result<Option<Pending>> {
    let attempt = || -> Result<Pending> {
        let score = diffused.score(&chain.x)?;
        let eps = eps_from_score(&chain.x, &score, alpha_bar)?;
        let x0 = predict_x0(&chain.x, &eps, alpha_bar)?;
        let grad = guidance_grad(model, &x0, chain.label, spec, lambda)?;
        Ok(Pending { grad, eps })
    };
    match attempt() {
        Ok(p) if all_finite(&p.eps) && all_finite(&p.grad.value) && p.grad.log_prob.is_finite() => Ok(Some(p)),
        Ok(_) | Err(Error::Numeric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Guided DDPM sampling of `n_chains` chains toward class `y`.
///
/// Each step evaluates the analytic denoiser on the mixture diffused to
/// `ᾱ_t`, computes `x̂₀`, takes the guidance gradient at `x̂₀` (one model
/// evaluation per chain), optionally reweights it across the batch by the
/// tilt, maps it to `x_t` per `spec.chain_rule` and applies [`reverse_step`].
/// Results depend only on `seed`, not on thread scheduling.
pub fn sample_guided<M: LogitModel + ?Sized>(
    gmm: &GaussianMixture,
    model: &M,
    spec: &GuidanceSpec,
    schedule: &NoiseSchedule,
    y: usize,
    n_chains: usize,
    seed: u64,
) -> Result<SampleBatch> {
    spec.validate()?;
    check_dim("classifier input", model.input_dim(), gmm.dim())?;
    if y >= model.num_classes() {
        return input(format!("class {y} out of range for {} classes", model.num_classes()));
    }
    if n_chains == 0 {
        return input("need at least one chain");
    }
    let steps = schedule.steps();
    let d = gmm.dim();
    let mut rngs: Vec<ChaCha8Rng> = (0..n_chains).map(|i| chain_rng(seed, i)).collect();
    let mut chains: Vec<ChainState> = rngs
        .iter_mut()
        .map(|rng| ChainState::new((0..d).map(|_| rng.sample(StandardNormal)).collect(), steps, y))
        .collect();

    for t in (1..=steps).rev() {
        let alpha_bar = schedule.alpha_bar(t);
        let diffused = gmm.diffuse(alpha_bar)?;
        let lambda = spec.lambda.at(t, steps);
        let gamma = spec.gamma.at(t, steps);
        let factor = match spec.chain_rule {
            ChainRule::Identity => 1.0,
            ChainRule::InvSqrtAlphaBar => 1.0 / alpha_bar.sqrt(),
        };

        let mut pending = chains
            .par_iter()
            .map(|c| {
                if c.failed {
                    Ok(None)
                } else {
                    evaluate(c, &diffused, model, spec, alpha_bar, lambda)
                }
            })
            .collect::<Result<Vec<Option<Pending>>>>()?;
        for (c, p) in chains.iter_mut().zip(&pending) {
            if p.is_none() {
                c.failed = true;
            }
        }

        if let Some(tilt) = spec.tilt {
            let live: Vec<usize> = (0..n_chains).filter(|&i| pending[i].is_some()).collect();
            if !live.is_empty() {
                let grads: Vec<GuidanceGradient> = live
                    .iter()
                    .map(|&i| pending[i].as_ref().expect("live chain").grad.clone())
                    .collect();
                let log_probs: Vec<f64> = grads.iter().map(|g| g.log_prob).collect();
                for (&i, g) in live.iter().zip(tilted_guidance(&grads, &log_probs, tilt)?) {
                    pending[i].as_mut().expect("live chain").grad = g;
                }
            }
        }

        chains
            .par_iter_mut()
            .zip(rngs.par_iter_mut())
            .zip(pending.into_par_iter())
            .try_for_each(|((chain, rng), p)| -> Result<()> {
                let Some(p) = p else { return Ok(()) };
                let mu = schedule.posterior_mean(&chain.x, &p.eps, t)?;
                let direction: Vec<f64> = p.grad.value.iter().map(|g| factor * g).collect();
                let record = TrajectoryRecord {
                    max_confidence: p.grad.probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    entropy: entropy(&p.grad.probs),
                    grad_norm: p.grad.norm(),
                };
                let guidance = StepGuidance {
                    grad: &direction,
                    gamma,
                    mean_shift: spec.mean_shift,
                    record,
                };
                reverse_step(chain, schedule, &mu, guidance, rng)?;
                if !all_finite(&chain.x) {
                    chain.failed = true;
                }
                Ok(())
            })?;
    }

    Ok(SampleBatch {
        chains,
        label: y,
        steps,
    })
}
