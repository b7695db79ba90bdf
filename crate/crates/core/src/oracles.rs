//! Brute-force and finite-difference verifiers for the guidance kernels.
//!
//! Scores, softmaxes and divergences here are written directly from their
//! definitions and do not call into [`crate::guidance`] or [`crate::prob`];
//! the kernels are only invoked as the subject under test.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{AffineClassifier, AnalyticClassifier, LogitModel};
use crate::error::{input, numeric, Result};
use crate::guidance::{
    corollary_guidance_grad, divergence_value, f_divergence_guidance_grad, f_weight_with, gaussian_rkl_grad,
    gaussian_rkl_grad_verbatim, guidance_grad, DivergenceKind, GuidanceKind, GuidanceSpec, JsWeight, Schedule,
    TargetDistribution,
};
use crate::mixture::GaussianMixture;

/// Tolerance for gradient checks against finite differences.
pub const GRADIENT_TOL: f64 = 1e-5;
/// Tolerance for algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Tolerance for the Gaussian closed form against the generic kernel.
pub const GAUSSIAN_TOL: f64 = 1e-8;
pub const DEFAULT_TRIALS: usize = 100;
/// Relative errors are taken against `max(‖reference‖_∞, REL_FLOOR)`.
pub const REL_FLOOR: f64 = 1e-3;

/// Central differences with step `h = scale · (1 + |x_i|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteDiffConfig {
    pub scale: f64,
}

impl Default for FiniteDiffConfig {
    fn default() -> Self {
        Self { scale: 1e-5 }
    }
}

impl FiniteDiffConfig {
    pub fn step(&self, xi: f64) -> f64 {
        self.scale * (1.0 + xi.abs())
    }
}

pub fn finite_diff_grad<F>(field: F, x: &[f64], cfg: &FiniteDiffConfig) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(cfg.scale > 0.0) {
        return input(format!("finite-difference scale must be positive, got {}", cfg.scale));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = cfg.step(x[i]);
        probe[i] = x[i] + h;
        let up = field(&probe)?;
        probe[i] = x[i] - h;
        let down = field(&probe)?;
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return numeric(format!("non-finite field value around coordinate {i}"));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub trials: usize,
    pub tol: f64,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Input of the trial with the largest relative error.
    pub worst_input: Vec<f64>,
    pub passed: bool,
    /// Additional diagnostics that do not affect `passed`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, f64>,
}

/// Running maxima over trials.
struct Tally {
    name: String,
    tol: f64,
    trials: usize,
    max_rel: f64,
    max_abs: f64,
    worst: Vec<f64>,
    notes: BTreeMap<String, f64>,
}

impl Tally {
    fn new(name: impl Into<String>, tol: f64) -> Self {
        Self {
            name: name.into(),
            tol,
            trials: 0,
            max_rel: 0.0,
            max_abs: 0.0,
            worst: Vec::new(),
            notes: BTreeMap::new(),
        }
    }

    fn record(&mut self, got: &[f64], reference: &[f64], input: &[f64]) {
        self.trials += 1;
        let mut abs = if got.len() == reference.len() { 0.0 } else { f64::INFINITY };
        let mut scale = 0.0f64;
        for (a, b) in got.iter().zip(reference) {
            abs = nan_max(abs, (a - b).abs());
            scale = scale.max(b.abs());
        }
        let rel = abs / scale.max(REL_FLOOR);
        self.max_abs = nan_max(self.max_abs, abs);
        if self.trials == 1 || (!(rel <= self.max_rel) && !self.max_rel.is_nan()) {
            self.max_rel = rel;
            self.worst = input.to_vec();
        }
    }

    fn note_max(&mut self, key: &str, value: f64) {
        let entry = self.notes.entry(key.to_string()).or_insert(0.0);
        *entry = entry.max(value);
    }

    fn finish(self) -> OracleReport {
        OracleReport {
            passed: self.max_rel <= self.tol,
            name: self.name,
            trials: self.trials,
            tol: self.tol,
            max_rel_err: self.max_rel,
            max_abs_err: self.max_abs,
            worst_input: self.worst,
            notes: self.notes,
        }
    }
}

/// Maximum that propagates NaN, so a NaN error can never pass.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn lse(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn probabilities(logits: &[f64]) -> Vec<f64> {
    let z = lse(logits);
    logits.iter().map(|l| (l - z).exp()).collect()
}

fn smoothed_target(k: usize, y: usize, eps: f64) -> Vec<f64> {
    (0..k)
        .map(|i| (1.0 - eps) / k as f64 + if i == y { eps } else { 0.0 })
        .collect()
}

fn check_simplex(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() || v.iter().any(|x| !(*x >= 0.0)) || (v.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return input(format!("{what} is not a probability vector"));
    }
    Ok(())
}

fn kl_terms(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if *x == 0.0 { 0.0 } else { x * (x / y).ln() })
        .sum()
}

fn js_unconstrained(q: &[f64], p: &[f64]) -> f64 {
    let m: Vec<f64> = q.iter().zip(p).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * kl_terms(q, &m) + 0.5 * kl_terms(p, &m)
}

/// Term-by-term `D(q‖p)`: `KL(q‖p)`, `KL(p‖q)`, mixture-form JS and
/// `Σ(√q − √p)²`.
pub fn brute_force_divergence(kind: DivergenceKind, q: &[f64], p: &[f64]) -> Result<f64> {
    if q.len() != p.len() {
        return input("divergence arguments differ in length");
    }
    check_simplex(q, "q")?;
    check_simplex(p, "p")?;
    Ok(match kind {
        DivergenceKind::Rkl => kl_terms(q, p),
        DivergenceKind::Fkl => kl_terms(p, q),
        DivergenceKind::Js => js_unconstrained(q, p),
        DivergenceKind::Hellinger => q.iter().zip(p).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum(),
    })
}

/// Which guidance gradient a check exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "snake_case")]
pub enum GuidanceOracle {
    Base,
    /// Entropy-regularized; `zero_lambda` forces `λ = 0`.
    Entropy { zero_lambda: bool },
    Divergence { kind: DivergenceKind, js_weight: JsWeight },
}

impl GuidanceOracle {
    pub fn divergence(kind: DivergenceKind) -> Self {
        GuidanceOracle::Divergence {
            kind,
            js_weight: JsWeight::default(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            GuidanceOracle::Base => "gradient:base".into(),
            GuidanceOracle::Entropy { zero_lambda: false } => "gradient:entropy".into(),
            GuidanceOracle::Entropy { zero_lambda: true } => "gradient:entropy(lambda=0)".into(),
            GuidanceOracle::Divergence { kind, js_weight } => match js_weight {
                JsWeight::DerivativeConsistent => format!("gradient:{}", kind.name()),
                JsWeight::AsPrinted => format!("gradient:{}(as-printed)", kind.name()),
            },
        }
    }
}

struct Instance {
    model: Box<dyn LogitModel>,
    x: Vec<f64>,
    y: usize,
    tau1: f64,
    tau2: f64,
    alpha: f64,
    epsilon: f64,
    lambda: f64,
}

fn random_mixture(rng: &mut ChaCha8Rng, k: usize, d: usize) -> GaussianMixture {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = weights[1..].iter().sum();
    weights[0] = 1.0 - head;
    let means = (0..k)
        .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let covs = (0..k)
        .map(|_| {
            let a: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| {
                            let s: f64 = (0..d).map(|m| a[i][m] * a[j][m]).sum();
                            0.5 * s + if i == j { 0.3 } else { 0.0 }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    GaussianMixture::new(weights, means, covs).expect("random mixture is valid")
}

fn random_instance(rng: &mut ChaCha8Rng, trial: usize) -> Instance {
    let k = rng.random_range(2..=10);
    let d = rng.random_range(1..=3);
    let model: Box<dyn LogitModel> = if trial % 2 == 0 {
        let w = (0..k).map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
        let b = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        Box::new(AffineClassifier::new(w, b).expect("random affine model is valid"))
    } else {
        Box::new(AnalyticClassifier::new(random_mixture(rng, k, d)))
    };
    Instance {
        model,
        x: (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
        y: rng.random_range(0..k),
        tau1: rng.random_range(0.5..2.0),
        tau2: rng.random_range(0.5..2.0),
        alpha: rng.random_range(0.05..1.0),
        epsilon: rng.random_range(0.05..0.5),
        lambda: rng.random_range(0.05..1.0),
    }
}

/// The score whose gradient each kernel claims to compute, from definitions.
fn oracle_score(which: GuidanceOracle, inst: &Instance, x: &[f64]) -> Result<f64> {
    let f = inst.model.logits(x)?;
    let scaled: Vec<f64> = f.iter().map(|v| inst.tau2 * v).collect();
    let base = inst.tau1 * f[inst.y] - lse(&scaled);
    let p = probabilities(&f);
    Ok(match which {
        GuidanceOracle::Base => base,
        GuidanceOracle::Entropy { zero_lambda } => {
            let lambda = if zero_lambda { 0.0 } else { inst.lambda };
            let h: f64 = -p.iter().map(|v| if *v > 0.0 { v * v.ln() } else { 0.0 }).sum::<f64>();
            base + lambda * h
        }
        GuidanceOracle::Divergence { kind, .. } => {
            let q = smoothed_target(f.len(), inst.y, inst.epsilon);
            base - inst.alpha * brute_force_divergence(kind, &q, &p)?
        }
    })
}

fn kernel_gradient(which: GuidanceOracle, inst: &Instance) -> Result<Vec<f64>> {
    let mut spec = GuidanceSpec {
        tau1: inst.tau1,
        tau2: inst.tau2,
        alpha: inst.alpha,
        epsilon: inst.epsilon,
        lambda: Schedule::constant(inst.lambda),
        ..GuidanceSpec::default()
    };
    let model = inst.model.as_ref();
    let grad = match which {
        GuidanceOracle::Base => guidance_grad(model, &inst.x, inst.y, &spec, inst.lambda)?,
        GuidanceOracle::Entropy { zero_lambda } => {
            spec.kind = GuidanceKind::Entropy;
            let lambda = if zero_lambda { 0.0 } else { inst.lambda };
            guidance_grad(model, &inst.x, inst.y, &spec, lambda)?
        }
        GuidanceOracle::Divergence { kind, js_weight } => {
            spec.kind = match kind {
                DivergenceKind::Rkl => GuidanceKind::Rkl,
                DivergenceKind::Fkl => GuidanceKind::Fkl,
                DivergenceKind::Js => GuidanceKind::Js,
                DivergenceKind::Hellinger => GuidanceKind::Hellinger,
            };
            if js_weight == JsWeight::DerivativeConsistent {
                guidance_grad(model, &inst.x, inst.y, &spec, inst.lambda)?
            } else {
                let q = TargetDistribution::new(model.num_classes(), inst.y, inst.epsilon)?;
                f_divergence_guidance_grad(model, &inst.x, inst.y, inst.tau1, inst.tau2, inst.alpha, &q, |q, p| {
                    f_weight_with(kind, q, p, js_weight)
                })?
            }
        }
    };
    Ok(grad.value)
}

/// Compares a guidance kernel with central differences of its defining score
/// over random affine and analytic models (`K ≤ 10`, `d ≤ 3`).
pub fn check_guidance_grad(which: GuidanceOracle, trials: usize, seed: u64, tol: f64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new(which.name(), tol);
    let fd_cfg = FiniteDiffConfig::default();
    for trial in 0..trials {
        let inst = random_instance(&mut rng, trial);
        let analytic = kernel_gradient(which, &inst);
        let numeric = finite_diff_grad(|x| oracle_score(which, &inst, x), &inst.x, &fd_cfg);
        match (analytic, numeric) {
            (Ok(a), Ok(n)) => tally.record(&a, &n, &inst.x),
            _ => tally.record(&[f64::NAN], &[0.0], &inst.x),
        }
    }
    tally.finish()
}

/// The Γ-weighted Gaussian closed form against the generic RKL kernel on the
/// analytic backend, over random mixtures (`K ≤ 5`, `d ≤ 3`). Every fourth
/// trial uses `α = 0`. The largest discrepancy of the variant carrying an
/// extra `f_k(x)` factor is reported under `verbatim_max_abs_diff`.
pub fn check_gaussian_identity(trials: usize, seed: u64, tol: f64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("identity:gaussian_gamma", tol);
    for trial in 0..trials {
        let k = rng.random_range(1..=5);
        let d = rng.random_range(1..=3);
        let gmm = random_mixture(&mut rng, k, d);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y = rng.random_range(0..k);
        let spec = GuidanceSpec {
            kind: GuidanceKind::Rkl,
            tau1: rng.random_range(0.5..2.0),
            tau2: rng.random_range(0.5..2.0),
            alpha: if trial % 4 == 3 { 0.0 } else { rng.random_range(0.05..1.0) },
            epsilon: rng.random_range(0.05..0.5),
            ..GuidanceSpec::default()
        };
        let model = AnalyticClassifier::new(gmm.clone());
        let outcome = (|| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
            let q = TargetDistribution::new(k, y, spec.epsilon)?;
            let closed = gaussian_rkl_grad(&gmm, &x, y, spec.tau1, spec.tau2, spec.alpha, &q)?;
            let verbatim = gaussian_rkl_grad_verbatim(&gmm, &x, y, spec.tau1, spec.tau2, spec.alpha, &q)?;
            let generic = guidance_grad(&model, &x, y, &spec, 0.0)?.value;
            Ok((closed, verbatim, generic))
        })();
        match outcome {
            Ok((closed, verbatim, generic)) => {
                tally.record(&closed, &generic, &x);
                let diff = verbatim
                    .iter()
                    .zip(&generic)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                tally.note_max("verbatim_max_abs_diff", diff);
            }
            Err(_) => tally.record(&[f64::NAN], &[0.0], &x),
        }
    }
    tally.finish()
}

fn random_simplex(rng: &mut ChaCha8Rng, k: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(floor..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// `divergence_value` against [`brute_force_divergence`] on random pairs.
pub fn check_divergence_values(kind: DivergenceKind, trials: usize, seed: u64, tol: f64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new(format!("definition:{}", kind.name()), tol);
    for _ in 0..trials {
        let k = rng.random_range(2..=10);
        let q = random_simplex(&mut rng, k, 0.01);
        let p = random_simplex(&mut rng, k, 0.0);
        match (divergence_value(kind, &q, &p), brute_force_divergence(kind, &q, &p)) {
            (Ok(a), Ok(b)) => tally.record(&[a], &[b], &p),
            _ => tally.record(&[f64::NAN], &[0.0], &p),
        }
    }
    tally.finish()
}

/// The specialized closed form of each divergence against the generic
/// `w_f` machinery.
pub fn check_specialization(kind: DivergenceKind, trials: usize, seed: u64, tol: f64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new(format!("identity:{}_specialization", kind.name()), tol);
    let gk = match kind {
        DivergenceKind::Rkl => GuidanceKind::Rkl,
        DivergenceKind::Fkl => GuidanceKind::Fkl,
        DivergenceKind::Js => GuidanceKind::Js,
        DivergenceKind::Hellinger => GuidanceKind::Hellinger,
    };
    for trial in 0..trials {
        let inst = random_instance(&mut rng, trial);
        let spec = GuidanceSpec {
            kind: gk,
            tau1: inst.tau1,
            tau2: inst.tau2,
            alpha: inst.alpha,
            epsilon: inst.epsilon,
            ..GuidanceSpec::default()
        };
        let model = inst.model.as_ref();
        let outcome = (|| -> Result<(Vec<f64>, Vec<f64>)> {
            let q = TargetDistribution::new(model.num_classes(), inst.y, inst.epsilon)?;
            let special = corollary_guidance_grad(model, &inst.x, inst.y, &spec, &q)?.value;
            let generic = kernel_gradient(GuidanceOracle::divergence(kind), &inst)?;
            Ok((special, generic))
        })();
        match outcome {
            Ok((s, g)) => tally.record(&s, &g, &inst.x),
            Err(_) => tally.record(&[f64::NAN], &[0.0], &inst.x),
        }
    }
    tally.finish()
}

/// RKL regularizer equals `α(Σ_i q_i ∇f_i − Σ_j p_j ∇f_j)`.
pub fn check_rkl_decomposition(trials: usize, seed: u64, tol: f64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("identity:rkl_decomposition", tol);
    for trial in 0..trials {
        let inst = random_instance(&mut rng, trial);
        let outcome = (|| -> Result<(Vec<f64>, Vec<f64>)> {
            let rkl = kernel_gradient(GuidanceOracle::divergence(DivergenceKind::Rkl), &inst)?;
            let base = kernel_gradient(GuidanceOracle::Base, &inst)?;
            let f = inst.model.logits(&inst.x)?;
            let grads = inst.model.logit_grads(&inst.x)?;
            let p = probabilities(&f);
            let q = smoothed_target(f.len(), inst.y, inst.epsilon);
            let d = inst.x.len();
            let expected: Vec<f64> = (0..d)
                .map(|c| {
                    let toward_target: f64 = q.iter().zip(&grads).map(|(qi, g)| qi * g[c]).sum();
                    let current: f64 = p.iter().zip(&grads).map(|(pi, g)| pi * g[c]).sum();
                    inst.alpha * (toward_target - current)
                })
                .collect();
            let reg: Vec<f64> = rkl.iter().zip(&base).map(|(a, b)| a - b).collect();
            Ok((reg, expected))
        })();
        match outcome {
            Ok((r, e)) => tally.record(&r, &e, &inst.x),
            Err(_) => tally.record(&[f64::NAN], &[0.0], &inst.x),
        }
    }
    tally.finish()
}

/// `∂D_JS/∂p_i = ½ log(p_i/m_i)` with `m = (p + q)/2`, by central differences
/// in the unconstrained coordinates of `p`.
pub fn check_js_partial(trials: usize, seed: u64, tol: f64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("identity:js_partial", tol);
    let cfg = FiniteDiffConfig::default();
    for _ in 0..trials {
        let k = rng.random_range(2..=10);
        let q = random_simplex(&mut rng, k, 0.01);
        let p = random_simplex(&mut rng, k, 0.01);
        let closed: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a / (0.5 * (a + b))).ln()).collect();
        match finite_diff_grad(|pp| Ok(js_unconstrained(&q, pp)), &p, &cfg) {
            Ok(fd) => tally.record(&fd, &closed, &p),
            Err(_) => tally.record(&[f64::NAN], &[0.0], &p),
        }
    }
    tally.finish()
}

/// Settings for [`run_oracles`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSuite {
    pub trials: usize,
    pub seed: u64,
    /// JS weight convention fed to the JS gradient check.
    pub js_weight: JsWeight,
}

impl Default for OracleSuite {
    fn default() -> Self {
        Self {
            trials: DEFAULT_TRIALS,
            seed: 0,
            js_weight: JsWeight::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleBundle {
    pub reports: Vec<OracleReport>,
}

impl OracleBundle {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &OracleReport> + '_ {
        self.reports.iter().filter(|r| !r.passed)
    }
}

/// Every oracle with the given trial budget. Each check gets its own seed
/// derived from `suite.seed` and its position in the list.
pub fn run_oracles(suite: &OracleSuite) -> OracleBundle {
    let mut reports = Vec::new();
    let mut next_seed = {
        let mut i = 0u64;
        move || {
            i += 1;
            suite.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i)
        }
    };
    let n = suite.trials;
    reports.push(check_guidance_grad(GuidanceOracle::Base, n, next_seed(), GRADIENT_TOL));
    reports.push(check_guidance_grad(
        GuidanceOracle::Entropy { zero_lambda: false },
        n,
        next_seed(),
        GRADIENT_TOL,
    ));
    for kind in DivergenceKind::ALL {
        let which = GuidanceOracle::Divergence {
            kind,
            js_weight: if kind == DivergenceKind::Js {
                suite.js_weight
            } else {
                JsWeight::default()
            },
        };
        reports.push(check_guidance_grad(which, n, next_seed(), GRADIENT_TOL));
    }
    for kind in DivergenceKind::ALL {
        reports.push(check_specialization(kind, n, next_seed(), IDENTITY_TOL));
    }
    reports.push(check_rkl_decomposition(n, next_seed(), IDENTITY_TOL));
    reports.push(check_js_partial(n, next_seed(), 1e-6));
    reports.push(check_gaussian_identity(n.max(1) * 2, next_seed(), GAUSSIAN_TOL));
    for kind in DivergenceKind::ALL {
        reports.push(check_divergence_values(kind, n, next_seed(), 1e-12));
    }
    OracleBundle { reports }
}
