//! Mini-batch SGD on cross-entropy plus a weighted smooth ECE term, with
//! hand-derived gradients for the affine softmax backend.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, input, numeric, Result};
use crate::prob::{argmax, log_softmax};

use super::{AffineClassifier, LogitModel, DEFAULT_ECE_WEIGHT, DEFAULT_SMOOTHING};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub label: usize,
}

impl LabeledPoint {
    pub fn new(x: Vec<f64>, label: usize) -> Self {
        Self { x, label }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the smooth ECE term.
    pub lambda: f64,
    pub beta: f64,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            lambda: DEFAULT_ECE_WEIGHT,
            beta: DEFAULT_SMOOTHING,
            lr: 0.05,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return input("epochs and batch_size must be at least 1");
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return input(format!("lambda must be a finite non-negative number, got {}", self.lambda));
        }
        if !(self.beta > 0.0) {
            return input(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return input(format!("learning rate must be finite and non-negative, got {}", self.lr));
        }
        Ok(())
    }
}

fn check_batch(model: &AffineClassifier, batch: &[LabeledPoint]) -> Result<()> {
    if batch.is_empty() {
        return input("training batch is empty");
    }
    for p in batch {
        check_dim("training point", p.x.len(), model.input_dim())?;
        if p.label >= model.num_classes() {
            return input(format!("label {} out of range for {} classes", p.label, model.num_classes()));
        }
    }
    Ok(())
}

/// Mean cross-entropy plus `lambda` times the mean smooth ECE residual.
pub fn finetune_loss(model: &AffineClassifier, batch: &[LabeledPoint], lambda: f64, beta: f64) -> Result<f64> {
    check_batch(model, batch)?;
    let n = batch.len() as f64;
    let mut ce = 0.0;
    let mut ece = 0.0;
    for point in batch {
        let logp = log_softmax(&model.logits_unchecked(&point.x));
        ce -= logp[point.label];
        let top = argmax(&logp);
        let a = if top == point.label { 1.0 } else { 0.0 };
        let conf = logp[top].exp();
        ece += ((conf - a).powi(2) + beta).sqrt();
    }
    Ok(ce / n + lambda * ece / n)
}

/// Gradient of [`finetune_loss`] with respect to `(W, c)`.
///
/// The ECE term differentiates through the confidence `max_j p_j` only, at
/// the argmax (lowest index on ties); correctness is treated as a constant.
pub fn finetune_gradient(
    model: &AffineClassifier,
    batch: &[LabeledPoint],
    lambda: f64,
    beta: f64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    check_batch(model, batch)?;
    let k = model.num_classes();
    let d = model.input_dim();
    let n = batch.len() as f64;
    let mut grad_w = vec![vec![0.0; d]; k];
    let mut grad_c = vec![0.0; k];
    for point in batch {
        let p: Vec<f64> = log_softmax(&model.logits_unchecked(&point.x))
            .into_iter()
            .map(f64::exp)
            .collect();
        let top = argmax(&p);
        let a = if top == point.label { 1.0 } else { 0.0 };
        let residual = p[top] - a;
        let slope = residual / (residual * residual + beta).sqrt();
        // ∂/∂z_j of CE is p_j − 1[j=y]; of √((p_m−a)²+β) is slope·p_m(1[j=m] − p_j).
        for j in 0..k {
            let onehot_y = if j == point.label { 1.0 } else { 0.0 };
            let onehot_m = if j == top { 1.0 } else { 0.0 };
            let dz = (p[j] - onehot_y) + lambda * slope * p[top] * (onehot_m - p[j]);
            let dz = dz / n;
            grad_c[j] += dz;
            for (g, xi) in grad_w[j].iter_mut().zip(&point.x) {
                *g += dz * xi;
            }
        }
    }
    Ok((grad_w, grad_c))
}

/// ECE-regularized fine-tuning of an affine classifier. Deterministic in
/// `cfg.seed`; aborts if the loss becomes non-finite.
pub fn finetune_ece(
    model: &AffineClassifier,
    dataset: &[LabeledPoint],
    cfg: &FinetuneConfig,
) -> Result<AffineClassifier> {
    cfg.validate()?;
    check_batch(model, dataset)?;
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset[i].clone()));
            let loss = finetune_loss(&model, &batch, cfg.lambda, cfg.beta)?;
            if !loss.is_finite() {
                return numeric(format!("non-finite fine-tuning loss at epoch {epoch}, step {step}"));
            }
            let (gw, gc) = finetune_gradient(&model, &batch, cfg.lambda, cfg.beta)?;
            let (w, c) = model.weights_mut();
            for (row, grow) in w.iter_mut().zip(&gw) {
                for (wi, gi) in row.iter_mut().zip(grow) {
                    *wi -= cfg.lr * gi;
                }
            }
            for (ci, gi) in c.iter_mut().zip(&gc) {
                *ci -= cfg.lr * gi;
            }
        }
    }
    Ok(model)
}
