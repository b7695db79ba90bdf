use serde::{Deserialize, Serialize};

use crate::error::{check_dim, input, Result};
use crate::prob::argmax;

/// Per-sample confidence and correctness, the input of every ECE measure.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBatch {
    confidences: Vec<f64>,
    predicted: Vec<usize>,
    labels: Vec<usize>,
}

impl CalibrationBatch {
    pub fn new(confidences: Vec<f64>, predicted: Vec<usize>, labels: Vec<usize>) -> Result<Self> {
        check_dim("predicted labels", predicted.len(), confidences.len())?;
        check_dim("true labels", labels.len(), confidences.len())?;
        if confidences.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return input("confidences must lie in [0, 1]");
        }
        Ok(Self {
            confidences,
            predicted,
            labels,
        })
    }

    /// Builds the batch from predicted class distributions; confidence is the
    /// largest probability and the prediction its (lowest) argmax.
    pub fn from_probabilities(probs: &[Vec<f64>], labels: &[usize]) -> Result<Self> {
        check_dim("true labels", labels.len(), probs.len())?;
        let predicted: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
        let confidences = probs
            .iter()
            .zip(&predicted)
            .map(|(p, &k)| p[k].clamp(0.0, 1.0))
            .collect();
        Self::new(confidences, predicted, labels.to_vec())
    }

    /// Batch with explicit correctness flags; labels are synthesized.
    pub fn from_correctness(confidences: Vec<f64>, correct: &[bool]) -> Result<Self> {
        check_dim("correctness flags", correct.len(), confidences.len())?;
        let predicted = vec![0; correct.len()];
        let labels = correct.iter().map(|&c| usize::from(!c)).collect();
        Self::new(confidences, predicted, labels)
    }

    pub fn len(&self) -> usize {
        self.confidences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.confidences.is_empty()
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }

    pub fn correctness(&self) -> impl Iterator<Item = f64> + '_ {
        self.predicted
            .iter()
            .zip(&self.labels)
            .map(|(p, y)| if p == y { 1.0 } else { 0.0 })
    }

    pub fn accuracy(&self) -> f64 {
        self.correctness().sum::<f64>() / self.len() as f64
    }
}

/// Index of the bin `((b-1)/B, b/B]` holding `p`; zero goes to the first bin.
pub(crate) fn bin_index(p: f64, bins: usize) -> usize {
    let b = bins as f64;
    let mut idx = ((p * b).ceil() as isize - 1).clamp(0, bins as isize - 1) as usize;
    while idx > 0 && p <= idx as f64 / b {
        idx -= 1;
    }
    while idx + 1 < bins && p > (idx + 1) as f64 / b {
        idx += 1;
    }
    idx
}

/// Smooth ECE contribution collected in one confidence bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinContribution {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Sum of `√(r² + β)` over the bin divided by the batch size.
    pub contribution: f64,
}

fn check_smooth_args(batch: &CalibrationBatch, beta: f64, bins: usize) -> Result<()> {
    if batch.is_empty() {
        return input("calibration batch is empty");
    }
    if !(beta > 0.0) {
        return input(format!("smoothing constant must be positive, got {beta}"));
    }
    if bins == 0 {
        return input("bin count must be at least 1");
    }
    Ok(())
}

/// `(1/n) Σ_i √((p̂_i − a_i)² + β)`.
///
/// Every sample lands in exactly one bin, so the value does not depend on the
/// bin count; use [`smooth_ece_bins`] for the per-bin breakdown.
pub fn smooth_ece_loss(batch: &CalibrationBatch, beta: f64, bins: usize) -> Result<f64> {
    Ok(smooth_ece_bins(batch, beta, bins)?
        .iter()
        .map(|b| b.contribution)
        .sum())
}

pub fn smooth_ece_bins(batch: &CalibrationBatch, beta: f64, bins: usize) -> Result<Vec<BinContribution>> {
    check_smooth_args(batch, beta, bins)?;
    let n = batch.len() as f64;
    let mut out: Vec<BinContribution> = (0..bins)
        .map(|b| BinContribution {
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            count: 0,
            contribution: 0.0,
        })
        .collect();
    for (p, a) in batch.confidences().iter().zip(batch.correctness()) {
        let bin = &mut out[bin_index(*p, bins)];
        bin.count += 1;
        bin.contribution += ((p - a).powi(2) + beta).sqrt() / n;
    }
    Ok(out)
}

/// Standard binned expected calibration error.
pub fn binned_ece(batch: &CalibrationBatch, bins: usize) -> Result<f64> {
    if batch.is_empty() {
        return input("calibration batch is empty");
    }
    if bins == 0 {
        return input("bin count must be at least 1");
    }
    let mut count = vec![0usize; bins];
    let mut conf = vec![0.0; bins];
    let mut acc = vec![0.0; bins];
    for (p, a) in batch.confidences().iter().zip(batch.correctness()) {
        let b = bin_index(*p, bins);
        count[b] += 1;
        conf[b] += p;
        acc[b] += a;
    }
    let n = batch.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let nb = count[b] as f64;
            (nb / n) * (conf[b] / nb - acc[b] / nb).abs()
        })
        .sum())
}
