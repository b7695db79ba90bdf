//! Small log-space helpers shared by the kernels.

/// `log Σ exp(v)` with max subtraction. Returns `-inf` for an empty slice.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn log_softmax(values: &[f64]) -> Vec<f64> {
    let lse = logsumexp(values);
    values.iter().map(|v| v - lse).collect()
}

pub fn softmax(values: &[f64]) -> Vec<f64> {
    log_softmax(values).into_iter().map(f64::exp).collect()
}

/// `softmax(scale * values)`.
pub fn tempered_softmax(values: &[f64], scale: f64) -> Vec<f64> {
    let scaled: Vec<f64> = values.iter().map(|v| scale * v).collect();
    softmax(&scaled)
}

/// Shannon entropy in nats; zero-probability entries contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&pi| pi > 0.0).map(|pi| pi * pi.ln()).sum::<f64>()
}

/// Index of the largest entry, ties broken toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
