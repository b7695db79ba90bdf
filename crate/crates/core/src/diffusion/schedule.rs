use serde::{Deserialize, Serialize};

use crate::error::{check_dim, input, Result};

/// Linear-β DDPM noise schedule. Arrays are stored 0-based; accessors take
/// the 1-based step `t ∈ [1, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    posterior_var: Vec<f64>,
}

/// `β` interpolated linearly from `beta_start` to `beta_end` over `steps`.
pub fn build_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return input("schedule needs at least one step");
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return input(format!(
            "need 0 < beta_start <= beta_end < 1, got beta_start={beta_start}, beta_end={beta_end}"
        ));
    }
    let beta = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    NoiseSchedule::from_betas(beta)
}

impl NoiseSchedule {
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return input("schedule needs at least one step");
        }
        if beta.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return input("every beta must lie in (0, 1)");
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let posterior_var = (0..beta.len())
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
                (1.0 - prev) / (1.0 - alpha_bar[i]) * beta[i]
            })
            .collect();
        Ok(Self {
            beta,
            alpha,
            alpha_bar,
            posterior_var,
        })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn posterior_variances(&self) -> &[f64] {
        &self.posterior_var
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    /// `ᾱ_{t−1}`, with `ᾱ_0 = 1`.
    pub fn alpha_bar_prev(&self, t: usize) -> f64 {
        if t == 1 {
            1.0
        } else {
            self.alpha_bar[t - 2]
        }
    }

    /// `β̃_t = (1 − ᾱ_{t−1}) / (1 − ᾱ_t) · β_t`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.posterior_var[t - 1]
    }

    /// Unguided reverse mean `(x_t − β_t/√(1−ᾱ_t) ε) / √α_t`.
    pub fn posterior_mean(&self, x_t: &[f64], eps: &[f64], t: usize) -> Result<Vec<f64>> {
        check_dim("noise prediction", eps.len(), x_t.len())?;
        if t == 0 || t > self.steps() {
            return input(format!("step {t} outside [1, {}]", self.steps()));
        }
        let coef = self.beta(t) / (1.0 - self.alpha_bar(t)).sqrt();
        let scale = 1.0 / self.alpha(t).sqrt();
        Ok(x_t.iter().zip(eps).map(|(x, e)| scale * (x - coef * e)).collect())
    }
}

/// `x̂₀ = (x_t − √(1−ᾱ_t) ε) / √ᾱ_t`.
pub fn predict_x0(x_t: &[f64], eps: &[f64], alpha_bar_t: f64) -> Result<Vec<f64>> {
    check_dim("noise prediction", eps.len(), x_t.len())?;
    if !(alpha_bar_t > 0.0 && alpha_bar_t <= 1.0) {
        return input(format!("alpha_bar must lie in (0, 1], got {alpha_bar_t}"));
    }
    let noise = (1.0 - alpha_bar_t).sqrt();
    let scale = alpha_bar_t.sqrt();
    Ok(x_t.iter().zip(eps).map(|(x, e)| (x - noise * e) / scale).collect())
}

/// `ε = −√(1−ᾱ_t) ∇log p_t(x_t)`.
pub fn eps_from_score(x_t: &[f64], score_t: &[f64], alpha_bar_t: f64) -> Result<Vec<f64>> {
    check_dim("score", score_t.len(), x_t.len())?;
    if !(0.0..1.0).contains(&alpha_bar_t) {
        return input(format!("alpha_bar must lie in [0, 1), got {alpha_bar_t}"));
    }
    let noise = (1.0 - alpha_bar_t).sqrt();
    Ok(score_t.iter().map(|s| -noise * s).collect())
}
