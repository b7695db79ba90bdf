//! Gaussian mixtures with exact densities, scores and forward-process marginals.
//!
//! Every component caches its Cholesky factor and precision matrix at
//! construction, so positive-definiteness is checked once and score or
//! posterior evaluations reduce to small matrix-vector products.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, input, numeric, Error, Result};
use crate::prob::logsumexp;

const WEIGHT_SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

/// Plain-data form of a mixture, as read from and written to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
struct Component {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    precision: DMatrix<f64>,
    /// `-(d log 2π + log det Σ) / 2`
    log_norm: f64,
}

impl Component {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>, index: usize) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return input(format!(
                "covariance {index} is {}x{}, expected {d}x{d}",
                cov.nrows(),
                cov.ncols()
            ));
        }
        if cov.iter().any(|v| !v.is_finite()) || mean.iter().any(|v| !v.is_finite()) {
            return input(format!("component {index} has non-finite parameters"));
        }
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOL {
                    return input(format!("covariance {index} is not symmetric"));
                }
            }
        }
        let chol = Cholesky::new(cov.clone()).ok_or_else(|| {
            Error::Input(format!("covariance {index} is not positive definite"))
        })?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let precision = chol.inverse();
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self {
            mean,
            cov,
            chol,
            precision,
            log_norm,
        })
    }

    fn mahalanobis_sq(&self, x: &DVector<f64>) -> f64 {
        let diff = x - &self.mean;
        diff.dot(&(&self.precision * &diff))
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(x)
    }

    /// `Σ⁻¹(μ − x)`
    fn score(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.precision * (&self.mean - x)
    }
}

/// A finite mixture of full-covariance Gaussians.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    components: Vec<Component>,
    dim: usize,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covariances: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return input("mixture needs at least one component");
        }
        if means.len() != k || covariances.len() != k {
            return input(format!(
                "mixture has {k} weights but {} means and {} covariances",
                means.len(),
                covariances.len()
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return input("mixture weights must be positive and finite");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return input(format!("mixture weights sum to {total}, expected 1"));
        }
        let dim = means[0].len();
        if dim == 0 {
            return input("mixture dimension must be at least 1");
        }
        let mut components = Vec::with_capacity(k);
        for (index, (mean, cov)) in means.into_iter().zip(covariances).enumerate() {
            check_dim("mixture mean", mean.len(), dim)?;
            if cov.len() != dim || cov.iter().any(|row| row.len() != dim) {
                return input(format!("covariance {index} must be {dim}x{dim}"));
            }
            let cov = DMatrix::from_fn(dim, dim, |i, j| cov[i][j]);
            components.push(Component::new(DVector::from_vec(mean), cov, index)?);
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            log_weights,
            components,
            dim,
        })
    }

    /// Mixture whose components all share the isotropic covariance `variance · I`.
    pub fn isotropic(weights: Vec<f64>, means: Vec<Vec<f64>>, variance: f64) -> Result<Self> {
        let d = means.first().map_or(0, Vec::len);
        let cov: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| if i == j { variance } else { 0.0 }).collect())
            .collect();
        let covs = vec![cov; means.len()];
        Self::new(weights, means, covs)
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean_of(&self, k: usize) -> &[f64] {
        self.components[k].mean.as_slice()
    }

    pub fn covariance_of(&self, k: usize) -> Vec<Vec<f64>> {
        let c = &self.components[k].cov;
        (0..self.dim).map(|i| (0..self.dim).map(|j| c[(i, j)]).collect()).collect()
    }

    pub fn to_spec(&self) -> MixtureSpec {
        MixtureSpec {
            weights: self.weights.clone(),
            means: (0..self.num_components()).map(|k| self.mean_of(k).to_vec()).collect(),
            covariances: (0..self.num_components()).map(|k| self.covariance_of(k)).collect(),
        }
    }

    fn point(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim("point", x.len(), self.dim)?;
        Ok(DVector::from_column_slice(x))
    }

    fn check_component(&self, k: usize) -> Result<()> {
        if k >= self.num_components() {
            return input(format!(
                "component index {k} out of range for {} components",
                self.num_components()
            ));
        }
        Ok(())
    }

    /// `log N(x; μ_k, Σ_k)`.
    pub fn component_log_density(&self, k: usize, x: &[f64]) -> Result<f64> {
        self.check_component(k)?;
        let x = self.point(x)?;
        Ok(self.components[k].log_density(&x))
    }

    /// `log b_k + log N(x; μ_k, Σ_k)` for every component.
    pub fn joint_log_densities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let x = self.point(x)?;
        Ok(self
            .components
            .iter()
            .zip(&self.log_weights)
            .map(|(c, lw)| lw + c.log_density(&x))
            .collect())
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        Ok(logsumexp(&self.joint_log_densities(x)?))
    }

    /// Component posterior `p(k | x)`, computed with log-sum-exp.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        let joint = self.joint_log_densities(x)?;
        if joint.iter().any(|v| !v.is_finite()) {
            return numeric("non-finite component log-density in posterior");
        }
        let lse = logsumexp(&joint);
        Ok(joint.iter().map(|v| (v - lse).exp()).collect())
    }

    /// Per-component scores `Σ_k⁻¹(μ_k − x)`.
    pub fn component_scores(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let x = self.point(x)?;
        Ok(self
            .components
            .iter()
            .map(|c| c.score(&x).as_slice().to_vec())
            .collect())
    }

    /// Mixture score `∇ log p(x) = Σ_k w_k(x) Σ_k⁻¹(μ_k − x)`.
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        let post = self.posterior(x)?;
        let xv = self.point(x)?;
        let mut out = DVector::zeros(self.dim);
        for (c, w) in self.components.iter().zip(&post) {
            out += c.score(&xv) * *w;
        }
        if out.iter().any(|v| !v.is_finite()) {
            return numeric("non-finite mixture score");
        }
        Ok(out.as_slice().to_vec())
    }

    /// Squared Mahalanobis distance of `x` to component `k`.
    pub fn mahalanobis_sq(&self, k: usize, x: &[f64]) -> Result<f64> {
        self.check_component(k)?;
        let x = self.point(x)?;
        Ok(self.components[k].mahalanobis_sq(&x))
    }

    /// Exact marginal of the forward process `x_t = √ᾱ x_0 + √(1−ᾱ) ε`.
    pub fn diffuse(&self, alpha_bar: f64) -> Result<Self> {
        if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
            return input(format!("alpha_bar must lie in (0, 1], got {alpha_bar}"));
        }
        let scale = alpha_bar.sqrt();
        let eye = DMatrix::<f64>::identity(self.dim, self.dim);
        let components = self
            .components
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let cov = &c.cov * alpha_bar + &eye * (1.0 - alpha_bar);
                // symmetrize to keep the exact-symmetry check happy after rounding
                let cov = (&cov + cov.transpose()) * 0.5;
                Component::new(&c.mean * scale, cov, k)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weights: self.weights.clone(),
            log_weights: self.log_weights.clone(),
            components,
            dim: self.dim,
        })
    }

    /// Mean of the mixture distribution.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = DVector::zeros(self.dim);
        for (c, w) in self.components.iter().zip(&self.weights) {
            m += &c.mean * *w;
        }
        m.as_slice().to_vec()
    }

    /// Covariance of the mixture distribution (law of total covariance).
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let m = DVector::from_vec(self.mean());
        let mut cov = DMatrix::zeros(self.dim, self.dim);
        for (c, w) in self.components.iter().zip(&self.weights) {
            let diff = &c.mean - &m;
            cov += (&c.cov + &diff * diff.transpose()) * *w;
        }
        (0..self.dim).map(|i| (0..self.dim).map(|j| cov[(i, j)]).collect()).collect()
    }

    /// Draws `n` labelled points. Deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<(Vec<f64>, usize)>> {
        if n == 0 {
            return input("sample count must be at least 1");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picker = WeightedIndex::new(&self.weights)
            .map_err(|e| Error::Input(format!("mixture weights: {e}")))?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let k = picker.sample(&mut rng);
            let c = &self.components[k];
            let z = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(&mut rng));
            let x = &c.mean + c.chol.l() * z;
            out.push((x.as_slice().to_vec(), k));
        }
        Ok(out)
    }
}

impl TryFrom<MixtureSpec> for GaussianMixture {
    type Error = Error;

    fn try_from(spec: MixtureSpec) -> Result<Self> {
        Self::new(spec.weights, spec.means, spec.covariances)
    }
}

impl From<GaussianMixture> for MixtureSpec {
    fn from(gmm: GaussianMixture) -> Self {
        gmm.to_spec()
    }
}

impl Serialize for GaussianMixture {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianMixture {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = MixtureSpec::deserialize(d)?;
        GaussianMixture::try_from(spec).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn two_mode_1d() -> GaussianMixture {
        GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![-2.0], vec![2.0]],
            vec![vec![vec![1.0]], vec![vec![1.0]]],
        )
        .unwrap()
    }

    fn random_mixture(rng: &mut ChaCha8Rng, k: usize, d: usize) -> GaussianMixture {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let head: f64 = weights[..k - 1].iter().sum();
        weights[k - 1] = 1.0 - head;
        let means = (0..k)
            .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let covs = (0..k)
            .map(|_| {
                let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                let c = &a * a.transpose() + DMatrix::identity(d, d) * 0.3;
                (0..d).map(|i| (0..d).map(|j| c[(i, j)]).collect()).collect()
            })
            .collect();
        GaussianMixture::new(weights, means, covs).unwrap()
    }

    /// Scalar normal log-density written out longhand.
    fn naive_normal_log_pdf(mean: f64, var: f64, x: f64) -> f64 {
        let z = (x - mean) * (x - mean) / var;
        -0.5 * z - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
    }

    #[test]
    fn standard_normal_log_density_at_mean() {
        let g = GaussianMixture::new(vec![1.0], vec![vec![0.0]], vec![vec![vec![1.0]]]).unwrap();
        let v = g.component_log_density(0, &[0.0]).unwrap();
        assert!((v - (-0.918_938_533_204_672_7)).abs() < 1e-12);

        let g2 = GaussianMixture::isotropic(vec![1.0], vec![vec![0.0, 0.0]], 1.0).unwrap();
        let v2 = g2.component_log_density(0, &[0.0, 0.0]).unwrap();
        assert!((v2 + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn scalar_log_density_matches_naive_formula() {
        let g = GaussianMixture::new(vec![1.0], vec![vec![1.0]], vec![vec![vec![4.0]]]).unwrap();
        let v = g.component_log_density(0, &[3.0]).unwrap();
        assert!((v - naive_normal_log_pdf(1.0, 4.0, 3.0)).abs() < 1e-13);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let g = two_mode_1d();
        assert!(matches!(g.component_log_density(0, &[0.0, 1.0]), Err(Error::Input(_))));
        assert!(matches!(g.component_log_density(5, &[0.0]), Err(Error::Input(_))));
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(GaussianMixture::new(vec![0.6, 0.6], vec![vec![0.0], vec![1.0]], vec![vec![vec![1.0]]; 2]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![vec![0.0]], vec![vec![vec![-1.0]]]).is_err());
        let asym = vec![vec![1.0, 0.5], vec![0.4, 1.0]];
        assert!(GaussianMixture::new(vec![1.0], vec![vec![0.0, 0.0]], vec![asym]).is_err());
        assert!(GaussianMixture::new(vec![0.0, 1.0], vec![vec![0.0], vec![1.0]], vec![vec![vec![1.0]]; 2]).is_err());
    }

    #[test]
    fn posterior_examples() {
        let same = GaussianMixture::new(vec![0.5, 0.5], vec![vec![1.0]; 2], vec![vec![vec![2.0]]; 2]).unwrap();
        let p = same.posterior(&[0.7]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);

        let single = GaussianMixture::new(vec![1.0], vec![vec![0.0]], vec![vec![vec![1.0]]]).unwrap();
        assert_eq!(single.posterior(&[3.0]).unwrap(), vec![1.0]);

        let g = two_mode_1d();
        let p0 = g.posterior(&[0.0]).unwrap();
        assert!((p0[0] - 0.5).abs() < 1e-15);
        let f0 = naive_normal_log_pdf(-2.0, 1.0, 2.0).exp();
        let f1 = naive_normal_log_pdf(2.0, 1.0, 2.0).exp();
        let p2 = g.posterior(&[2.0]).unwrap();
        assert!((p2[1] - f1 / (f0 + f1)).abs() < 1e-14);
    }

    #[test]
    fn score_examples() {
        let g = GaussianMixture::isotropic(vec![1.0], vec![vec![1.0, -1.0]], 4.0).unwrap();
        assert_eq!(g.score(&[1.0, -1.0]).unwrap(), vec![0.0, 0.0]);
        let s = g.score(&[3.0, 1.0]).unwrap();
        assert!((s[0] + 0.5).abs() < 1e-15 && (s[1] + 0.5).abs() < 1e-15);
        assert!(two_mode_1d().score(&[0.0]).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn score_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for trial in 0..120 {
            let d = 1 + trial % 2;
            let g = random_mixture(&mut rng, 1 + trial % 5, d);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s = g.score(&x).unwrap();
            let mut fd = vec![0.0; d];
            for i in 0..d {
                let h = 1e-5 * (1.0 + x[i].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                fd[i] = (g.log_density(&xp).unwrap() - g.log_density(&xm).unwrap()) / (2.0 * h);
            }
            let err: f64 = s.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = s.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
            worst = worst.max(err / scale);
        }
        assert!(worst < 1e-6, "worst relative error {worst}");
    }

    #[test]
    fn posterior_agrees_with_naive_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let g = random_mixture(&mut rng, 4, 2);
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let p = g.posterior(&x).unwrap();
            let dens: Vec<f64> = (0..4)
                .map(|k| g.weights()[k] * g.component_log_density(k, &x).unwrap().exp())
                .collect();
            let total: f64 = dens.iter().sum();
            for k in 0..4 {
                assert!((p[k] - dens[k] / total).abs() < 1e-10);
            }
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diffuse_examples() {
        let g = two_mode_1d();
        let same = g.diffuse(1.0).unwrap();
        assert_eq!(same.to_spec(), g.to_spec());

        let tiny = g.diffuse(1e-12).unwrap();
        for k in 0..2 {
            assert!(tiny.mean_of(k)[0].abs() < 1e-5);
            assert!((tiny.covariance_of(k)[0][0] - 1.0).abs() < 1e-10);
        }

        let single = GaussianMixture::new(vec![1.0], vec![vec![2.0]], vec![vec![vec![1.0]]]).unwrap();
        let d = single.diffuse(0.25).unwrap();
        assert!((d.mean_of(0)[0] - 1.0).abs() < 1e-15);
        assert!((d.covariance_of(0)[0][0] - 1.0).abs() < 1e-15);

        // Monte-Carlo forward noising agrees with the closed form.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = single
            .sample(100_000, 9)
            .unwrap()
            .into_iter()
            .map(|(x, _)| 0.5 * x[0] + 0.75f64.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((m - 1.0).abs() < 1e-2);
        assert!((v - 1.0).abs() < 1e-2);

        assert!(matches!(g.diffuse(0.0), Err(Error::Input(_))));
        assert!(matches!(g.diffuse(1.5), Err(Error::Input(_))));
    }

    #[test]
    fn diffuse_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = random_mixture(&mut rng, 3, 2);
        let (a, b) = (0.7, 0.4);
        let twice = g.diffuse(a).unwrap().diffuse(b).unwrap();
        let once = g.diffuse(a * b).unwrap();
        for k in 0..3 {
            for i in 0..2 {
                assert!((twice.mean_of(k)[i] - once.mean_of(k)[i]).abs() < 1e-12);
                for j in 0..2 {
                    assert!((twice.covariance_of(k)[i][j] - once.covariance_of(k)[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_matches_moments() {
        let g = GaussianMixture::new(vec![1.0], vec![vec![0.5]], vec![vec![vec![2.0]]]).unwrap();
        assert_eq!(g.sample(1, 42).unwrap(), g.sample(1, 42).unwrap());
        assert!(g.sample(0, 1).is_err());

        let two = GaussianMixture::new(vec![0.3, 0.7], vec![vec![0.0], vec![5.0]], vec![vec![vec![1.0]]; 2]).unwrap();
        let draws = two.sample(100_000, 7).unwrap();
        let frac = draws.iter().filter(|(_, k)| *k == 0).count() as f64 / draws.len() as f64;
        assert!((frac - 0.3).abs() < 0.01);

        let iso = GaussianMixture::isotropic(vec![1.0], vec![vec![0.0, 0.0]], 1.0).unwrap();
        let draws = iso.sample(100_000, 8).unwrap();
        let n = draws.len() as f64;
        let mut c = [[0.0; 2]; 2];
        let m = [
            draws.iter().map(|(x, _)| x[0]).sum::<f64>() / n,
            draws.iter().map(|(x, _)| x[1]).sum::<f64>() / n,
        ];
        for (x, _) in &draws {
            for i in 0..2 {
                for j in 0..2 {
                    c[i][j] += (x[i] - m[i]) * (x[j] - m[j]) / (n - 1.0);
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((c[i][j] - target).abs() < 0.05);
            }
        }
    }

    #[test]
    fn mixture_moments() {
        let g = two_mode_1d();
        assert!(g.mean()[0].abs() < 1e-15);
        assert!((g.covariance()[0][0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn serde_round_trip_validates() {
        let g = two_mode_1d();
        let text = serde_json::to_string(&g).unwrap();
        let back: GaussianMixture = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_spec(), g.to_spec());
        let bad = r#"{"weights":[0.5,0.6],"means":[[0],[1]],"covariances":[[[1]],[[1]]]}"#;
        assert!(serde_json::from_str::<GaussianMixture>(bad).is_err());
    }
}
