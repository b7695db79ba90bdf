use serde::{Deserialize, Serialize};

use crate::error::{check_dim, input, Error, Result};

use super::LogitModel;

/// Multiclass logistic regression: `f(x) = W x + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AffineFile", into = "AffineFile")]
pub struct AffineClassifier {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    dim: usize,
}

/// On-disk layout of an affine classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct AffineFile {
    num_classes: usize,
    input_dim: usize,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl AffineClassifier {
    /// `weights` is K×d (one row per class), `bias` has length K.
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return input("affine classifier needs at least one class");
        }
        check_dim("affine bias", bias.len(), k)?;
        let dim = weights[0].len();
        if dim == 0 {
            return input("affine classifier input dimension must be at least 1");
        }
        for row in &weights {
            check_dim("affine weight row", row.len(), dim)?;
        }
        if weights.iter().flatten().chain(&bias).any(|v| !v.is_finite()) {
            return input("affine parameters must be finite");
        }
        Ok(Self { weights, bias, dim })
    }

    pub fn zeros(dim: usize, classes: usize) -> Self {
        Self {
            weights: vec![vec![0.0; dim]; classes],
            bias: vec![0.0; classes],
            dim,
        }
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Multiplies every logit by `factor` (temperature `1/factor`).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            weights: self
                .weights
                .iter()
                .map(|row| row.iter().map(|w| w * factor).collect())
                .collect(),
            bias: self.bias.iter().map(|b| b * factor).collect(),
            dim: self.dim,
        }
    }

    pub(crate) fn weights_mut(&mut self) -> (&mut Vec<Vec<f64>>, &mut Vec<f64>) {
        (&mut self.weights, &mut self.bias)
    }

    pub(crate) fn logits_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }
}

impl LogitModel for AffineClassifier {
    fn num_classes(&self) -> usize {
        self.weights.len()
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("classifier input", x.len(), self.dim)?;
        Ok(self.logits_unchecked(x))
    }

    fn logit_grads(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_dim("classifier input", x.len(), self.dim)?;
        Ok(self.weights.clone())
    }
}

impl TryFrom<AffineFile> for AffineClassifier {
    type Error = Error;

    fn try_from(file: AffineFile) -> Result<Self> {
        let model = Self::new(file.weights, file.bias)?;
        check_dim("affine num_classes", model.num_classes(), file.num_classes)?;
        check_dim("affine input_dim", model.input_dim(), file.input_dim)?;
        Ok(model)
    }
}

impl From<AffineClassifier> for AffineFile {
    fn from(m: AffineClassifier) -> Self {
        Self {
            num_classes: m.weights.len(),
            input_dim: m.dim,
            weights: m.weights,
            bias: m.bias,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_gives_zero_logits() {
        let m = AffineClassifier::zeros(2, 3);
        assert_eq!(m.logits(&[4.0, -1.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn gradients_are_weight_rows() {
        let m = AffineClassifier::new(vec![vec![1.0, 2.0], vec![-3.0, 0.5]], vec![0.1, 0.2]).unwrap();
        assert_eq!(m.logit_grads(&[9.0, 9.0]).unwrap(), m.weights().to_vec());
        assert_eq!(m.logits(&[1.0, 1.0]).unwrap(), vec![3.1, -2.3]);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        assert!(AffineClassifier::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0.0, 0.0]).is_err());
        assert!(AffineClassifier::new(vec![vec![1.0]], vec![0.0, 0.0]).is_err());
        let m = AffineClassifier::zeros(2, 2);
        assert!(matches!(m.logits(&[1.0]), Err(Error::Input(_))));
    }

    #[test]
    fn file_dims_are_checked() {
        let ok = r#"{"num_classes":2,"input_dim":1,"weights":[[1.0],[2.0]],"bias":[0.0,0.0]}"#;
        assert!(serde_json::from_str::<AffineClassifier>(ok).is_ok());
        let bad = r#"{"num_classes":3,"input_dim":1,"weights":[[1.0],[2.0]],"bias":[0.0,0.0]}"#;
        assert!(serde_json::from_str::<AffineClassifier>(bad).is_err());
    }
}
