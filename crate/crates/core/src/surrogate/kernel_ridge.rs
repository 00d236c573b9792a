use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::error::{LssError, Result};

/// Smallest weight used when forming the per-sample penalty `ridge / w`.
const MIN_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    Rbf,
    /// `k(x, y) = 1 + x . y`
    Linear,
}

/// Weighted kernel ridge regression with a free intercept.
///
/// Minimizes `sum_i w_i (y_i - b - f(x_i))^2 + ridge * |f|_H^2` over the
/// intercept `b` and `f` in the kernel's RKHS. With the representer
/// `f = sum_j c_j k(x_j, .)` this is the bordered system
///
/// ```text
/// [ K + ridge W^-1   1 ] [c]   [y]
/// [ 1^T              0 ] [b] = [0]
/// ```
///
/// solved by one Cholesky factorization of the upper-left block.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRidgeModel {
    pub kernel: KernelKind,
    pub bandwidth: f64,
    pub ridge: f64,
    centers: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
    intercept: f64,
}

impl KernelRidgeModel {
    pub fn new(kernel: KernelKind, bandwidth: f64, ridge: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() || !(ridge > 0.0) || !ridge.is_finite() {
            return Err(LssError::config(format!(
                "kernel ridge needs positive bandwidth and ridge (got {bandwidth}, {ridge})"
            )));
        }
        Ok(Self {
            kernel,
            bandwidth,
            ridge,
            centers: Vec::new(),
            coefficients: Vec::new(),
            intercept: 0.0,
        })
    }

    pub fn rbf(bandwidth: f64, ridge: f64) -> Result<Self> {
        Self::new(KernelKind::Rbf, bandwidth, ridge)
    }

    fn k(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kernel {
            KernelKind::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * self.bandwidth * self.bandwidth)).exp()
            }
            KernelKind::Linear => 1.0 + a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>(),
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// Max absolute residual of the fitted coefficients in the linear system,
    /// relative to the right-hand side scale.
    pub fn system_residual(&self, weights: &[f64], targets: &[f64]) -> f64 {
        let n = self.centers.len();
        let mut worst = 0.0f64;
        let scale = targets.iter().fold(1.0f64, |m, t| m.max(t.abs()));
        for i in 0..n {
            let mut row =
                self.intercept + self.ridge / weights[i].max(MIN_WEIGHT) * self.coefficients[i];
            for j in 0..n {
                row += self.k(&self.centers[i], &self.centers[j]) * self.coefficients[j];
            }
            worst = worst.max((row - targets[i]).abs() / scale);
        }
        let sum_c: f64 = self.coefficients.iter().sum();
        let c_scale = self.coefficients.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        worst.max(sum_c.abs() / c_scale)
    }
}

impl Regressor for KernelRidgeModel {
    fn fit(&mut self, inputs: &[Vec<f64>], targets: &[f64], weights: &[f64]) -> Result<()> {
        super::check_dataset(inputs, targets, weights, 1)?;
        let n = inputs.len();
        let a = DMatrix::from_fn(n, n, |i, j| {
            let mut v = self.k(&inputs[i], &inputs[j]);
            if i == j {
                v += self.ridge / weights[i].max(MIN_WEIGHT);
            }
            v
        });
        let chol = a
            .cholesky()
            .ok_or_else(|| LssError::Linalg("kernel matrix is not positive definite".into()))?;
        let y = DVector::from_column_slice(targets);
        let ones = DVector::from_element(n, 1.0);
        let ay = chol.solve(&y);
        let a1 = chol.solve(&ones);
        let b = ones.dot(&ay) / ones.dot(&a1);
        let c = chol.solve(&(y - DVector::from_element(n, b)));
        if !b.is_finite() || c.iter().any(|v| !v.is_finite()) {
            return Err(LssError::Linalg(
                "kernel ridge solve produced non-finite values".into(),
            ));
        }
        self.centers = inputs.to_vec();
        self.coefficients = c.iter().copied().collect();
        self.intercept = b;
        Ok(())
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .centers
                .iter()
                .zip(&self.coefficients)
                .map(|(c, w)| w * self.k(c, x))
                .sum::<f64>()
    }
}
