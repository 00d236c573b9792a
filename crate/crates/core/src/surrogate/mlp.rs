use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Regressor;
use crate::error::{LssError, Result};

/// Stop once the best loss has improved by less than this over `PLATEAU_WINDOW` epochs.
const PLATEAU_TOL: f64 = 1e-6;
const PLATEAU_WINDOW: usize = 25;

/// Fully connected tanh network trained by full-batch gradient descent on a
/// weighted squared loss.
///
/// Targets are standardized internally. Dropout (inverted) applies to hidden
/// activations during training only. The parameters with the lowest
/// full-batch loss seen during training are kept.
#[derive(Debug, Clone)]
pub struct MlpModel {
    /// Hidden layer widths; input and output sizes are implied by the data.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub max_epochs: usize,
    pub seed: u64,
    layers: Vec<(DMatrix<f64>, DVector<f64>)>,
    y_mean: f64,
    y_scale: f64,
    loss_history: Vec<f64>,
}

impl MlpModel {
    pub fn new(
        hidden: Vec<usize>,
        learning_rate: f64,
        dropout_rate: f64,
        max_epochs: usize,
        seed: u64,
    ) -> Result<Self> {
        if hidden.contains(&0)
            || !(learning_rate > 0.0)
            || !learning_rate.is_finite()
            || !(0.0..1.0).contains(&dropout_rate)
            || max_epochs == 0
        {
            return Err(LssError::config(format!(
                "invalid network settings: hidden {hidden:?}, lr {learning_rate}, \
                 dropout {dropout_rate}, epochs {max_epochs}"
            )));
        }
        Ok(Self {
            hidden,
            learning_rate,
            dropout_rate,
            max_epochs,
            seed,
            layers: Vec::new(),
            y_mean: 0.0,
            y_scale: 1.0,
            loss_history: Vec::new(),
        })
    }

    /// Best-so-far training loss after each epoch.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    fn init(&mut self, dim: usize, rng: &mut ChaCha8Rng) {
        let mut sizes = vec![dim];
        sizes.extend(&self.hidden);
        sizes.push(1);
        self.layers = sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let m = DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-limit..limit));
                (m, DVector::zeros(w[1]))
            })
            .collect();
    }

    /// Column-major batch forward pass; returns every layer's activations.
    fn forward(
        layers: &[(DMatrix<f64>, DVector<f64>)],
        x: &DMatrix<f64>,
        masks: Option<&[DMatrix<f64>]>,
    ) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x.clone()];
        let last = layers.len() - 1;
        for (l, (w, b)) in layers.iter().enumerate() {
            let mut z = w * acts.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l < last {
                z.apply(|v| *v = v.tanh());
                if let Some(m) = masks {
                    z.component_mul_assign(&m[l]);
                }
            }
            acts.push(z);
        }
        acts
    }

    fn loss(
        layers: &[(DMatrix<f64>, DVector<f64>)],
        x: &DMatrix<f64>,
        y: &[f64],
        w: &[f64],
    ) -> f64 {
        let out = Self::forward(layers, x, None).pop().unwrap();
        let wsum: f64 = w.iter().sum();
        out.iter()
            .zip(y)
            .zip(w)
            .map(|((o, t), wi)| wi * (o - t).powi(2))
            .sum::<f64>()
            / wsum
    }
}

impl Regressor for MlpModel {
    fn fit(&mut self, inputs: &[Vec<f64>], targets: &[f64], weights: &[f64]) -> Result<()> {
        super::check_dataset(inputs, targets, weights, 1)?;
        let n = inputs.len();
        let dim = inputs[0].len();
        let mut w: Vec<f64> = weights.to_vec();
        if w.iter().sum::<f64>() <= 0.0 {
            w = vec![1.0; n];
        }
        let wsum: f64 = w.iter().sum();
        self.y_mean = targets.iter().zip(&w).map(|(t, wi)| t * wi).sum::<f64>() / wsum;
        let var = targets
            .iter()
            .zip(&w)
            .map(|(t, wi)| wi * (t - self.y_mean).powi(2))
            .sum::<f64>()
            / wsum;
        self.y_scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
        let y: Vec<f64> = targets
            .iter()
            .map(|t| (t - self.y_mean) / self.y_scale)
            .collect();
        let x = DMatrix::from_fn(dim, n, |r, c| inputs[c][r]);

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.init(dim, &mut rng);
        if var <= 1e-24 {
            let last = self.layers.last_mut().unwrap();
            last.0.fill(0.0);
            last.1.fill(0.0);
            self.loss_history = vec![0.0];
            return Ok(());
        }
        let keep = 1.0 - self.dropout_rate;
        let mut best = self.layers.clone();
        let mut best_loss = Self::loss(&self.layers, &x, &y, &w);
        self.loss_history = Vec::with_capacity(self.max_epochs);
        let mut window_start = best_loss;
        let mut since_check = 0;

        for _ in 0..self.max_epochs {
            let masks: Option<Vec<DMatrix<f64>>> = (self.dropout_rate > 0.0).then(|| {
                self.hidden
                    .iter()
                    .map(|&h| {
                        DMatrix::from_fn(h, n, |_, _| {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect()
            });
            let acts = Self::forward(&self.layers, &x, masks.as_deref());
            let out = acts.last().unwrap();
            // dL/d(out) for L = sum w (o - y)^2 / sum w
            let mut delta = DMatrix::from_fn(1, n, |_, c| 2.0 * w[c] * (out[(0, c)] - y[c]) / wsum);
            for l in (0..self.layers.len()).rev() {
                let grad_w = &delta * acts[l].transpose();
                let grad_b = delta.column_sum();
                if l > 0 {
                    let mut back = self.layers[l].0.transpose() * &delta;
                    // acts[l] already includes the dropout scaling; recover tanh' from it
                    let a = &acts[l];
                    let mask = masks.as_ref().map(|m| &m[l - 1]);
                    for c in 0..n {
                        for r in 0..back.nrows() {
                            let (m, t) = match mask {
                                Some(m) if m[(r, c)] == 0.0 => (0.0, 0.0),
                                Some(m) => (m[(r, c)], a[(r, c)] / m[(r, c)]),
                                None => (1.0, a[(r, c)]),
                            };
                            back[(r, c)] *= m * (1.0 - t * t);
                        }
                    }
                    delta = back;
                }
                let lr = self.learning_rate;
                self.layers[l].0 -= grad_w * lr;
                self.layers[l].1 -= grad_b * lr;
            }
            let loss = Self::loss(&self.layers, &x, &y, &w);
            if !loss.is_finite() {
                break;
            }
            if loss < best_loss {
                best_loss = loss;
                best.clone_from(&self.layers);
            }
            self.loss_history.push(best_loss);
            since_check += 1;
            if since_check == PLATEAU_WINDOW {
                if window_start - best_loss < PLATEAU_TOL {
                    break;
                }
                window_start = best_loss;
                since_check = 0;
            }
        }
        self.layers = best;
        Ok(())
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let input = DMatrix::from_column_slice(x.len(), 1, x);
        let out = Self::forward(&self.layers, &input, None).pop().unwrap();
        out[(0, 0)] * self.y_scale + self.y_mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::toy_f;

    fn data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64 / 14.0]).collect();
        let ys = xs.iter().map(|x| toy_f(x[0])).collect();
        (xs, ys)
    }

    #[test]
    fn loss_history_non_increasing() {
        let (x, y) = data();
        let mut m = MlpModel::new(vec![16, 16], 0.05, 0.1, 300, 3).unwrap();
        m.fit(&x, &y, &vec![1.0; x.len()]).unwrap();
        assert!(!m.loss_history().is_empty());
        assert!(m.loss_history().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn gradient_descent_reduces_loss() {
        let x: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64 / 14.0]).collect();
        let y: Vec<f64> = x.iter().map(|v| (v[0] - 0.3).powi(2)).collect();
        let mut m = MlpModel::new(vec![32, 32], 0.1, 0.0, 500, 11).unwrap();
        m.fit(&x, &y, &vec![1.0; x.len()]).unwrap();
        let h = m.loss_history();
        assert!(h.last().unwrap() < &(0.5 * h[0]), "{:?}", (h[0], h.last()));
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = data();
        let fit = || {
            let mut m = MlpModel::new(vec![8], 0.05, 0.2, 100, 5).unwrap();
            m.fit(&x, &y, &vec![0.5; x.len()]).unwrap();
            m.predict(&[0.33])
        };
        assert_eq!(fit().to_bits(), fit().to_bits());
    }

    #[test]
    fn constant_targets_fit_exactly() {
        let (x, _) = data();
        let mut m = MlpModel::new(vec![8], 0.05, 0.0, 50, 1).unwrap();
        m.fit(&x, &vec![0.42; x.len()], &vec![1.0; x.len()])
            .unwrap();
        assert!((m.predict(&[0.5]) - 0.42).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(MlpModel::new(vec![0], 0.1, 0.0, 10, 0).is_err());
        assert!(MlpModel::new(vec![4], 0.1, 1.0, 10, 0).is_err());
        assert!(MlpModel::new(vec![4], 0.0, 0.0, 10, 0).is_err());
    }
}
