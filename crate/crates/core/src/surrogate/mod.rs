//! The state-value function: a weighted regressor fitted on the history.

mod bandit;
mod kernel_ridge;
mod mlp;

pub use bandit::{rewards_from_errors, BanditSelector};
pub use kernel_ridge::{KernelKind, KernelRidgeModel};
pub use mlp::MlpModel;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annealer::Potential;
use crate::error::{LssError, Result};
use crate::history::EvaluationHistory;
use crate::ledger::CostClass;

/// Minimum history size for fitting a state-value function.
pub const MIN_FIT_POINTS: usize = 3;

/// A weighted regressor. Predictions are deterministic once fitted.
pub trait Regressor: Send + Sync {
    fn fit(&mut self, inputs: &[Vec<f64>], targets: &[f64], weights: &[f64]) -> Result<()>;

    fn predict(&self, x: &[f64]) -> f64;

    fn cost_class(&self) -> CostClass {
        CostClass::Cheap
    }
}

pub(crate) fn check_dataset(
    inputs: &[Vec<f64>],
    targets: &[f64],
    weights: &[f64],
    min: usize,
) -> Result<()> {
    if inputs.len() < min {
        return Err(LssError::InsufficientHistory {
            needed: min,
            available: inputs.len(),
        });
    }
    if targets.len() != inputs.len() || weights.len() != inputs.len() {
        return Err(LssError::invalid(
            "inputs, targets and weights differ in length",
        ));
    }
    let dim = inputs[0].len();
    if dim == 0 || inputs.iter().any(|x| x.len() != dim) {
        return Err(LssError::invalid("inputs must share a positive dimension"));
    }
    if targets
        .iter()
        .chain(inputs.iter().flatten())
        .any(|v| !v.is_finite())
    {
        return Err(LssError::invalid("training data must be finite"));
    }
    if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(LssError::invalid("sample weights must lie in [0, 1]"));
    }
    Ok(())
}

/// Lets a fitted regressor drive an annealing chain; calls are cheap.
pub struct SurrogatePotential<'a>(pub &'a dyn Regressor);

impl Potential for SurrogatePotential<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.0.predict(x)
    }

    fn cost_class(&self) -> CostClass {
        self.0.cost_class()
    }
}

/// A buildable regressor configuration (one bandit arm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    KernelRidge {
        #[serde(default)]
        kernel: KernelKind,
        #[serde(default = "default_bandwidth")]
        bandwidth: f64,
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_lr")]
        learning_rate: f64,
        #[serde(default)]
        dropout: f64,
        #[serde(default = "default_epochs")]
        max_epochs: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_bandwidth() -> f64 {
    0.05
}
fn default_ridge() -> f64 {
    1e-3
}
fn default_hidden() -> Vec<usize> {
    vec![32, 32]
}
fn default_lr() -> f64 {
    0.05
}
fn default_epochs() -> usize {
    500
}

impl ModelConfig {
    pub fn kernel_ridge(bandwidth: f64, ridge: f64) -> Self {
        ModelConfig::KernelRidge {
            kernel: KernelKind::Rbf,
            bandwidth,
            ridge,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Regressor>> {
        Ok(match self {
            ModelConfig::KernelRidge {
                kernel,
                bandwidth,
                ridge,
            } => Box::new(KernelRidgeModel::new(*kernel, *bandwidth, *ridge)?),
            ModelConfig::Mlp {
                hidden,
                learning_rate,
                dropout,
                max_epochs,
                seed,
            } => Box::new(MlpModel::new(
                hidden.clone(),
                *learning_rate,
                *dropout,
                *max_epochs,
                *seed,
            )?),
        })
    }
}

/// `(states, costs, weights)` columns of a history.
pub fn training_set(history: &EvaluationHistory) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let r = history.records();
    (
        r.iter().map(|e| e.state.clone()).collect(),
        r.iter().map(|e| e.cost).collect(),
        r.iter().map(|e| e.weight).collect(),
    )
}

/// Fits `config` on the whole history, weighting each record by its weight.
pub fn build_state_value(
    history: &EvaluationHistory,
    config: &ModelConfig,
) -> Result<Box<dyn Regressor>> {
    if history.len() < MIN_FIT_POINTS {
        return Err(LssError::InsufficientHistory {
            needed: MIN_FIT_POINTS,
            available: history.len(),
        });
    }
    let (x, y, w) = training_set(history);
    let mut model = config.build()?;
    model.fit(&x, &y, &w)?;
    Ok(model)
}

/// Shuffled partition of `0..n` into `folds` parts whose sizes differ by at most one.
pub fn fold_partition<R: Rng + ?Sized>(n: usize, folds: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut parts = vec![Vec::with_capacity(n / folds + 1); folds];
    for (k, i) in idx.into_iter().enumerate() {
        parts[k % folds].push(i);
    }
    parts
}

/// Mean over folds of the held-out weighted squared error.
pub fn cross_validate<R: Rng + ?Sized>(
    config: &ModelConfig,
    inputs: &[Vec<f64>],
    targets: &[f64],
    weights: &[f64],
    folds: usize,
    rng: &mut R,
) -> Result<f64> {
    if folds < 2 {
        return Err(LssError::config("cross-validation needs at least 2 folds"));
    }
    check_dataset(inputs, targets, weights, folds)?;
    let parts = fold_partition(inputs.len(), folds, rng);
    let mut total = 0.0;
    let mut held_out = vec![false; inputs.len()];
    for part in &parts {
        held_out.iter_mut().for_each(|h| *h = false);
        for &i in part {
            held_out[i] = true;
        }
        let pick = |keep: bool| -> Vec<usize> {
            (0..inputs.len()).filter(|&i| held_out[i] != keep).collect()
        };
        let train = pick(true);
        let mut model = config.build()?;
        model.fit(
            &train.iter().map(|&i| inputs[i].clone()).collect::<Vec<_>>(),
            &train.iter().map(|&i| targets[i]).collect::<Vec<_>>(),
            &train.iter().map(|&i| weights[i]).collect::<Vec<_>>(),
        )?;
        let wsum: f64 = part.iter().map(|&i| weights[i]).sum();
        let err: f64 = if wsum > 0.0 {
            part.iter()
                .map(|&i| weights[i] * (model.predict(&inputs[i]) - targets[i]).powi(2))
                .sum::<f64>()
                / wsum
        } else {
            part.iter()
                .map(|&i| (model.predict(&inputs[i]) - targets[i]).powi(2))
                .sum::<f64>()
                / part.len() as f64
        };
        total += err;
    }
    Ok(total / folds as f64)
}

/// [`cross_validate`] on a history.
pub fn cross_validate_history<R: Rng + ?Sized>(
    config: &ModelConfig,
    history: &EvaluationHistory,
    folds: usize,
    rng: &mut R,
) -> Result<f64> {
    let (x, y, w) = training_set(history);
    cross_validate(config, &x, &y, &w, folds, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Epsilon-greedy over TD-smoothed cross-validation rewards.
    #[default]
    Bandit,
    /// Keep the arm with the lowest cross-validation error.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub arms: Vec<ModelConfig>,
    pub mode: SelectionMode,
    pub epsilon: f64,
    pub td_rate: f64,
    /// Re-select the model every this many epochs.
    pub reselect_every: usize,
    pub folds: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            arms: vec![
                ModelConfig::kernel_ridge(0.03, 1e-3),
                ModelConfig::kernel_ridge(0.08, 1e-3),
                ModelConfig::kernel_ridge(0.2, 1e-3),
            ],
            mode: SelectionMode::Bandit,
            epsilon: 0.1,
            td_rate: 0.5,
            reselect_every: 10,
            folds: 3,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reselect_every == 0 || self.folds < 2 {
            return Err(LssError::config(
                "reselect_every must be >= 1 and folds >= 2",
            ));
        }
        for arm in &self.arms {
            arm.build()?;
        }
        BanditSelector::new(self.arms.clone(), self.epsilon, self.td_rate)?;
        Ok(())
    }
}

/// Tracks which arm is in use and re-selects it on request.
#[derive(Debug, Clone)]
pub struct ModelSelector {
    mode: SelectionMode,
    folds: usize,
    bandit: BanditSelector<ModelConfig>,
    current: usize,
    last_errors: Vec<f64>,
}

impl ModelSelector {
    pub fn new(config: &SurrogateConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            mode: config.mode,
            folds: config.folds,
            bandit: BanditSelector::new(config.arms.clone(), config.epsilon, config.td_rate)?,
            current: 0,
            last_errors: Vec::new(),
        })
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn current_config(&self) -> &ModelConfig {
        &self.bandit.arms()[self.current]
    }

    pub fn scores(&self) -> &[f64] {
        self.bandit.scores()
    }

    /// Cross-validation errors from the most recent re-selection.
    pub fn last_errors(&self) -> &[f64] {
        &self.last_errors
    }

    /// Cross-validates every arm on `history` and picks the arm for the
    /// coming epochs. A single arm is kept without any fitting.
    pub fn reselect<R: Rng + ?Sized>(
        &mut self,
        history: &EvaluationHistory,
        rng: &mut R,
    ) -> Result<usize> {
        let arms = self.bandit.arms().len();
        if arms == 1 {
            return Ok(0);
        }
        if history.len() < self.folds.max(MIN_FIT_POINTS) {
            return Ok(self.current);
        }
        let (x, y, w) = training_set(history);
        let mut errors = Vec::with_capacity(arms);
        for arm in self.bandit.arms() {
            // failures (e.g. an ill-conditioned solve) just lose the round
            let e = cross_validate(arm, &x, &y, &w, self.folds, rng).unwrap_or(f64::INFINITY);
            errors.push(e);
        }
        self.current = match self.mode {
            SelectionMode::Periodic => {
                let mut best = 0;
                for (i, e) in errors.iter().enumerate() {
                    if *e < errors[best] {
                        best = i;
                    }
                }
                best
            }
            SelectionMode::Bandit => {
                for (i, r) in rewards_from_errors(&errors).into_iter().enumerate() {
                    self.bandit.update(i, r)?;
                }
                self.bandit.select(rng)
            }
        };
        self.last_errors = errors;
        Ok(self.current)
    }

    pub fn fit(&self, history: &EvaluationHistory) -> Result<Box<dyn Regressor>> {
        build_state_value(history, self.current_config())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn history(points: &[(f64, f64)]) -> EvaluationHistory {
        let mut h = EvaluationHistory::new();
        for &(x, c) in points {
            h.record_evaluation(vec![x], c, 0).unwrap();
        }
        h
    }

    #[test]
    fn needs_three_records() {
        let h = history(&[(0.1, 1.0), (0.2, 2.0)]);
        assert!(matches!(
            build_state_value(&h, &ModelConfig::kernel_ridge(0.1, 1e-3)),
            Err(LssError::InsufficientHistory {
                needed: 3,
                available: 2
            })
        ));
    }

    #[test]
    fn fitted_value_tracks_costs() {
        let h = history(&[(0.1, 0.84), (0.5, 0.36), (0.9, 0.2)]);
        let v = build_state_value(&h, &ModelConfig::kernel_ridge(0.3, 1e-8)).unwrap();
        assert!((v.predict(&[0.9]) - 0.2).abs() < 1e-3);
    }

    #[test]
    fn folds_guard_and_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 / 8.0]).collect();
        let y = vec![1.0; 9];
        let w = vec![1.0; 9];
        let cfg = ModelConfig::kernel_ridge(0.2, 1e-3);
        assert!(cross_validate(&cfg, &x, &y, &w, 1, &mut rng).is_err());
        assert!(cross_validate(&cfg, &x[..2], &y[..2], &w[..2], 3, &mut rng).is_err());
        let parts = fold_partition(9, 3, &mut rng);
        assert!(parts.iter().all(|p| p.len() == 3));
        let mut all: Vec<usize> = parts.concat();
        all.sort();
        assert_eq!(all, (0..9).collect::<Vec<_>>());
        let parts = fold_partition(10, 3, &mut rng);
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 10);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let err = cross_validate(&cfg, &x, &y, &w, 3, &mut rng).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn same_seed_same_predictions() {
        let h = history(&[
            (0.1, 0.84),
            (0.3, 0.56),
            (0.45, 1.2),
            (0.7, 0.24),
            (0.9, 0.2),
        ]);
        let cfg = ModelConfig::Mlp {
            hidden: vec![8],
            learning_rate: 0.05,
            dropout: 0.1,
            max_epochs: 50,
            seed: 9,
        };
        let a = build_state_value(&h, &cfg).unwrap();
        let b = build_state_value(&h, &cfg).unwrap();
        for t in [0.0, 0.33, 0.8] {
            assert_eq!(a.predict(&[t]).to_bits(), b.predict(&[t]).to_bits());
        }
    }

    #[test]
    fn periodic_selection_prefers_lower_cv_error() {
        let pts: Vec<(f64, f64)> = (0..12)
            .map(|i| {
                let x = i as f64 / 11.0;
                (x, crate::domain::toy_f(x))
            })
            .collect();
        let h = history(&pts);
        let cfg = SurrogateConfig {
            arms: vec![
                ModelConfig::KernelRidge {
                    kernel: KernelKind::Linear,
                    bandwidth: 1.0,
                    ridge: 1.0,
                },
                ModelConfig::kernel_ridge(0.08, 1e-6),
            ],
            mode: SelectionMode::Periodic,
            ..SurrogateConfig::default()
        };
        let mut sel = ModelSelector::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pick = sel.reselect(&h, &mut rng).unwrap();
        let e = sel.last_errors();
        assert_eq!(pick, if e[0] < e[1] { 0 } else { 1 });
    }

    #[test]
    fn model_config_toml_round_trip() {
        let cfg = SurrogateConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: SurrogateConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
