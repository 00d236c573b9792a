use rand::Rng;

use crate::error::{LssError, Result};

/// Epsilon-greedy selector whose arm scores follow a TD update.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditSelector<A> {
    arms: Vec<A>,
    scores: Vec<f64>,
    pub epsilon: f64,
    pub td_rate: f64,
}

impl<A> BanditSelector<A> {
    pub fn new(arms: Vec<A>, epsilon: f64, td_rate: f64) -> Result<Self> {
        if arms.is_empty() {
            return Err(LssError::config("bandit needs at least one arm"));
        }
        if !(0.0..=1.0).contains(&epsilon) || !(td_rate > 0.0 && td_rate <= 1.0) {
            return Err(LssError::config(format!(
                "bandit needs epsilon in [0, 1] and td_rate in (0, 1] (got {epsilon}, {td_rate})"
            )));
        }
        let scores = vec![0.0; arms.len()];
        Ok(Self {
            arms,
            scores,
            epsilon,
            td_rate,
        })
    }

    pub fn arms(&self) -> &[A] {
        &self.arms
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Highest-scoring arm; ties go to the lowest index.
    pub fn greedy(&self) -> usize {
        let mut best = 0;
        for (i, s) in self.scores.iter().enumerate() {
            if *s > self.scores[best] {
                best = i;
            }
        }
        best
    }

    /// A uniformly random arm with probability `epsilon`, else [`greedy`](Self::greedy).
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.arms.len() == 1 {
            return 0;
        }
        if rng.random::<f64>() < self.epsilon {
            rng.random_range(0..self.arms.len())
        } else {
            self.greedy()
        }
    }

    /// `score += td_rate * (reward - score)`.
    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        let len = self.scores.len();
        let s = self
            .scores
            .get_mut(arm)
            .ok_or(LssError::IndexOutOfRange { index: arm, len })?;
        *s += self.td_rate * (reward - *s);
        Ok(())
    }
}

/// Maps validation errors to rewards in `[0, 1]`: the lowest error gets 1,
/// the highest 0, all equal gives 1 each. Non-finite errors (failed fits) get 0.
pub fn rewards_from_errors(errors: &[f64]) -> Vec<f64> {
    let finite = errors.iter().copied().filter(|e| e.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    errors
        .iter()
        .map(|e| {
            if !e.is_finite() {
                0.0
            } else if hi > lo {
                (hi - e) / (hi - lo)
            } else {
                1.0
            }
        })
        .collect()
}
