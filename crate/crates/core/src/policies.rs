//! Selection policies: which branched children get an expensive evaluation.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{LssError, Result};
use crate::history::EvaluationHistory;

/// Softmax sharpness and division guard.
///
/// Only the magnitudes of `eta1`/`eta2` are used; negative values are
/// accepted so configurations can keep the conventional sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftmaxParams {
    pub eta1: f64,
    pub eta2: f64,
    pub eps: f64,
}

impl Default for SoftmaxParams {
    fn default() -> Self {
        Self {
            eta1: -3.0,
            eta2: -3.0,
            eps: 1e-12,
        }
    }
}

impl SoftmaxParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eta1.is_finite() || !self.eta2.is_finite() {
            return Err(LssError::config(format!(
                "invalid softmax parameters {self:?}"
            )));
        }
        Ok(())
    }
}

/// A queue state and the two children annealed from it.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchTriplet {
    pub parent: Vec<f64>,
    pub low_child: Vec<f64>,
    pub high_child: Vec<f64>,
    /// True cost of the parent.
    pub parent_cost: f64,
    /// Surrogate values at parent and children.
    pub parent_value: f64,
    pub low_value: f64,
    pub high_value: f64,
}

fn softmax(z: &[f64], eta: f64) -> Vec<f64> {
    let top = z.iter().map(|v| eta * v).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (eta * v - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn range(x: &[f64]) -> Result<(f64, f64)> {
    if x.is_empty() {
        return Err(LssError::EmptyInput("softmax input"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LssError::invalid("softmax input must be finite"));
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// Probability vector concentrating on small entries of `x`.
pub fn softmax_min(x: &[f64], eta: f64, eps: f64) -> Result<Vec<f64>> {
    let (lo, hi) = range(x)?;
    let scaled: Vec<f64> = x.iter().map(|v| (v - hi).abs() / (hi - lo + eps)).collect();
    Ok(softmax(&scaled, eta.abs()))
}

/// Probability vector concentrating on large entries of `x`.
pub fn softmax_max(x: &[f64], eta: f64, eps: f64) -> Result<Vec<f64>> {
    let (lo, hi) = range(x)?;
    let scaled: Vec<f64> = x.iter().map(|v| (v - lo).abs() / (hi - lo + eps)).collect();
    Ok(softmax(&scaled, eta.abs()))
}

/// Observed barrier height: max recorded cost minus the incumbent's cost.
pub fn amplitude(history: &EvaluationHistory) -> Result<f64> {
    history.amplitude()
}

/// High temperature blended toward `4 * alpha` as concentration grows.
pub fn adjust_high_temperature(t_base: f64, conc: f64, alpha: f64, eps: f64) -> f64 {
    let c = conc.clamp(0.0, 1.0);
    let hot = 4.0 * alpha.max(eps);
    // endpoints returned directly so they are exact, not 1/(1/t)
    if c == 0.0 {
        t_base
    } else if c == 1.0 {
        hot
    } else {
        1.0 / ((1.0 - c) / t_base + c / hot)
    }
}

/// Splits `e_total` evaluations into `(e_low, e_high)` with
/// `e_high ~ Binomial(e_total, conc)`.
pub fn split_budget<R: Rng + ?Sized>(e_total: u64, conc: f64, rng: &mut R) -> (u64, u64) {
    let p = conc.clamp(0.0, 1.0);
    let high = if p == 0.0 || e_total == 0 {
        0
    } else if p == 1.0 {
        e_total
    } else {
        Binomial::new(e_total, p)
            .expect("p lies in (0, 1)")
            .sample(rng)
    };
    (e_total - high, high)
}

/// Selection measure over the low-temperature children.
pub fn mu_low(triplets: &[BranchTriplet], conc: f64, params: &SoftmaxParams) -> Result<Vec<f64>> {
    if triplets.is_empty() {
        return Err(LssError::EmptyInput("triplets"));
    }
    let scores: Vec<f64> = triplets
        .iter()
        .map(|t| conc * (t.low_value - t.parent_cost) + (1.0 - conc) * t.low_value)
        .collect();
    softmax_min(&scores, params.eta1, params.eps)
}

/// Unrestricted combination of horizontal and vertical measures over the
/// high-temperature children.
pub fn mu_high_unrestricted(
    triplets: &[BranchTriplet],
    star: &[f64],
    conc: f64,
    params: &SoftmaxParams,
) -> Result<Vec<f64>> {
    if triplets.is_empty() {
        return Err(LssError::EmptyInput("triplets"));
    }
    let dist: Vec<f64> = triplets
        .iter()
        .map(|t| {
            t.high_child
                .iter()
                .zip(star)
                .map(|(b, s)| (b - s) * (b - s))
                .sum()
        })
        .collect();
    let total: f64 = dist.iter().sum();
    let n = triplets.len() as f64;
    let horizontal: Vec<f64> = if total > 0.0 {
        dist.iter().map(|d| d / total).collect()
    } else {
        vec![1.0 / n; triplets.len()]
    };
    let jumps: Vec<f64> = triplets
        .iter()
        .map(|t| (t.high_value - t.parent_value).abs())
        .collect();
    let vertical = softmax_max(&jumps, params.eta2, params.eps)?;
    Ok(vertical
        .iter()
        .zip(&horizontal)
        .map(|(v, h)| (1.0 - conc) * v + conc * h)
        .collect())
}

/// Restricts `measure` to indices not in `taken` and renormalizes; uniform
/// over the remainder when the restricted mass is zero.
pub fn restrict(measure: &[f64], taken: &[bool]) -> Result<Vec<f64>> {
    let remaining = taken.iter().filter(|t| !**t).count();
    if remaining == 0 {
        return Err(LssError::PoolExhausted {
            requested: 1,
            available: 0,
        });
    }
    let mass: f64 = measure
        .iter()
        .zip(taken)
        .filter(|(_, t)| !**t)
        .map(|(m, _)| *m)
        .sum();
    Ok(measure
        .iter()
        .zip(taken)
        .map(|(m, t)| match (*t, mass > 0.0) {
            (true, _) => 0.0,
            (false, true) => m / mass,
            (false, false) => 1.0 / remaining as f64,
        })
        .collect())
}

/// Selection measure over high-temperature children whose pair was not
/// already selected from the low side (`already_taken[j]`).
pub fn mu_high(
    triplets: &[BranchTriplet],
    star: &[f64],
    conc: f64,
    params: &SoftmaxParams,
    already_taken: &[bool],
) -> Result<Vec<f64>> {
    if already_taken.len() != triplets.len() {
        return Err(LssError::invalid(
            "mu_high: mask length differs from triplet count",
        ));
    }
    let full = mu_high_unrestricted(triplets, star, conc, params)?;
    restrict(&full, already_taken)
}

/// Sequential draws without replacement, renormalizing after each removal.
pub fn sample_without_replacement<R: Rng + ?Sized>(
    measure: &[f64],
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut taken = vec![false; measure.len()];
    sample_excluding(measure, &mut taken, count, rng)
}

/// Like [`sample_without_replacement`] but skips indices already marked in
/// `taken`, marking each drawn index.
pub fn sample_excluding<R: Rng + ?Sized>(
    measure: &[f64],
    taken: &mut [bool],
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let available = taken.iter().filter(|t| !**t).count();
    if count > available {
        return Err(LssError::PoolExhausted {
            requested: count,
            available,
        });
    }
    if measure.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
        return Err(LssError::invalid(
            "measure entries must be finite and non-negative",
        ));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let p = restrict(measure, taken)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = None;
        for (j, &pj) in p.iter().enumerate() {
            if pj > 0.0 {
                acc += pj;
                pick = Some(j);
                if u < acc {
                    break;
                }
            }
        }
        // rounding can leave `acc` a hair below 1; the last positive entry wins
        let j = pick.expect("restricted measure has positive mass");
        taken[j] = true;
        out.push(j);
    }
    Ok(out)
}
