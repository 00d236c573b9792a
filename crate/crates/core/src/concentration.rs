//! Agent concentration metric in `[0, 1]`.
//!
//! In one dimension the interval is split into equal bins and the empirical
//! agent measure `mu` is compared against two references: the uniform measure
//! (normalized KL divergence, large when agents cluster anywhere) and a point
//! mass at the incumbent's bin (large when agents cluster at the incumbent).
//! The two terms are mixed by `lambda`, the fraction of agents that share the
//! incumbent's bin.

use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{LssError, Result};

/// How per-coordinate concentrations are combined in several dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    Max,
    #[default]
    Mean,
}

fn bin_index(x: f64, a: f64, b: f64, bins: usize) -> usize {
    let t = (x - a) / (b - a);
    ((t * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// Fraction of agents in each of `bins` equal parts of `[a, b]`.
///
/// The right end point `b` belongs to the last bin.
pub fn bin_histogram(agents: &[f64], interval: (f64, f64), bins: usize) -> Result<Vec<f64>> {
    if agents.is_empty() {
        return Err(LssError::EmptyInput("agents"));
    }
    let (a, b) = interval;
    if bins == 0 || !(a < b) {
        return Err(LssError::invalid(format!(
            "histogram needs bins >= 1 and a < b (bins {bins}, interval [{a}, {b}])"
        )));
    }
    let mut counts = vec![0usize; bins];
    for &x in agents {
        if !(a..=b).contains(&x) {
            return Err(LssError::invalid(format!("agent {x} outside [{a}, {b}]")));
        }
        counts[bin_index(x, a, b, bins)] += 1;
    }
    let n = agents.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// `KL(mu || uniform) / ln(bins)`; zero for a single bin.
pub fn kl_term(mu: &[f64]) -> f64 {
    let bins = mu.len();
    if bins < 2 {
        return 0.0;
    }
    let u = 1.0 / bins as f64;
    let kl: f64 = mu
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * (p / u).ln())
        .sum();
    (kl / (bins as f64).ln()).clamp(0.0, 1.0)
}

/// `1 - ||mu - delta_star||_1 / 2`, which equals `mu[star_bin]`.
pub fn tv_term(mu: &[f64], star_bin: usize) -> Result<f64> {
    if star_bin >= mu.len() {
        return Err(LssError::IndexOutOfRange {
            index: star_bin,
            len: mu.len(),
        });
    }
    let l1: f64 = mu
        .iter()
        .enumerate()
        .map(|(j, &p)| (p - if j == star_bin { 1.0 } else { 0.0 }).abs())
        .sum();
    Ok((1.0 - 0.5 * l1).clamp(0.0, 1.0))
}

/// Concentration of 1-D `agents` around `star` on `interval`.
pub fn concentration_1d(
    agents: &[f64],
    star: f64,
    interval: (f64, f64),
    bins: usize,
) -> Result<f64> {
    if agents.len() == 1 {
        return Ok(1.0);
    }
    let mu = bin_histogram(agents, interval, bins)?;
    let (a, b) = interval;
    if !(a..=b).contains(&star) {
        return Err(LssError::invalid(format!(
            "incumbent {star} outside [{a}, {b}]"
        )));
    }
    let star_bin = bin_index(star, a, b, bins);
    let lambda = mu[star_bin];
    let c = (1.0 - lambda) * kl_term(&mu) + lambda * tv_term(&mu, star_bin)?;
    Ok(c.clamp(0.0, 1.0))
}

/// Default bin count: one per agent, at least two.
pub fn default_bins(agents: usize) -> usize {
    agents.max(2)
}

/// Per-coordinate [`concentration_1d`] over the box, aggregated by `mode`.
pub fn concentration_nd(
    agents: &[Vec<f64>],
    star: &[f64],
    domain: &BoxDomain,
    bins: usize,
    mode: Aggregation,
) -> Result<f64> {
    if agents.is_empty() {
        return Err(LssError::EmptyInput("agents"));
    }
    let dim = domain.dim();
    if star.len() != dim || agents.iter().any(|a| a.len() != dim) {
        return Err(LssError::invalid("concentration: dimension mismatch"));
    }
    let mut column = Vec::with_capacity(agents.len());
    let mut per_dim = Vec::with_capacity(dim);
    for j in 0..dim {
        column.clear();
        column.extend(agents.iter().map(|a| a[j]));
        let interval = (domain.lower()[j], domain.upper()[j]);
        per_dim.push(concentration_1d(&column, star[j], interval, bins)?);
    }
    Ok(aggregate(&per_dim, mode))
}

pub fn aggregate(values: &[f64], mode: Aggregation) -> f64 {
    match mode {
        Aggregation::Max => values.iter().copied().fold(0.0, f64::max),
        Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
    }
}

/// Patience parameters for the effective concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatienceConfig {
    pub patience: usize,
    pub deflate_factor: f64,
    pub inflate_factor: f64,
}

impl Default for PatienceConfig {
    fn default() -> Self {
        Self {
            patience: 5,
            deflate_factor: 0.9,
            inflate_factor: 0.5,
        }
    }
}

impl PatienceConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |f: f64| f > 0.0 && f <= 1.0;
        if self.patience == 0 || !unit(self.deflate_factor) || !unit(self.inflate_factor) {
            return Err(LssError::config(format!(
                "invalid patience settings {self:?}"
            )));
        }
        Ok(())
    }
}

/// Raw and patience-adjusted concentration carried across epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationState {
    pub raw_value: f64,
    pub effective_value: f64,
    pub epochs_without_improvement: usize,
    pub config: PatienceConfig,
}

impl ConcentrationState {
    pub fn new(initial: f64, config: PatienceConfig) -> Self {
        let v = initial.clamp(0.0, 1.0);
        Self {
            raw_value: v,
            effective_value: v,
            epochs_without_improvement: 0,
            config,
        }
    }

    /// Feeds a fresh raw value.
    ///
    /// After more than `patience` stagnant epochs the effective value is
    /// deflated; otherwise it relaxes toward `raw`.
    pub fn apply_patience(&mut self, raw: f64, improved: bool) {
        let raw = raw.clamp(0.0, 1.0);
        self.raw_value = raw;
        if improved {
            self.epochs_without_improvement = 0;
        } else {
            self.epochs_without_improvement += 1;
        }
        let next = if self.epochs_without_improvement > self.config.patience {
            self.config.deflate_factor * self.effective_value
        } else {
            self.effective_value + self.config.inflate_factor * (raw - self.effective_value)
        };
        self.effective_value = next.clamp(0.0, 1.0);
    }
}
