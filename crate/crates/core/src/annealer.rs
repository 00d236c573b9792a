//! Simulated annealing with a pluggable potential.
//!
//! The same chain implementation drives both the classical baseline (potential
//! = the expensive objective) and the surrogate-driven branching inside an
//! LSS epoch (potential = the fitted state-value function). Every potential
//! call is charged to a [`BudgetLedger`] under the potential's cost class.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{reflect_into_box, BoxDomain, Objective};
use crate::error::{LssError, Result};
use crate::ledger::{BudgetLedger, CostClass, EvalKind};

/// Something an annealing chain can descend on.
pub trait Potential: Sync {
    fn value(&self, x: &[f64]) -> f64;

    fn cost_class(&self) -> CostClass;
}

/// Wraps an [`Objective`] so annealing on it is charged as expensive.
#[derive(Debug, Clone, Copy)]
pub struct ExpensivePotential<'a, O: ?Sized>(pub &'a O);

impl<O: Objective + ?Sized> Potential for ExpensivePotential<'_, O> {
    fn value(&self, x: &[f64]) -> f64 {
        self.0.evaluate(x)
    }

    fn cost_class(&self) -> CostClass {
        CostClass::Expensive
    }
}

/// Temperature as a function of a step or epoch index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoolingSchedule {
    Constant {
        temperature: f64,
    },
    /// `start * (end / start)^(min(i, horizon) / horizon)`.
    Geometric {
        start: f64,
        end: f64,
        horizon: usize,
    },
    /// Explicit table; the last entry is held past the end.
    Table {
        temperatures: Vec<f64>,
    },
}

impl CoolingSchedule {
    pub fn constant(temperature: f64) -> Self {
        CoolingSchedule::Constant { temperature }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |t: f64| t.is_finite() && t > 0.0;
        let ok = match self {
            CoolingSchedule::Constant { temperature } => positive(*temperature),
            CoolingSchedule::Geometric { start, end, .. } => {
                positive(*start) && positive(*end) && end <= start
            }
            CoolingSchedule::Table { temperatures } => {
                !temperatures.is_empty() && temperatures.iter().all(|t| positive(*t))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(LssError::config(format!(
                "invalid cooling schedule {self:?}"
            )))
        }
    }

    pub fn temperature_at(&self, index: usize) -> f64 {
        match self {
            CoolingSchedule::Constant { temperature } => *temperature,
            CoolingSchedule::Geometric {
                start,
                end,
                horizon,
            } => {
                if *horizon == 0 {
                    return *start;
                }
                let frac = index.min(*horizon) as f64 / *horizon as f64;
                start * (end / start).powf(frac)
            }
            CoolingSchedule::Table { temperatures } => {
                temperatures[index.min(temperatures.len() - 1)]
            }
        }
    }
}

/// One annealing chain's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SaConfig {
    /// Number of propose/accept steps `K`.
    pub steps: usize,
    /// Half-width of the uniform proposal box, per dimension.
    pub step_size: Vec<f64>,
    /// Indexed by step within the chain.
    pub schedule: CoolingSchedule,
    pub seed: u64,
    /// ChaCha stream id, so chains sharing a seed stay independent.
    pub stream: u64,
}

impl SaConfig {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// `state + xi` with `xi_j ~ U(-step_j, step_j)`, reflected into `domain`.
pub fn propose<R: Rng + ?Sized>(
    state: &[f64],
    step_size: &[f64],
    rng: &mut R,
    domain: &BoxDomain,
) -> Result<Vec<f64>> {
    if state.len() != step_size.len() {
        return Err(LssError::invalid(
            "step size dimension does not match state",
        ));
    }
    let moved: Vec<f64> = state
        .iter()
        .zip(step_size)
        .map(|(&x, &h)| {
            if h > 0.0 {
                x + rng.random_range(-h..h)
            } else {
                x
            }
        })
        .collect();
    reflect_into_box(&moved, domain)
}

/// Metropolis rule: accept with probability `exp(min((old - new) / T, 0))`.
pub fn metropolis_accept<R: Rng + ?Sized>(
    old_cost: f64,
    new_cost: f64,
    temperature: f64,
    rng: &mut R,
) -> bool {
    if new_cost <= old_cost {
        return true;
    }
    let p = ((old_cost - new_cost) / temperature).exp();
    rng.random::<f64>() < p
}

/// Per-step view handed to an observer.
#[derive(Debug)]
pub struct StepRecord<'a> {
    pub step: usize,
    pub temperature: f64,
    pub proposal: &'a [f64],
    pub proposal_cost: f64,
    pub accepted: bool,
    pub current: &'a [f64],
    pub current_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealOutcome {
    pub state: Vec<f64>,
    pub cost: f64,
    pub best_state: Vec<f64>,
    pub best_cost: f64,
    pub accepted: usize,
    pub rejected: usize,
    /// Potential calls made by this chain.
    pub evaluations: u64,
}

impl AnnealOutcome {
    pub fn acceptance_rate(&self) -> f64 {
        let total = self.accepted + self.rejected;
        if total == 0 {
            0.0
        } else {
            self.accepted as f64 / total as f64
        }
    }
}

/// Runs `config.steps` propose/accept steps from `start`.
///
/// The start state's potential is evaluated once and the current cost is
/// cached thereafter, so the chain makes `steps + 1` potential calls.
pub fn anneal<P: Potential + ?Sized>(
    start: &[f64],
    potential: &P,
    config: &SaConfig,
    domain: &BoxDomain,
    ledger: &BudgetLedger,
) -> Result<AnnealOutcome> {
    anneal_with(start, None, potential, config, domain, ledger, |_| {})
}

/// [`anneal`] with an optional already-known start cost (skipping the start
/// evaluation) and a per-step observer.
pub fn anneal_with<P, F>(
    start: &[f64],
    start_cost: Option<f64>,
    potential: &P,
    config: &SaConfig,
    domain: &BoxDomain,
    ledger: &BudgetLedger,
    mut observer: F,
) -> Result<AnnealOutcome>
where
    P: Potential + ?Sized,
    F: FnMut(&StepRecord<'_>),
{
    if start.len() != domain.dim() || config.step_size.len() != domain.dim() {
        return Err(LssError::invalid("anneal: dimension mismatch"));
    }
    if config.step_size.iter().any(|h| !h.is_finite() || *h < 0.0) {
        return Err(LssError::invalid(
            "anneal: step sizes must be finite and non-negative",
        ));
    }
    config.schedule.validate()?;

    let class = potential.cost_class();
    let mut rng = config.rng();
    let mut evaluations = 0u64;
    let mut current = start.to_vec();
    let mut current_cost = match start_cost {
        Some(c) => c,
        None if config.steps == 0 => {
            // nothing to compare against, so no reason to pay for the start
            return Ok(AnnealOutcome {
                state: current.clone(),
                cost: f64::NAN,
                best_state: current,
                best_cost: f64::NAN,
                accepted: 0,
                rejected: 0,
                evaluations: 0,
            });
        }
        None => {
            ledger.record(class, EvalKind::Anchor);
            evaluations += 1;
            potential.value(start)
        }
    };
    let mut best_state = current.clone();
    let mut best_cost = current_cost;
    let (mut accepted, mut rejected) = (0, 0);

    for step in 0..config.steps {
        let temperature = config.schedule.temperature_at(step);
        let proposal = propose(&current, &config.step_size, &mut rng, domain)?;
        let proposal_cost = potential.value(&proposal);
        ledger.record(class, EvalKind::Step);
        evaluations += 1;

        let ok = metropolis_accept(current_cost, proposal_cost, temperature, &mut rng);
        if ok {
            accepted += 1;
            if proposal_cost < best_cost {
                best_cost = proposal_cost;
                best_state.clone_from(&proposal);
            }
            observer(&StepRecord {
                step,
                temperature,
                proposal: &proposal,
                proposal_cost,
                accepted: true,
                current: &proposal,
                current_cost: proposal_cost,
            });
            current = proposal;
            current_cost = proposal_cost;
        } else {
            rejected += 1;
            if proposal_cost < best_cost {
                best_cost = proposal_cost;
                best_state.clone_from(&proposal);
            }
            observer(&StepRecord {
                step,
                temperature,
                proposal: &proposal,
                proposal_cost,
                accepted: false,
                current: &current,
                current_cost,
            });
        }
    }

    Ok(AnnealOutcome {
        state: current,
        cost: current_cost,
        best_state,
        best_cost,
        accepted,
        rejected,
        evaluations,
    })
}
