//! Plain simulated-annealing baseline on the true objective.

use lss::annealer::{anneal_with, ExpensivePotential, SaConfig};
use lss::concentration::{concentration_nd, default_bins};
use lss::{Aggregation, BudgetLedger, CoolingSchedule, Objective, TraceRow};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Independent chains started from one point and sharing the
/// expensive-evaluation budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaBaselineConfig {
    pub agents: usize,
    /// Proposal half-width as a fraction of the box side.
    pub step_fraction: f64,
    /// Geometric cooling from `t_start` to `t_end` over each chain's length.
    pub t_start: f64,
    pub t_end: f64,
}

impl Default for SaBaselineConfig {
    fn default() -> Self {
        Self {
            agents: 3,
            step_fraction: 1.0 / 50.0,
            t_start: 1.0,
            t_end: 0.01,
        }
    }
}

impl SaBaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 {
            return Err(BenchError::config("sa.agents must be at least 1"));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction.is_finite()) {
            return Err(BenchError::config("sa.step_fraction must be positive"));
        }
        CoolingSchedule::Geometric {
            start: self.t_start,
            end: self.t_end,
            horizon: 1,
        }
        .validate()?;
        Ok(())
    }
}

/// Proposal, proposal cost, and the chain's state after the step.
type ChainStep = (Vec<f64>, f64, Vec<f64>);

#[derive(Debug, Clone)]
pub struct SaRun {
    /// Row `k` covers the `k`-th step of every chain; row 0 is the start.
    pub trace: Vec<TraceRow>,
    pub best_state: Vec<f64>,
    pub best_cost: f64,
    pub ledger: BudgetLedger,
}

/// Runs the baseline with at most `budget` expensive calls: one for the
/// shared start, the rest split as evenly as possible between the chains.
pub fn run_sa<O: Objective + ?Sized>(
    objective: &O,
    start: &[f64],
    budget: u64,
    seed: u64,
    config: &SaBaselineConfig,
) -> Result<SaRun> {
    config.validate()?;
    if budget == 0 {
        return Err(BenchError::config("budget must be positive"));
    }
    let domain = objective.domain();
    let x0 = domain.reflect(start)?;
    let ledger = BudgetLedger::new();
    let c0 = objective.evaluate(&x0);
    ledger.record_expensive();

    let agents = config.agents;
    let remaining = (budget - 1) as usize;
    let steps: Vec<usize> = (0..agents)
        .map(|j| remaining / agents + usize::from(j < remaining % agents))
        .collect();
    let step_size: Vec<f64> = domain
        .lengths()
        .iter()
        .map(|l| l * config.step_fraction)
        .collect();

    let mut chains: Vec<Vec<ChainStep>> = Vec::with_capacity(agents);
    for (j, &k) in steps.iter().enumerate() {
        let sa = SaConfig {
            steps: k,
            step_size: step_size.clone(),
            schedule: CoolingSchedule::Geometric {
                start: config.t_start,
                end: config.t_end,
                horizon: k.max(1),
            },
            seed,
            stream: j as u64,
        };
        let mut log = Vec::with_capacity(k);
        anneal_with(
            &x0,
            Some(c0),
            &ExpensivePotential(objective),
            &sa,
            &domain,
            &ledger,
            |r| log.push((r.proposal.to_vec(), r.proposal_cost, r.current.to_vec())),
        )?;
        chains.push(log);
    }

    let bins = default_bins(agents);
    let mut states = vec![x0.clone(); agents];
    let (mut best_state, mut best_cost) = (x0.clone(), c0);
    let t0 = config.t_start;
    let mut trace = vec![TraceRow {
        epoch: 0,
        m_functional: c0,
        concentration_raw: 1.0,
        concentration_effective: 1.0,
        expensive_cum: 1,
        cheap_cum: 0,
        t_high_effective: t0,
        e_low: 0,
        e_high: 0,
        queue_len: agents,
        k_low: 0,
        k_high: 0,
        new_evaluations: 1,
    }];
    let horizon = steps.iter().copied().max().unwrap_or(0);
    let mut cum = 1u64;
    for k in 0..horizon {
        let mut fresh = 0u64;
        for (j, log) in chains.iter().enumerate() {
            if let Some((proposal, cost, current)) = log.get(k) {
                fresh += 1;
                if *cost < best_cost {
                    best_cost = *cost;
                    best_state.clone_from(proposal);
                }
                states[j].clone_from(current);
            }
        }
        cum += fresh;
        let conc = concentration_nd(&states, &best_state, &domain, bins, Aggregation::Mean)?;
        trace.push(TraceRow {
            epoch: k + 1,
            m_functional: best_cost,
            concentration_raw: conc,
            concentration_effective: conc,
            expensive_cum: cum,
            cheap_cum: 0,
            t_high_effective: t0 * (config.t_end / t0).powf(k as f64 / steps[0].max(1) as f64),
            e_low: 0,
            e_high: 0,
            queue_len: agents,
            k_low: 0,
            k_high: 0,
            new_evaluations: fresh,
        });
    }
    debug_assert_eq!(cum, ledger.expensive_calls());
    Ok(SaRun {
        trace,
        best_state,
        best_cost,
        ledger,
    })
}
