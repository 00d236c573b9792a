//! The LSS driver: bootstrap, then repeated sketch (fit the state-value
//! function) and step (branch, select, evaluate, trim) epochs.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annealer::{anneal_with, CoolingSchedule, SaConfig};
use crate::concentration::{
    concentration_nd, default_bins, Aggregation, ConcentrationState, PatienceConfig,
};
use crate::domain::{BoxDomain, Objective};
use crate::error::{LssError, Result};
use crate::history::{format_float, EvaluationHistory};
use crate::ledger::{BudgetLedger, CostClass, EvalKind};
use crate::policies::{
    adjust_high_temperature, mu_high_unrestricted, mu_low, sample_excluding, split_budget,
    BranchTriplet, SoftmaxParams,
};
use crate::queue::ActiveQueue;
use crate::surrogate::{ModelSelector, Regressor, SurrogateConfig, SurrogatePotential};

/// A per-epoch integer setting: one value for all epochs, or a table whose
/// entry `i` applies to epoch `i` and whose last entry is held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Constant(usize),
    Table(Vec<usize>),
}

impl Schedule {
    pub fn at(&self, epoch: usize) -> usize {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Table(t) => t[epoch.min(t.len() - 1)],
        }
    }

    /// Number of epochs after which the value no longer changes.
    fn horizon(&self) -> usize {
        match self {
            Schedule::Constant(_) => 1,
            Schedule::Table(t) => t.len(),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if let Schedule::Table(t) = self {
            if t.is_empty() {
                return Err(LssError::config(format!(
                    "schedule `{name}` is an empty table"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpochSchedules {
    /// Maximum expensive evaluations `e_i` per epoch.
    pub evaluations: Schedule,
    /// Queue length `a_i`; entry 0 is the bootstrap queue length.
    pub queue_len: Schedule,
    /// Annealing steps per branch at low and high temperature.
    pub k_low: Schedule,
    pub k_high: Schedule,
    /// Every `box_every` epochs the box is rebuilt around the incumbent with
    /// sides `L * box_factor^m`, `m` the number of completed box searches.
    pub box_factor: f64,
    pub box_every: usize,
}

impl Default for EpochSchedules {
    fn default() -> Self {
        Self {
            evaluations: Schedule::Constant(3),
            queue_len: Schedule::Constant(3),
            k_low: Schedule::Constant(10),
            k_high: Schedule::Constant(10),
            box_factor: 1.0,
            box_every: 10,
        }
    }
}

impl EpochSchedules {
    pub fn validate(&self) -> Result<()> {
        self.evaluations.validate("evaluations")?;
        self.queue_len.validate("queue_len")?;
        self.k_low.validate("k_low")?;
        self.k_high.validate("k_high")?;
        if !(self.box_factor > 0.0 && self.box_factor <= 1.0) || self.box_every == 0 {
            return Err(LssError::config(format!(
                "box_factor must be in (0, 1] and box_every >= 1 (got {}, {})",
                self.box_factor, self.box_every
            )));
        }
        let horizon = self.evaluations.horizon().max(self.queue_len.horizon()) + 1;
        for i in 0..=horizon {
            let (e, a) = (self.evaluations.at(i), self.queue_len.at(i));
            if a == 0 {
                return Err(LssError::config(format!(
                    "queue length at epoch {i} is zero"
                )));
            }
            if i > 0 && e > a {
                return Err(LssError::config(format!(
                    "epoch {i}: {e} evaluations exceed queue length {a}"
                )));
            }
            if i > 0 && (a > self.queue_len.at(i - 1) || (i > 1 && e > self.evaluations.at(i - 1)))
            {
                return Err(LssError::config(format!(
                    "evaluation and queue-length schedules must be non-increasing (epoch {i})"
                )));
            }
        }
        Ok(())
    }
}

/// Low and (base) high temperature schedules, indexed by epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperatureConfig {
    pub low: CoolingSchedule,
    pub high: CoolingSchedule,
}

impl Default for TemperatureConfig {
    fn default() -> Self {
        Self {
            low: CoolingSchedule::constant(0.02),
            high: CoolingSchedule::constant(0.3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    /// TD rate of the weight update.
    pub alpha: f64,
    /// Rank sharpness is `beta_scale / max(amplitude, 1e-12)`.
    pub beta_scale: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LssConfig {
    pub seed: u64,
    /// Cap on expensive evaluations, bootstrap included. The bootstrap
    /// always completes even if it alone exceeds the cap.
    pub budget: Option<u64>,
    pub max_epochs: usize,
    /// Stop after this many consecutive epochs without improvement.
    pub early_stop: Option<usize>,
    pub min_history: usize,
    /// Agents' starting states; duplicates are evaluated once.
    pub initial_states: Vec<Vec<f64>>,
    pub schedules: EpochSchedules,
    pub temperatures: TemperatureConfig,
    /// Deep step size as a fraction of the box side.
    pub step_fraction: f64,
    /// Surrogate chains use the deep step when concentration is at least
    /// this, half of it otherwise.
    pub exploratory_threshold: f64,
    pub policies: SoftmaxParams,
    pub patience: PatienceConfig,
    pub aggregation: Aggregation,
    /// Histogram bins for concentration; defaults to the queue length.
    pub bins: Option<usize>,
    pub surrogate: SurrogateConfig,
    pub weights: WeightConfig,
    /// Run the annealing chains of one epoch on the rayon pool.
    pub parallel: bool,
}

impl Default for LssConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            budget: None,
            max_epochs: 100,
            early_stop: None,
            min_history: 3,
            initial_states: Vec::new(),
            schedules: EpochSchedules::default(),
            temperatures: TemperatureConfig::default(),
            step_fraction: 0.08,
            exploratory_threshold: 0.5,
            policies: SoftmaxParams::default(),
            patience: PatienceConfig::default(),
            aggregation: Aggregation::Mean,
            bins: None,
            surrogate: SurrogateConfig::default(),
            weights: WeightConfig::default(),
            parallel: false,
        }
    }
}

impl LssConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.min_history < 3 {
            return Err(LssError::config("min_history must be at least 3"));
        }
        if self.budget == Some(0) {
            return Err(LssError::config("budget must be positive"));
        }
        if let Some(s) = self.initial_states.iter().find(|s| s.len() != dim) {
            return Err(LssError::config(format!(
                "initial state {s:?} does not have dimension {dim}"
            )));
        }
        if !(self.step_fraction > 0.0) || !self.step_fraction.is_finite() {
            return Err(LssError::config("step_fraction must be positive"));
        }
        if !(0.0..=1.0).contains(&self.exploratory_threshold) {
            return Err(LssError::config("exploratory_threshold must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.weights.alpha) || !(self.weights.beta_scale > 0.0) {
            return Err(LssError::config(
                "weights need alpha in [0, 1] and beta_scale > 0",
            ));
        }
        if self.bins == Some(0) {
            return Err(LssError::config("bins must be positive"));
        }
        self.schedules.validate()?;
        self.temperatures.low.validate()?;
        self.temperatures.high.validate()?;
        self.policies.validate()?;
        self.patience.validate()?;
        self.surrogate.validate()?;
        Ok(())
    }
}

/// One row of the per-epoch trace. Row 0 describes the bootstrap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub m_functional: f64,
    pub concentration_raw: f64,
    pub concentration_effective: f64,
    pub expensive_cum: u64,
    pub cheap_cum: u64,
    pub t_high_effective: f64,
    pub e_low: usize,
    pub e_high: usize,
    /// Queue length at the start of the epoch.
    pub queue_len: usize,
    pub k_low: usize,
    pub k_high: usize,
    pub new_evaluations: u64,
}

pub const TRACE_HEADER: [&str; 13] = [
    "epoch",
    "m_functional",
    "concentration_raw",
    "concentration_effective",
    "expensive_cum",
    "cheap_cum",
    "t_high_effective",
    "e_low",
    "e_high",
    "queue_len",
    "k_low",
    "k_high",
    "new_evaluations",
];

impl TraceRow {
    fn fields(&self) -> [String; 13] {
        [
            self.epoch.to_string(),
            format_float(self.m_functional),
            format_float(self.concentration_raw),
            format_float(self.concentration_effective),
            self.expensive_cum.to_string(),
            self.cheap_cum.to_string(),
            format_float(self.t_high_effective),
            self.e_low.to_string(),
            self.e_high.to_string(),
            self.queue_len.to_string(),
            self.k_low.to_string(),
            self.k_high.to_string(),
            self.new_evaluations.to_string(),
        ]
    }
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: std::io::Read>(reader: R) -> Result<Vec<TraceRow>> {
    let mut rd = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| LssError::invalid(format!("bad trace field {i}")))
        };
        let u = |i: usize| -> Result<u64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| LssError::invalid(format!("bad trace field {i}")))
        };
        rows.push(TraceRow {
            epoch: u(0)? as usize,
            m_functional: f(1)?,
            concentration_raw: f(2)?,
            concentration_effective: f(3)?,
            expensive_cum: u(4)?,
            cheap_cum: u(5)?,
            t_high_effective: f(6)?,
            e_low: u(7)? as usize,
            e_high: u(8)? as usize,
            queue_len: u(9)? as usize,
            k_low: u(10)? as usize,
            k_high: u(11)? as usize,
            new_evaluations: u(12)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaltReason {
    Budget,
    MaxEpochs,
    Stagnation,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Vec<TraceRow>,
    pub history: EvaluationHistory,
    pub queue: ActiveQueue,
    pub ledger: BudgetLedger,
    pub best_state: Vec<f64>,
    pub best_cost: f64,
    pub bootstrap_evaluations: u64,
    pub halt: HaltReason,
}

impl RunResult {
    pub fn epochs(&self) -> usize {
        self.trace.len() - 1
    }

    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_trace_csv(&self.trace, writer)
    }
}

/// Shrinks `domain` around `center`; see [`BoxDomain::shrink_around`].
pub fn shrink_box(domain: &BoxDomain, center: &[f64], factor: f64) -> Result<BoxDomain> {
    domain.shrink_around(center, factor)
}

/// Evaluates the starting states, pads with uniform draws until the history
/// holds `max(min_history, a0)` distinct records, and seeds the queue with
/// the `a0` most recent states (always including the incumbent).
pub fn bootstrap<O, R>(
    objective: &O,
    domain: &BoxDomain,
    min_history: usize,
    a0: usize,
    initial_states: &[Vec<f64>],
    rng: &mut R,
    ledger: &BudgetLedger,
) -> Result<(EvaluationHistory, ActiveQueue)>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    if min_history < 3 || a0 == 0 {
        return Err(LssError::config(
            "bootstrap needs min_history >= 3 and a0 >= 1",
        ));
    }
    let mut history = EvaluationHistory::new();
    for s in initial_states {
        let s = domain.reflect(s)?;
        if !history.contains(&s) {
            history.evaluate_and_record(objective, s, 0, ledger)?;
        }
    }
    let target = min_history.max(a0);
    while history.len() < target {
        let s: Vec<f64> = domain
            .lower()
            .iter()
            .zip(domain.upper())
            .map(|(lo, hi)| rng.random_range(*lo..=*hi))
            .collect();
        if !history.contains(&s) {
            history.evaluate_and_record(objective, s, 0, ledger)?;
        }
    }
    let records = history.records();
    let mut seed: Vec<Vec<f64>> = records[records.len() - a0.min(records.len())..]
        .iter()
        .map(|r| r.state.clone())
        .collect();
    let best = history
        .incumbent()
        .expect("history is non-empty")
        .state
        .clone();
    if !seed.contains(&best) {
        seed.remove(0);
        seed.insert(0, best);
    }
    Ok((history, ActiveQueue::from_states(seed)))
}

/// Enlargement and trimming: enqueue `chosen`, evaluate those not yet in the
/// history, then trim to `a_next` keeping the incumbent. Returns the number
/// of new expensive evaluations.
pub fn enlarge_and_trim<O: Objective + ?Sized>(
    queue: &mut ActiveQueue,
    history: &mut EvaluationHistory,
    chosen: Vec<Vec<f64>>,
    a_next: usize,
    objective: &O,
    ledger: &BudgetLedger,
    epoch: usize,
) -> Result<u64> {
    let mut fresh = 0;
    for s in chosen {
        queue.enqueue(s.clone());
        if !history.contains(&s) {
            history.evaluate_and_record(objective, s, epoch, ledger)?;
            fresh += 1;
        }
    }
    let queue_best = queue_min_cost(queue, history)?;
    let star = history.incumbent().ok_or(LssError::EmptyHistory)?;
    if queue_best != star.cost {
        return Err(LssError::Invariant(format!(
            "epoch {epoch}: enlarged queue minimum {queue_best} differs from incumbent cost {}",
            star.cost
        )));
    }
    let star = star.state.clone();
    queue.trim(a_next, &star);
    Ok(fresh)
}

fn queue_min_cost(queue: &ActiveQueue, history: &EvaluationHistory) -> Result<f64> {
    let mut best = f64::INFINITY;
    for s in queue.states() {
        let c = history.cost_of(s).ok_or_else(|| {
            LssError::Invariant(format!("queue state {s:?} missing from history"))
        })?;
        best = best.min(c);
    }
    Ok(best)
}

/// Queue states are all in the history and the queue holds the incumbent's cost.
pub fn check_queue_invariants(queue: &ActiveQueue, history: &EvaluationHistory) -> Result<()> {
    let m = history.m_functional()?;
    let q = queue_min_cost(queue, history)?;
    if q != m {
        return Err(LssError::Invariant(format!(
            "queue minimum {q} differs from history minimum {m}"
        )));
    }
    Ok(())
}

fn clamp_into(p: &[f64], domain: &BoxDomain) -> Vec<f64> {
    p.iter()
        .zip(domain.lower().iter().zip(domain.upper()))
        .map(|(x, (lo, hi))| x.clamp(*lo, *hi))
        .collect()
}

fn chain_stream(epoch: usize, agent: usize, high: bool) -> u64 {
    1 + (((epoch as u64) << 32) | ((agent as u64) << 1) | high as u64)
}

/// Live state of one LSS run.
pub struct Lss<'a, O: Objective + ?Sized> {
    config: LssConfig,
    objective: &'a O,
    omega: BoxDomain,
    domain: BoxDomain,
    history: EvaluationHistory,
    queue: ActiveQueue,
    ledger: BudgetLedger,
    concentration: ConcentrationState,
    selector: ModelSelector,
    rng: ChaCha8Rng,
    epoch: usize,
    stagnant: usize,
    trace: Vec<TraceRow>,
    bootstrap_evaluations: u64,
}

impl<'a, O: Objective + ?Sized> Lss<'a, O> {
    /// Validates `config` and runs the bootstrap.
    pub fn new(config: LssConfig, objective: &'a O) -> Result<Self> {
        let omega = objective.domain();
        config.validate(omega.dim())?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let ledger = BudgetLedger::new();
        let a0 = config.schedules.queue_len.at(0);
        let (history, queue) = bootstrap(
            objective,
            &omega,
            config.min_history,
            a0,
            &config.initial_states,
            &mut rng,
            &ledger,
        )?;
        let selector = ModelSelector::new(&config.surrogate)?;
        let mut lss = Self {
            concentration: ConcentrationState::new(0.0, config.patience),
            config,
            objective,
            domain: omega.clone(),
            omega,
            history,
            queue,
            ledger,
            selector,
            rng,
            epoch: 0,
            stagnant: 0,
            trace: Vec::new(),
            bootstrap_evaluations: 0,
        };
        let raw = lss.raw_concentration()?;
        lss.concentration = ConcentrationState::new(raw, lss.config.patience);
        lss.ledger.close_epoch(0);
        lss.bootstrap_evaluations = lss.ledger.expensive_calls();
        lss.trace.push(TraceRow {
            epoch: 0,
            m_functional: lss.history.m_functional()?,
            concentration_raw: raw,
            concentration_effective: raw,
            expensive_cum: lss.bootstrap_evaluations,
            cheap_cum: 0,
            t_high_effective: lss.config.temperatures.high.temperature_at(0),
            e_low: 0,
            e_high: 0,
            queue_len: lss.queue.len(),
            k_low: 0,
            k_high: 0,
            new_evaluations: lss.bootstrap_evaluations,
        });
        check_queue_invariants(&lss.queue, &lss.history)?;
        Ok(lss)
    }

    pub fn config(&self) -> &LssConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn history(&self) -> &EvaluationHistory {
        &self.history
    }

    pub fn queue(&self) -> &ActiveQueue {
        &self.queue
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn concentration(&self) -> &ConcentrationState {
        &self.concentration
    }

    pub fn selected_model(&self) -> usize {
        self.selector.current()
    }

    fn raw_concentration(&self) -> Result<f64> {
        let agents: Vec<Vec<f64>> = self
            .queue
            .states()
            .map(|s| clamp_into(s, &self.domain))
            .collect();
        let star = clamp_into(
            &self
                .history
                .incumbent()
                .ok_or(LssError::EmptyHistory)?
                .state,
            &self.domain,
        );
        let bins = self
            .config
            .bins
            .unwrap_or_else(|| default_bins(agents.len()));
        concentration_nd(&agents, &star, &self.domain, bins, self.config.aggregation)
    }

    /// Why the run should stop before the next epoch, if it should.
    pub fn halt_reason(&self) -> Option<HaltReason> {
        if let Some(b) = self.config.budget {
            if self.ledger.expensive_calls() >= b {
                return Some(HaltReason::Budget);
            }
        }
        if self.epoch >= self.config.max_epochs {
            return Some(HaltReason::MaxEpochs);
        }
        if let Some(p) = self.config.early_stop {
            if self.stagnant >= p {
                return Some(HaltReason::Stagnation);
            }
        }
        None
    }

    fn fit_value(&self) -> Result<Box<dyn Regressor>> {
        match self.selector.fit(&self.history) {
            Ok(v) => Ok(v),
            Err(first) => {
                // fall back to any arm that fits
                for arm in &self.config.surrogate.arms {
                    if let Ok(v) = crate::surrogate::build_state_value(&self.history, arm) {
                        return Ok(v);
                    }
                }
                Err(first)
            }
        }
    }

    /// Runs one full epoch and returns its trace row.
    pub fn epoch_step(&mut self) -> Result<TraceRow> {
        let i = self.epoch + 1;
        let sched = self.config.schedules.clone();

        // sketch
        if (i - 1).is_multiple_of(self.config.surrogate.reselect_every) {
            self.selector.reselect(&self.history, &mut self.rng)?;
        }
        let value = self.fit_value()?;

        // selection
        let conc = self.concentration.effective_value;
        let m_before = self.history.m_functional()?;
        let alpha = self.history.amplitude()?;
        let t_low = self.config.temperatures.low.temperature_at(i);
        let t_high = adjust_high_temperature(
            self.config.temperatures.high.temperature_at(i),
            conc,
            alpha,
            self.config.policies.eps,
        );
        let (k_low, k_high) = (sched.k_low.at(i), sched.k_high.at(i));
        let half = if conc >= self.config.exploratory_threshold {
            1.0
        } else {
            0.5
        };
        let step: Vec<f64> = self
            .domain
            .lengths()
            .iter()
            .map(|l| l * self.config.step_fraction * half)
            .collect();
        let parents: Vec<Vec<f64>> = self.queue.states().map(<[f64]>::to_vec).collect();
        let a_i = parents.len();

        let triplets = {
            let potential = SurrogatePotential(value.as_ref());
            let (ledger, history, domain) = (&self.ledger, &self.history, &self.domain);
            let seed = self.config.seed;
            let branch = |j: usize| -> Result<BranchTriplet> {
                let parent = &parents[j];
                let parent_cost = history.cost_of(parent).ok_or_else(|| {
                    LssError::Invariant(format!("queue state {parent:?} not in history"))
                })?;
                ledger.record(CostClass::Cheap, EvalKind::Anchor);
                let parent_value = value.predict(parent);
                let chain = |steps: usize, t: f64, high: bool| {
                    let cfg = SaConfig {
                        steps,
                        step_size: step.clone(),
                        schedule: CoolingSchedule::constant(t),
                        seed,
                        stream: chain_stream(i, j, high),
                    };
                    anneal_with(
                        parent,
                        Some(parent_value),
                        &potential,
                        &cfg,
                        domain,
                        ledger,
                        |_| {},
                    )
                };
                let low = chain(k_low, t_low, false)?;
                let high = chain(k_high, t_high, true)?;
                Ok(BranchTriplet {
                    parent: parent.clone(),
                    low_child: low.state,
                    high_child: high.state,
                    parent_cost,
                    parent_value,
                    low_value: low.cost,
                    high_value: high.cost,
                })
            };
            if self.config.parallel {
                (0..a_i)
                    .into_par_iter()
                    .map(branch)
                    .collect::<Result<Vec<_>>>()?
            } else {
                (0..a_i).map(branch).collect::<Result<Vec<_>>>()?
            }
        };

        let remaining = self.config.budget.map_or(u64::MAX, |b| {
            b.saturating_sub(self.ledger.expensive_calls())
        });
        let e_i = (sched.evaluations.at(i) as u64)
            .min(a_i as u64)
            .min(remaining);
        let (e_low, e_high) = split_budget(e_i, conc, &mut self.rng);
        let (e_low, e_high) = (e_low as usize, e_high as usize);
        let star = self
            .history
            .incumbent()
            .ok_or(LssError::EmptyHistory)?
            .state
            .clone();
        let mut taken = vec![false; a_i];
        let low_measure = mu_low(&triplets, conc, &self.config.policies)?;
        let low_picks = sample_excluding(&low_measure, &mut taken, e_low, &mut self.rng)?;
        let high_measure = mu_high_unrestricted(&triplets, &star, conc, &self.config.policies)?;
        let high_picks = sample_excluding(&high_measure, &mut taken, e_high, &mut self.rng)?;
        let chosen: Vec<Vec<f64>> = low_picks
            .iter()
            .map(|&j| triplets[j].low_child.clone())
            .chain(high_picks.iter().map(|&j| triplets[j].high_child.clone()))
            .collect();

        // enlargement and trimming
        let a_next = sched.queue_len.at(i);
        let fresh = enlarge_and_trim(
            &mut self.queue,
            &mut self.history,
            chosen,
            a_next,
            self.objective,
            &self.ledger,
            i,
        )?;
        check_queue_invariants(&self.queue, &self.history)?;
        if self.queue.len() != a_next {
            return Err(LssError::Invariant(format!(
                "queue holds {} states after trimming, expected {a_next}",
                self.queue.len()
            )));
        }

        // bookkeeping
        let m_after = self.history.m_functional()?;
        let alpha_after = self.history.amplitude()?;
        self.history.update_weights(
            self.config.weights.alpha,
            self.config.weights.beta_scale / alpha_after.max(1e-12),
        )?;
        let improved = m_after < m_before;
        self.stagnant = if improved { 0 } else { self.stagnant + 1 };
        let raw = self.raw_concentration()?;
        self.concentration.apply_patience(raw, improved);
        self.ledger.close_epoch(i);
        if sched.box_factor < 1.0 && i.is_multiple_of(sched.box_every) {
            let m = (i / sched.box_every) as i32;
            let star = self
                .history
                .incumbent()
                .ok_or(LssError::EmptyHistory)?
                .state
                .clone();
            self.domain = shrink_box(&self.omega, &star, sched.box_factor.powi(m))?;
        }
        self.epoch = i;
        let row = TraceRow {
            epoch: i,
            m_functional: m_after,
            concentration_raw: raw,
            concentration_effective: self.concentration.effective_value,
            expensive_cum: self.ledger.expensive_calls(),
            cheap_cum: self.ledger.cheap_calls(),
            t_high_effective: t_high,
            e_low,
            e_high,
            queue_len: a_i,
            k_low,
            k_high,
            new_evaluations: fresh,
        };
        self.trace.push(row);
        Ok(row)
    }

    /// Runs epochs until a halting condition holds.
    pub fn run(mut self) -> Result<RunResult> {
        let halt = loop {
            if let Some(h) = self.halt_reason() {
                break h;
            }
            self.epoch_step()?;
        };
        Ok(self.finish(halt))
    }

    /// Like [`run`](Self::run), calling `observer` after bootstrap and after every epoch.
    pub fn run_observed<F: FnMut(&Self)>(mut self, mut observer: F) -> Result<RunResult> {
        observer(&self);
        let halt = loop {
            if let Some(h) = self.halt_reason() {
                break h;
            }
            self.epoch_step()?;
            observer(&self);
        };
        Ok(self.finish(halt))
    }

    fn finish(self, halt: HaltReason) -> RunResult {
        let best = self
            .history
            .incumbent()
            .expect("bootstrap filled the history");
        RunResult {
            best_state: best.state.clone(),
            best_cost: best.cost,
            trace: self.trace,
            history: self.history,
            queue: self.queue,
            ledger: self.ledger,
            bootstrap_evaluations: self.bootstrap_evaluations,
            halt,
        }
    }
}

/// Bootstraps and runs LSS on `objective` until a halting condition holds.
pub fn run<O: Objective + ?Sized>(config: LssConfig, objective: &O) -> Result<RunResult> {
    Lss::new(config, objective)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ToyLandscape;

    fn toy_config(seed: u64) -> LssConfig {
        LssConfig {
            seed,
            budget: Some(60),
            initial_states: vec![vec![0.1]; 3],
            ..LssConfig::default()
        }
    }

    #[test]
    fn bootstrap_dedups_and_pads() {
        let obj = ToyLandscape::new(1).unwrap();
        let ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (h, q) = bootstrap(
            &obj,
            &obj.domain(),
            3,
            3,
            &vec![vec![0.1]; 3],
            &mut rng,
            &ledger,
        )
        .unwrap();
        assert_eq!(h.len(), 3);
        assert_eq!(q.len(), 3);
        assert_eq!(ledger.expensive_calls(), 3);
        assert_eq!(h.records()[0].state, vec![0.1]);
    }

    #[test]
    fn bootstrap_without_padding() {
        let obj = ToyLandscape::new(1).unwrap();
        let ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let init = [vec![0.1], vec![0.5], vec![0.3]];
        let (h, q) = bootstrap(&obj, &obj.domain(), 3, 3, &init, &mut rng, &ledger).unwrap();
        let states: Vec<Vec<f64>> = h.records().iter().map(|r| r.state.clone()).collect();
        assert_eq!(states, init.to_vec());
        assert_eq!(ledger.expensive_calls(), 3);
        assert!(q.contains(&[0.5]));
    }

    #[test]
    fn bootstrap_queue_holds_incumbent() {
        let obj = ToyLandscape::new(1).unwrap();
        let ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let init = [vec![0.9], vec![0.1], vec![0.3], vec![0.5]];
        let (h, q) = bootstrap(&obj, &obj.domain(), 3, 2, &init, &mut rng, &ledger).unwrap();
        assert_eq!(h.len(), 4);
        assert_eq!(q.len(), 2);
        assert!(q.contains(&[0.9]));
    }

    #[test]
    fn schedule_validation() {
        let mut s = EpochSchedules {
            evaluations: Schedule::Constant(4),
            ..EpochSchedules::default()
        };
        assert!(s.validate().is_err());
        s.evaluations = Schedule::Table(vec![3, 2, 3]);
        assert!(s.validate().is_err());
        s.evaluations = Schedule::Table(vec![3, 3, 2, 1]);
        assert!(s.validate().is_ok());
        assert_eq!(s.evaluations.at(10), 1);
    }

    #[test]
    fn budget_of_bootstrap_runs_no_epochs() {
        let obj = ToyLandscape::new(1).unwrap();
        let cfg = LssConfig {
            budget: Some(3),
            ..toy_config(1)
        };
        let r = run(cfg, &obj).unwrap();
        assert_eq!(r.epochs(), 0);
        assert_eq!(r.halt, HaltReason::Budget);
        let best = r
            .history
            .records()
            .iter()
            .map(|x| x.cost)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_cost, best);
    }

    #[test]
    fn max_epochs_rows() {
        let obj = ToyLandscape::new(1).unwrap();
        let cfg = LssConfig {
            budget: None,
            max_epochs: 10,
            ..toy_config(2)
        };
        let r = run(cfg, &obj).unwrap();
        assert_eq!(r.trace.len(), 11);
        assert_eq!(r.halt, HaltReason::MaxEpochs);
    }

    #[test]
    fn zero_evaluations_leave_state_alone() {
        let obj = ToyLandscape::new(1).unwrap();
        let mut cfg = toy_config(3);
        cfg.schedules.evaluations = Schedule::Constant(0);
        let mut lss = Lss::new(cfg, &obj).unwrap();
        let before: Vec<Vec<f64>> = lss.queue().states().map(<[f64]>::to_vec).collect();
        let m = lss.history().m_functional().unwrap();
        let n = lss.history().len();
        lss.epoch_step().unwrap();
        let after: Vec<Vec<f64>> = lss.queue().states().map(<[f64]>::to_vec).collect();
        assert_eq!(before, after);
        assert_eq!(lss.history().len(), n);
        assert_eq!(lss.history().m_functional().unwrap(), m);
    }

    #[test]
    fn accounting_matches_trace() {
        let obj = ToyLandscape::new(2).unwrap();
        let cfg = LssConfig {
            initial_states: vec![vec![0.1, 0.1]; 3],
            ..toy_config(4)
        };
        let r = run(cfg, &obj).unwrap();
        let cheap: u64 = r.trace[1..]
            .iter()
            .map(|t| ((t.k_low + t.k_high) * t.queue_len) as u64)
            .sum();
        assert_eq!(r.ledger.cheap_calls(), cheap);
        let fresh: u64 = r.trace.iter().map(|t| t.new_evaluations).sum();
        assert_eq!(r.ledger.expensive_calls(), fresh);
        assert_eq!(r.ledger.expensive_calls() as usize, r.history.len());
        assert!(r.ledger.expensive_calls() <= 60);
    }

    #[test]
    fn reproducible_and_parallel_agnostic() {
        let obj = ToyLandscape::new(1).unwrap();
        let a = run(toy_config(5), &obj).unwrap();
        let b = run(toy_config(5), &obj).unwrap();
        let c = run(
            LssConfig {
                parallel: true,
                ..toy_config(5)
            },
            &obj,
        )
        .unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace, c.trace);
    }

    #[test]
    fn trace_csv_round_trip() {
        let obj = ToyLandscape::new(1).unwrap();
        let r = run(toy_config(6), &obj).unwrap();
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf).unwrap();
        let back = read_trace_csv(buf.as_slice()).unwrap();
        assert_eq!(back, r.trace);
    }

    #[test]
    fn monotone_m_functional() {
        let obj = ToyLandscape::new(1).unwrap();
        let r = run(toy_config(7), &obj).unwrap();
        assert!(r
            .trace
            .windows(2)
            .all(|w| w[1].m_functional <= w[0].m_functional));
        assert_eq!(r.trace.last().unwrap().m_functional, r.best_cost);
    }

    #[test]
    fn shrinking_keeps_box_inside() {
        let obj = ToyLandscape::new(1).unwrap();
        let mut cfg = toy_config(8);
        cfg.schedules.box_factor = 0.5;
        cfg.schedules.box_every = 2;
        cfg.budget = None;
        cfg.max_epochs = 8;
        let mut lss = Lss::new(cfg, &obj).unwrap();
        for _ in 0..8 {
            lss.epoch_step().unwrap();
        }
        let d = lss.domain();
        assert!((d.lengths()[0] - 0.0625).abs() < 1e-12);
        assert!(d.lower()[0] >= 0.0 && d.upper()[0] <= 1.0);
    }
}
