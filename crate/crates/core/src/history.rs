//! Evaluation history: every `(state, E(state))` pair ever paid for, plus
//! the recency/quality weights fed to the surrogate.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::domain::Objective;
use crate::error::{LssError, Result};
use crate::ledger::BudgetLedger;

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    pub state: Vec<f64>,
    /// True objective value; never a surrogate prediction.
    pub cost: f64,
    /// Interpolation weight in `[0, 1]`.
    pub weight: f64,
    pub epoch_added: usize,
}

fn state_key(state: &[f64]) -> Vec<u64> {
    state.iter().map(|x| x.to_bits()).collect()
}

/// Append-only set of evaluated states with its incumbent (lowest-cost record).
///
/// States are identified by exact bitwise equality of their coordinates.
#[derive(Debug, Clone, Default)]
pub struct EvaluationHistory {
    records: Vec<EvaluationRecord>,
    index: HashMap<Vec<u64>, usize>,
    incumbent: Option<usize>,
}

impl EvaluationHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EvaluationRecord] {
        &self.records
    }

    pub fn dim(&self) -> Option<usize> {
        self.records.first().map(|r| r.state.len())
    }

    pub fn contains(&self, state: &[f64]) -> bool {
        self.index.contains_key(&state_key(state))
    }

    pub fn get(&self, state: &[f64]) -> Option<&EvaluationRecord> {
        self.index.get(&state_key(state)).map(|&i| &self.records[i])
    }

    pub fn cost_of(&self, state: &[f64]) -> Option<f64> {
        self.get(state).map(|r| r.cost)
    }

    /// Appends a fresh record with weight 1 and moves the incumbent on strict improvement.
    pub fn record_evaluation(&mut self, state: Vec<f64>, cost: f64, epoch: usize) -> Result<()> {
        if let Some(d) = self.dim() {
            if state.len() != d {
                return Err(LssError::invalid(format!(
                    "state has dimension {}, history holds dimension {d}",
                    state.len()
                )));
            }
        }
        if !cost.is_finite() {
            return Err(LssError::invalid(format!("non-finite cost {cost}")));
        }
        let key = state_key(&state);
        if self.index.contains_key(&key) {
            return Err(LssError::DuplicateState(state));
        }
        let i = self.records.len();
        self.records.push(EvaluationRecord {
            state,
            cost,
            weight: 1.0,
            epoch_added: epoch,
        });
        self.index.insert(key, i);
        match self.incumbent {
            Some(best) if self.records[best].cost <= cost => {}
            _ => self.incumbent = Some(i),
        }
        Ok(())
    }

    /// Evaluates `E(state)`, charges one expensive call, and records the result.
    pub fn evaluate_and_record<O: Objective + ?Sized>(
        &mut self,
        objective: &O,
        state: Vec<f64>,
        epoch: usize,
        ledger: &BudgetLedger,
    ) -> Result<f64> {
        if self.contains(&state) {
            return Err(LssError::DuplicateState(state));
        }
        let cost = objective.evaluate(&state);
        ledger.record_expensive();
        self.record_evaluation(state, cost, epoch)?;
        Ok(cost)
    }

    pub fn incumbent(&self) -> Option<&EvaluationRecord> {
        self.incumbent.map(|i| &self.records[i])
    }

    /// The M-functional: lowest recorded cost.
    pub fn m_functional(&self) -> Result<f64> {
        self.incumbent()
            .map(|r| r.cost)
            .ok_or(LssError::EmptyHistory)
    }

    /// Observed cost range `max E - min E`.
    pub fn amplitude(&self) -> Result<f64> {
        let m = self.m_functional()?;
        let max = self
            .records
            .iter()
            .map(|r| r.cost)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(max - m)
    }

    /// Rank `exp(-beta (E(state) - M))`; exactly 1 at the incumbent.
    pub fn rank(&self, state: &[f64], beta: f64) -> Result<f64> {
        let m = self.m_functional()?;
        let rec = self
            .get(state)
            .ok_or_else(|| LssError::UnknownState(state.to_vec()))?;
        Ok(rank_value(rec.cost, m, beta))
    }

    /// Temporal-difference step `w <- w + alpha (rank - w)` on every record.
    pub fn update_weights(&mut self, alpha: f64, beta: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(LssError::invalid(format!(
                "weight rate {alpha} not in [0, 1]"
            )));
        }
        if !(beta > 0.0) {
            return Err(LssError::invalid(format!("beta {beta} must be positive")));
        }
        let Ok(m) = self.m_functional() else {
            return Ok(());
        };
        for rec in &mut self.records {
            let rank = rank_value(rec.cost, m, beta);
            rec.weight = (rec.weight + alpha * (rank - rec.weight)).clamp(0.0, 1.0);
        }
        Ok(())
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.records.iter().map(|r| r.state.as_slice())
    }

    /// Writes `epoch,x0..x{d-1},cost,weight` rows with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let dim = self.dim().unwrap_or(0);
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["epoch".to_string()];
        header.extend((0..dim).map(|j| format!("x{j}")));
        header.push("cost".into());
        header.push("weight".into());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.epoch_added.to_string()];
            row.extend(r.state.iter().map(|x| format_float(*x)));
            row.push(format_float(r.cost));
            row.push(format_float(r.weight));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a history written by [`EvaluationHistory::write_csv`], weights included.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let ncol = header.len();
        if ncol < 4
            || &header[0] != "epoch"
            || &header[ncol - 2] != "cost"
            || &header[ncol - 1] != "weight"
        {
            return Err(LssError::invalid(
                "history csv header must be epoch,x0..,cost,weight",
            ));
        }
        let dim = ncol - 3;
        let mut history = EvaluationHistory::new();
        for row in r.records() {
            let row = row?;
            let parse = |i: usize| -> Result<f64> {
                row[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| LssError::invalid(format!("bad number `{}`", &row[i])))
            };
            let epoch: usize = row[0]
                .trim()
                .parse()
                .map_err(|_| LssError::invalid(format!("bad epoch `{}`", &row[0])))?;
            let state = (1..=dim).map(parse).collect::<Result<Vec<_>>>()?;
            let cost = parse(dim + 1)?;
            let weight = parse(dim + 2)?;
            if !(0.0..=1.0).contains(&weight) {
                return Err(LssError::invalid(format!("weight {weight} outside [0, 1]")));
            }
            history.record_evaluation(state, cost, epoch)?;
            history.records.last_mut().expect("just pushed").weight = weight;
        }
        Ok(history)
    }
}

pub(crate) fn rank_value(cost: f64, m: f64, beta: f64) -> f64 {
    (-beta * (cost - m)).exp()
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_float(x: f64) -> String {
    format!("{x:?}")
}
