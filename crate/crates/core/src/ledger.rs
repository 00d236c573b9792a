//! Exact bookkeeping of expensive objective calls versus cheap surrogate calls.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Which counter a potential evaluation is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostClass {
    /// The true objective `E`.
    Expensive,
    /// A fitted state-value function.
    Cheap,
}

/// Why an evaluation happened inside an annealing chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalKind {
    /// Cost of the chain's start state.
    Anchor,
    /// Cost of a proposal.
    Step,
}

/// Counter deltas accumulated over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LedgerRow {
    pub epoch: usize,
    pub expensive: u64,
    pub cheap: u64,
    pub cheap_anchor: u64,
}

/// Evaluation counters.
///
/// `cheap_calls` counts surrogate evaluations at annealing proposals, the
/// quantity `sum_i (K_low + K_high) a_i`. Surrogate evaluations at chain
/// start states are charged to `cheap_anchor_calls` so both totals stay exact.
/// Every expensive evaluation, anchor or step, goes to `expensive_calls`.
#[derive(Debug, Default)]
pub struct BudgetLedger {
    expensive: AtomicU64,
    cheap: AtomicU64,
    cheap_anchor: AtomicU64,
    rows: Vec<LedgerRow>,
    closed: (u64, u64, u64),
}

impl BudgetLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, class: CostClass, kind: EvalKind) {
        let counter = match (class, kind) {
            (CostClass::Expensive, _) => &self.expensive,
            (CostClass::Cheap, EvalKind::Step) => &self.cheap,
            (CostClass::Cheap, EvalKind::Anchor) => &self.cheap_anchor,
        };
        counter.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_expensive(&self) {
        self.record(CostClass::Expensive, EvalKind::Step);
    }

    pub fn expensive_calls(&self) -> u64 {
        self.expensive.load(Ordering::Relaxed)
    }

    pub fn cheap_calls(&self) -> u64 {
        self.cheap.load(Ordering::Relaxed)
    }

    pub fn cheap_anchor_calls(&self) -> u64 {
        self.cheap_anchor.load(Ordering::Relaxed)
    }

    /// All surrogate evaluations, steps and anchors.
    pub fn total_cheap_calls(&self) -> u64 {
        self.cheap_calls() + self.cheap_anchor_calls()
    }

    /// Closes the current epoch, storing the counter deltas since the last close.
    pub fn close_epoch(&mut self, epoch: usize) -> LedgerRow {
        let now = (
            self.expensive_calls(),
            self.cheap_calls(),
            self.cheap_anchor_calls(),
        );
        let row = LedgerRow {
            epoch,
            expensive: now.0 - self.closed.0,
            cheap: now.1 - self.closed.1,
            cheap_anchor: now.2 - self.closed.2,
        };
        self.closed = now;
        self.rows.push(row);
        row
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }
}

impl Clone for BudgetLedger {
    fn clone(&self) -> Self {
        Self {
            expensive: AtomicU64::new(self.expensive_calls()),
            cheap: AtomicU64::new(self.cheap_calls()),
            cheap_anchor: AtomicU64::new(self.cheap_anchor_calls()),
            rows: self.rows.clone(),
            closed: self.closed,
        }
    }
}
