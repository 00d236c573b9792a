//! Landscape-Sketch-and-Step (LSS): a multi-agent global optimizer for
//! expensive black-box objectives.
//!
//! Each epoch fits a cheap weighted state-value function on every true
//! evaluation seen so far, lets each active agent branch into a low- and a
//! high-temperature annealing chain on that function, and spends a small
//! number of true evaluations on children picked by concentration-aware
//! policies. A [`BudgetLedger`] keeps exact counts of expensive and cheap calls.
//!
//! ```
//! use lss::{run, LssConfig, ToyLandscape};
//!
//! let objective = ToyLandscape::new(1).unwrap();
//! let config = LssConfig {
//!     budget: Some(30),
//!     initial_states: vec![vec![0.1]; 3],
//!     ..LssConfig::default()
//! };
//! let result = run(config, &objective).unwrap();
//! assert!(result.best_cost <= 0.84);
//! assert!(result.ledger.expensive_calls() <= 30);
//! ```

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod annealer;
pub mod concentration;
pub mod domain;
pub mod engine;
pub mod error;
pub mod history;
pub mod ledger;
pub mod policies;
pub mod queue;
pub mod surrogate;

pub use annealer::{
    anneal, anneal_with, AnnealOutcome, CoolingSchedule, ExpensivePotential, Potential, SaConfig,
};
pub use concentration::{Aggregation, ConcentrationState, PatienceConfig};
pub use domain::{
    landscape_extrema, reflect_into_box, toy_f, toy_g, toy_g_normalized, BoxDomain, Objective,
    ObjectiveId, ToyLandscape,
};
pub use engine::{run, EpochSchedules, HaltReason, Lss, LssConfig, RunResult, Schedule, TraceRow};
pub use error::{LssError, Result};
pub use history::{EvaluationHistory, EvaluationRecord};
pub use ledger::{BudgetLedger, CostClass};
pub use queue::ActiveQueue;
pub use surrogate::{ModelConfig, Regressor, SurrogateConfig};
