//! Benchmark harness: repeated seeded LSS and simulated-annealing runs on
//! the toy tunneling landscapes, comparison tables and plot-ready CSV.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compare;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod sa;

pub use compare::{compare, median, quantile, Comparison, MethodRow};
pub use error::{BenchError, Result};
pub use experiment::{
    run_experiment, valley_levels, write_outputs, ExperimentSpec, Method, RunRecord, RunSummary,
};
pub use plot::{emit_plot_data, plot_csv, PlotKind, PlotRow};
pub use sa::{run_sa, SaBaselineConfig, SaRun};
