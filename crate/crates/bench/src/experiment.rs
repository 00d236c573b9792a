//! Experiment specs, repeated seeded runs, and their on-disk outputs.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use lss::domain::VALLEY_POSITIONS;
use lss::engine::write_trace_csv;
use lss::{toy_f, LssConfig, ObjectiveId, TraceRow};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::sa::{run_sa, SaBaselineConfig};

/// `M <= level + LEVEL_TOL` counts as hitting `level`.
pub const LEVEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lss,
    Sa,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lss => "lss",
            Method::Sa => "sa",
        })
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lss" => Ok(Method::Lss),
            "sa" => Ok(Method::Sa),
            other => Err(BenchError::config(format!("unknown method `{other}`"))),
        }
    }
}

/// Valley values of the 1-D toy landscape, from the highest (start) valley
/// down to the global minimum.
pub fn valley_levels() -> Vec<f64> {
    VALLEY_POSITIONS.iter().map(|&x| toy_f(x)).collect()
}

/// Settings for the `bench` subcommand: which SA step fractions to compare
/// against LSS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub sa_step_fractions: Vec<f64>,
    pub include_lss: bool,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            sa_step_fractions: vec![1.0 / 12.5, 1.0 / 25.0, 1.0 / 50.0],
            include_lss: true,
        }
    }
}

/// One experiment: `runs` seeded runs of one method on one objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Label used for output directories and table rows; derived when empty.
    pub name: String,
    pub method: Method,
    pub objective: ObjectiveId,
    pub runs: usize,
    pub seed_base: u64,
    /// Expensive-call cap per run, start/bootstrap evaluations included.
    pub budget: u64,
    /// Levels for hitting-time statistics, reported in this order.
    pub level_sets: Vec<f64>,
    /// Starting point of every agent; defaults to the objective's usual start.
    pub start: Option<Vec<f64>>,
    pub lss: LssConfig,
    pub sa: SaBaselineConfig,
    pub bench: BenchSection,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: String::new(),
            method: Method::Lss,
            objective: ObjectiveId::Toy { dim: 1 },
            runs: 20,
            seed_base: 0,
            budget: 120,
            level_sets: valley_levels(),
            start: None,
            lss: LssConfig::default(),
            sa: SaBaselineConfig::default(),
            bench: BenchSection::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BenchError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(BenchError::io(path))?;
        Self::from_toml(&text).map_err(|e| BenchError::config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| BenchError::config(e.to_string()))
    }

    pub fn label(&self) -> String {
        if !self.name.is_empty() {
            return self.name.clone();
        }
        match self.method {
            Method::Lss => "lss".into(),
            Method::Sa => format!("sa_{}", fraction_label(self.sa.step_fraction)),
        }
    }

    pub fn start_point(&self) -> Vec<f64> {
        self.start
            .clone()
            .unwrap_or_else(|| self.objective.initial_point())
    }

    /// LSS settings for run `r`: seed, budget and (if unset) starting states filled in.
    pub fn lss_config(&self, run: usize) -> LssConfig {
        let mut cfg = self.lss.clone();
        cfg.seed = self.seed(run);
        cfg.budget = Some(self.budget);
        if cfg.initial_states.is_empty() {
            let a0 = cfg.schedules.queue_len.at(0);
            cfg.initial_states = vec![self.start_point(); a0];
        }
        cfg
    }

    pub fn seed(&self, run: usize) -> u64 {
        self.seed_base.wrapping_add(run as u64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(BenchError::config("runs must be at least 1"));
        }
        if self.budget == 0 {
            return Err(BenchError::config("budget must be positive"));
        }
        if self.level_sets.iter().any(|l| !l.is_finite()) {
            return Err(BenchError::config("level sets must be finite"));
        }
        let dim = self.objective.dim();
        if self.start_point().len() != dim {
            return Err(BenchError::config(format!(
                "start point must have {dim} coordinates"
            )));
        }
        match self.method {
            Method::Lss => self.lss_config(0).validate(dim)?,
            Method::Sa => self.sa.validate()?,
        }
        if self.bench.sa_step_fractions.iter().any(|f| !(*f > 0.0)) {
            return Err(BenchError::config(
                "bench.sa_step_fractions must be positive",
            ));
        }
        Ok(())
    }

    /// The specs the `bench` subcommand compares: LSS (if enabled) and one
    /// SA spec per configured step fraction, all sharing this spec's budget.
    pub fn bench_specs(&self) -> Vec<ExperimentSpec> {
        let mut out = Vec::new();
        if self.bench.include_lss {
            out.push(ExperimentSpec {
                name: "lss".into(),
                method: Method::Lss,
                ..self.clone()
            });
        }
        for &f in &self.bench.sa_step_fractions {
            let mut spec = ExperimentSpec {
                name: String::new(),
                method: Method::Sa,
                ..self.clone()
            };
            spec.sa.step_fraction = f;
            out.push(spec);
        }
        out
    }
}

/// `0.02` → `L50`, i.e. the step as a divisor of the box side.
pub fn fraction_label(fraction: f64) -> String {
    let d = 1.0 / fraction;
    if (d - d.round()).abs() < 1e-9 {
        format!("L{}", d.round())
    } else {
        format!("L{d}")
    }
}

/// Per-run statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub method: Method,
    /// First epoch with `M <= level`, per level set.
    pub hitting_epochs: Vec<Option<usize>>,
    /// Cumulative expensive calls at that epoch.
    pub hitting_evaluations: Vec<Option<u64>>,
    pub epochs: usize,
    pub initial_m: f64,
    pub final_m: f64,
    pub expensive_calls: u64,
    pub cheap_calls: u64,
}

impl RunSummary {
    pub fn from_trace(
        run: usize,
        seed: u64,
        method: Method,
        trace: &[TraceRow],
        levels: &[f64],
    ) -> Self {
        let first = trace.first().expect("traces start with the bootstrap row");
        let last = trace.last().expect("traces start with the bootstrap row");
        let hits: Vec<Option<&TraceRow>> = levels
            .iter()
            .map(|&l| trace.iter().find(|r| r.m_functional <= l + LEVEL_TOL))
            .collect();
        Self {
            run,
            seed,
            method,
            hitting_epochs: hits.iter().map(|h| h.map(|r| r.epoch)).collect(),
            hitting_evaluations: hits.iter().map(|h| h.map(|r| r.expensive_cum)).collect(),
            epochs: last.epoch,
            initial_m: first.m_functional,
            final_m: last.m_functional,
            expensive_calls: last.expensive_cum,
            cheap_calls: last.cheap_cum,
        }
    }
}

/// One completed run: its trace and summary.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub summary: RunSummary,
    pub trace: Vec<TraceRow>,
}

/// Executes `spec.runs` independent runs (seeds `seed_base + r`) on the
/// rayon pool. Results come back in run order regardless of scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let objective = spec.objective.build()?;
    (0..spec.runs)
        .into_par_iter()
        .map(|r| {
            let seed = spec.seed(r);
            let trace = match spec.method {
                Method::Lss => lss::run(spec.lss_config(r), &objective)?.trace,
                Method::Sa => {
                    run_sa(&objective, &spec.start_point(), spec.budget, seed, &spec.sa)?.trace
                }
            };
            let summary = RunSummary::from_trace(r, seed, spec.method, &trace, &spec.level_sets);
            Ok(RunRecord { summary, trace })
        })
        .collect()
}

pub fn trace_file_name(run: usize) -> String {
    format!("run_{run:03}.csv")
}

/// Writes `run_XXX.csv` traces and `summary.csv` into `dir`.
pub fn write_outputs(spec: &ExperimentSpec, records: &[RunRecord], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(BenchError::io(dir))?;
    for rec in records {
        let path = dir.join(trace_file_name(rec.summary.run));
        let file = fs::File::create(&path).map_err(BenchError::io(&path))?;
        write_trace_csv(&rec.trace, std::io::BufWriter::new(file)).map_err(|e| match e {
            lss::LssError::Io(source) => BenchError::Io {
                path: path.clone(),
                source,
            },
            lss::LssError::Csv(source) => BenchError::Csv {
                path: path.clone(),
                source,
            },
            other => other.into(),
        })?;
    }
    let path = dir.join("summary.csv");
    let file = fs::File::create(&path).map_err(BenchError::io(&path))?;
    write_summary_csv(spec, records, file).map_err(|source| BenchError::Csv { path, source })
}

/// Reads the `run_XXX.csv` traces of a directory written by [`write_outputs`], in run order.
pub fn read_traces(dir: &Path) -> Result<Vec<Vec<TraceRow>>> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(BenchError::io(dir))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("run_") && n.ends_with(".csv"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(BenchError::config(format!(
            "no run_*.csv traces in {}",
            dir.display()
        )));
    }
    names
        .into_iter()
        .map(|n| {
            let path = dir.join(n);
            let file = fs::File::open(&path).map_err(BenchError::io(&path))?;
            lss::engine::read_trace_csv(file).map_err(|e| match e {
                lss::LssError::Csv(source) => BenchError::Csv { path, source },
                other => other.into(),
            })
        })
        .collect()
}

/// Level value rounded for use in column names: `0.8400000000000001` → `0.84`.
pub fn level_label(level: f64) -> String {
    let s = format!("{level:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn level_column(prefix: &str, level: f64) -> String {
    format!("{prefix}_{}", level_label(level))
}

pub fn write_summary_csv<W: std::io::Write>(
    spec: &ExperimentSpec,
    records: &[RunRecord],
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = [
        "run",
        "seed",
        "method",
        "trace",
        "epochs",
        "initial_m",
        "final_m",
        "expensive_calls",
        "cheap_calls",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(
        spec.level_sets
            .iter()
            .map(|&l| level_column("hit_epoch", l)),
    );
    header.extend(
        spec.level_sets
            .iter()
            .map(|&l| level_column("hit_evals", l)),
    );
    w.write_record(&header)?;
    let fmt = |x: f64| format!("{x:?}");
    for rec in records {
        let s = &rec.summary;
        let mut row = vec![
            s.run.to_string(),
            s.seed.to_string(),
            s.method.to_string(),
            trace_file_name(s.run),
            s.epochs.to_string(),
            fmt(s.initial_m),
            fmt(s.final_m),
            s.expensive_calls.to_string(),
            s.cheap_calls.to_string(),
        ];
        row.extend(
            s.hitting_epochs
                .iter()
                .map(|h| h.map_or("-1".into(), |e| e.to_string())),
        );
        row.extend(
            s.hitting_evaluations
                .iter()
                .map(|h| h.map_or("-1".into(), |e| e.to_string())),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
