//! Long-format `series,x,y` CSV for external plotting.

use std::fmt;
use std::str::FromStr;

use lss::domain::normalize_cost;
use lss::TraceRow;

use crate::error::BenchError;
use crate::experiment::level_label;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// One row per (run, level): first epoch with `M <= level`, or -1.
    Hitting,
    /// One row per (run, epoch >= 1): effective concentration.
    Concentration,
    /// One row per (run, epoch): `M^(1/dim)`, comparable across dimensions.
    Decay,
}

impl FromStr for PlotKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "hitting" => Ok(PlotKind::Hitting),
            "concentration" => Ok(PlotKind::Concentration),
            "decay" => Ok(PlotKind::Decay),
            other => Err(BenchError::config(format!(
                "unknown plot kind `{other}` (expected hitting, concentration or decay)"
            ))),
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlotKind::Hitting => "hitting",
            PlotKind::Concentration => "concentration",
            PlotKind::Decay => "decay",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

/// Builds plot rows from run traces (series named `run_XXX`).
pub fn emit_plot_data(
    traces: &[Vec<TraceRow>],
    kind: PlotKind,
    level_sets: &[f64],
    dim: usize,
) -> Result<Vec<PlotRow>, BenchError> {
    if traces.is_empty() {
        return Err(BenchError::config("no runs to plot"));
    }
    let mut rows = Vec::new();
    for (r, trace) in traces.iter().enumerate() {
        let series = format!("run_{r:03}");
        match kind {
            PlotKind::Hitting => {
                for &level in level_sets {
                    let hit = trace
                        .iter()
                        .find(|t| t.m_functional <= level + crate::experiment::LEVEL_TOL)
                        .map_or(-1.0, |t| t.epoch as f64);
                    rows.push(PlotRow {
                        series: series.clone(),
                        x: level,
                        y: hit,
                    });
                }
            }
            PlotKind::Concentration => {
                for t in trace.iter().filter(|t| t.epoch > 0) {
                    rows.push(PlotRow {
                        series: series.clone(),
                        x: t.epoch as f64,
                        y: t.concentration_effective,
                    });
                }
            }
            PlotKind::Decay => {
                for t in trace {
                    rows.push(PlotRow {
                        series: series.clone(),
                        x: t.epoch as f64,
                        y: normalize_cost(t.m_functional, dim),
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn plot_csv(rows: &[PlotRow], kind: PlotKind) -> String {
    let mut out = String::from("series,x,y\n");
    for r in rows {
        let x = match kind {
            PlotKind::Hitting => level_label(r.x),
            _ => format!("{}", r.x),
        };
        out.push_str(&format!("{},{},{}\n", r.series, x, r.y));
    }
    out
}
