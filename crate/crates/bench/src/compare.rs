//! Side-by-side statistics of several experiments under one budget.

use std::fmt::Write as _;

use crate::error::{BenchError, Result};
use crate::experiment::{level_label, run_experiment, ExperimentSpec, Method, RunRecord};

/// Linear-interpolation quantile of `sorted` (ascending, non-empty).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub label: String,
    pub method: Method,
    pub runs: usize,
    pub final_m_q1: f64,
    pub final_m_median: f64,
    pub final_m_q3: f64,
    /// Fraction of runs hitting each level set.
    pub hit_fractions: Vec<f64>,
    pub mean_expensive: f64,
    pub mean_cheap: f64,
}

impl MethodRow {
    pub fn from_records(label: String, method: Method, records: &[RunRecord]) -> Self {
        let n = records.len();
        let mut finals: Vec<f64> = records.iter().map(|r| r.summary.final_m).collect();
        finals.sort_by(f64::total_cmp);
        let levels = records
            .first()
            .map_or(0, |r| r.summary.hitting_epochs.len());
        let hit_fractions = (0..levels)
            .map(|l| {
                records
                    .iter()
                    .filter(|r| r.summary.hitting_epochs[l].is_some())
                    .count() as f64
                    / n as f64
            })
            .collect();
        let mean =
            |f: fn(&RunRecord) -> u64| records.iter().map(|r| f(r) as f64).sum::<f64>() / n as f64;
        Self {
            label,
            method,
            runs: n,
            final_m_q1: quantile(&finals, 0.25),
            final_m_median: quantile(&finals, 0.5),
            final_m_q3: quantile(&finals, 0.75),
            hit_fractions,
            mean_expensive: mean(|r| r.summary.expensive_calls),
            mean_cheap: mean(|r| r.summary.cheap_calls),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub level_sets: Vec<f64>,
    pub budget: u64,
    pub rows: Vec<MethodRow>,
    /// The underlying runs, one entry per spec.
    pub records: Vec<Vec<RunRecord>>,
}

/// Runs every spec with its budget replaced by `matched_budget` and
/// tabulates the results.
pub fn compare(specs: &[ExperimentSpec], matched_budget: u64) -> Result<Comparison> {
    let first = specs
        .first()
        .ok_or_else(|| BenchError::config("nothing to compare"))?;
    for s in specs {
        if s.objective != first.objective {
            return Err(BenchError::config(format!(
                "cannot compare objectives {} and {}",
                first.objective, s.objective
            )));
        }
        if s.level_sets != first.level_sets {
            return Err(BenchError::config("compared specs must share level sets"));
        }
    }
    let mut rows = Vec::with_capacity(specs.len());
    let mut records = Vec::with_capacity(specs.len());
    for s in specs {
        let spec = ExperimentSpec {
            budget: matched_budget,
            ..s.clone()
        };
        let recs = run_experiment(&spec)?;
        rows.push(MethodRow::from_records(spec.label(), spec.method, &recs));
        records.push(recs);
    }
    Ok(Comparison {
        level_sets: first.level_sets.clone(),
        budget: matched_budget,
        rows,
        records,
    })
}

impl Comparison {
    fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "method",
            "runs",
            "budget",
            "final_m_q1",
            "final_m_median",
            "final_m_q3",
            "mean_expensive",
            "mean_cheap",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend(
            self.level_sets
                .iter()
                .map(|&l| format!("hit_{}", level_label(l))),
        );
        h
    }

    fn cells(&self, row: &MethodRow) -> Vec<String> {
        let mut c = vec![
            row.label.clone(),
            row.runs.to_string(),
            self.budget.to_string(),
            format!("{:.6}", row.final_m_q1),
            format!("{:.6}", row.final_m_median),
            format!("{:.6}", row.final_m_q3),
            format!("{:.2}", row.mean_expensive),
            format!("{:.2}", row.mean_cheap),
        ];
        c.extend(row.hit_fractions.iter().map(|f| format!("{f:.3}")));
        c
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header()).expect("writing to memory");
        for row in &self.rows {
            w.write_record(self.cells(row)).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("ascii output")
    }

    /// Right-aligned plain-text table.
    pub fn to_text(&self) -> String {
        let header = self.header();
        let body: Vec<Vec<String>> = self.rows.iter().map(|r| self.cells(r)).collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                body.iter()
                    .map(|r| r[i].len())
                    .chain([header[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for line in std::iter::once(&header).chain(&body) {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect();
            writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lss::ObjectiveId;

    fn spec(method: Method) -> ExperimentSpec {
        ExperimentSpec {
            method,
            runs: 3,
            budget: 30,
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn self_comparison_gives_identical_rows() {
        let s = spec(Method::Lss);
        let c = compare(&[s.clone(), s], 30).unwrap();
        let mut a = c.rows[0].clone();
        a.label.clear();
        let mut b = c.rows[1].clone();
        b.label.clear();
        assert_eq!(a, b);
    }

    #[test]
    fn sa_fractions_share_expensive_totals() {
        let mut a = spec(Method::Sa);
        a.sa.step_fraction = 0.04;
        let mut b = spec(Method::Sa);
        b.sa.step_fraction = 0.02;
        let c = compare(&[a, b], 40).unwrap();
        assert_eq!(c.rows.len(), 2);
        assert_eq!(c.rows[0].mean_expensive, 40.0);
        assert_eq!(c.rows[0].mean_expensive, c.rows[1].mean_expensive);
        assert_ne!(c.rows[0].label, c.rows[1].label);
    }

    #[test]
    fn level_columns_follow_valleys() {
        let c = compare(&[spec(Method::Sa)], 10).unwrap();
        let csv = c.to_csv();
        let header = csv.lines().next().unwrap();
        assert!(
            header.ends_with("hit_0.84,hit_0.56,hit_0.36,hit_0.24,hit_0.2"),
            "{header}"
        );
        assert_eq!(c.to_text().lines().count(), 2);
    }

    #[test]
    fn mismatched_objectives_rejected() {
        let a = spec(Method::Lss);
        let b = ExperimentSpec {
            objective: ObjectiveId::Toy { dim: 2 },
            ..spec(Method::Sa)
        };
        assert!(matches!(compare(&[a, b], 30), Err(BenchError::Config(_))));
        assert!(compare(&[], 30).is_err());
    }
}
