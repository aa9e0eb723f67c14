//! Throughput reports.
//!
//! Throughput is the share of submitted jobs that completed without ever being
//! resubmitted. A job evicted once and finished later counts as restarted, not
//! as completed.

use std::fmt;

use thiserror::Error;

use crate::domain::JobStatus;
use crate::schedulers::PolicyKind;
use crate::simulator::SimResult;

pub const REPORT_COLUMNS: &str = "policy,total,completed,restarted,abandoned,throughput_pct";

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("reports disagree on total jobs: {0} vs {1}")]
    MismatchedTotals(f64, f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Rounds to one decimal place, halves away from negative infinity.
pub fn round_half_up_1dp(x: f64) -> f64 {
    // nudge so that values such as 91.45 that land a hair below the half
    // still round up
    ((x * 10.0) + 0.5 + 1e-9).floor() / 10.0
}

pub fn fmt_1dp(x: f64) -> String {
    let r = round_half_up_1dp(x);
    if r == 0.0 {
        "0.0".into()
    } else {
        format!("{r:.1}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub label: String,
    pub policy: PolicyKind,
    pub total_jobs: usize,
    /// Completed with zero restarts.
    pub jobs_completed: usize,
    /// Jobs with at least one restart, whatever their final state.
    pub jobs_restarted: usize,
    pub abandoned_at_horizon: usize,
    /// Total evictions and checkpoint-terminations across all jobs.
    pub restart_events: usize,
    pub throughput_pct: f64,
}

impl MetricsReport {
    /// Throughput rounded half-up to one decimal using integer arithmetic.
    pub fn throughput_display(&self) -> String {
        if self.total_jobs == 0 {
            return "0.0".into();
        }
        let (c, t) = (self.jobs_completed as u128, self.total_jobs as u128);
        let tenths = (2000 * c + t) / (2 * t);
        format!("{}.{}", tenths / 10, tenths % 10)
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.label,
            self.total_jobs,
            self.jobs_completed,
            self.jobs_restarted,
            self.abandoned_at_horizon,
            self.throughput_display()
        )
    }

    /// Single-row report file.
    pub fn to_csv(&self) -> String {
        format!("{REPORT_COLUMNS}\n{}\n", self.to_csv_line())
    }
}

pub fn compute_report(result: &SimResult, label: &str) -> MetricsReport {
    let total_jobs = result.jobs.len();
    let jobs_completed = result.jobs.iter().filter(|j| j.is_completed() && j.restarts() == 0).count();
    let jobs_restarted = result.jobs.iter().filter(|j| j.restarts() > 0).count();
    let restart_events = result.jobs.iter().map(|j| j.restarts() as usize).sum();
    let abandoned_at_horizon = result.statuses.iter().filter(|s| **s == JobStatus::Abandoned).count();
    let throughput_pct = if total_jobs == 0 { 0.0 } else { 100.0 * jobs_completed as f64 / total_jobs as f64 };
    MetricsReport {
        label: label.to_owned(),
        policy: result.policy,
        total_jobs,
        jobs_completed,
        jobs_restarted,
        abandoned_at_horizon,
        restart_events,
        throughput_pct,
    }
}

/// One row of a comparison: a single report or the mean over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub policy: PolicyKind,
    pub runs: usize,
    pub total: f64,
    pub completed: f64,
    pub restarted: f64,
    pub abandoned: f64,
    pub restart_events: f64,
    pub throughput_pct: f64,
    /// Sample standard deviation of throughput across runs.
    pub throughput_sd: f64,
}

impl From<&MetricsReport> for SummaryRow {
    fn from(r: &MetricsReport) -> Self {
        Self {
            label: r.label.clone(),
            policy: r.policy,
            runs: 1,
            total: r.total_jobs as f64,
            completed: r.jobs_completed as f64,
            restarted: r.jobs_restarted as f64,
            abandoned: r.abandoned_at_horizon as f64,
            restart_events: r.restart_events as f64,
            throughput_pct: r.throughput_pct,
            throughput_sd: 0.0,
        }
    }
}

/// Means over reports sharing a label, in order of first appearance.
pub fn aggregate(reports: &[MetricsReport]) -> Vec<SummaryRow> {
    let mut labels: Vec<&str> = Vec::new();
    for r in reports {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let group: Vec<&MetricsReport> = reports.iter().filter(|r| r.label == label).collect();
            let n = group.len() as f64;
            let mean = |f: &dyn Fn(&MetricsReport) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            let tp = mean(&|r| r.throughput_pct);
            let sd = if group.len() > 1 {
                (group.iter().map(|r| (r.throughput_pct - tp).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                label: label.to_owned(),
                policy: group[0].policy,
                runs: group.len(),
                total: mean(&|r| r.total_jobs as f64),
                completed: mean(&|r| r.jobs_completed as f64),
                restarted: mean(&|r| r.jobs_restarted as f64),
                abandoned: mean(&|r| r.abandoned_at_horizon as f64),
                restart_events: mean(&|r| r.restart_events as f64),
                throughput_pct: tp,
                throughput_sd: sd,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<SummaryRow>,
    /// GRV minus FCFS throughput, when both are present.
    pub delta: Option<f64>,
}

impl ComparisonTable {
    pub fn from_rows(rows: Vec<SummaryRow>) -> Result<Self, MetricsError> {
        if let Some(first) = rows.first() {
            if let Some(bad) = rows.iter().find(|r| r.total != first.total) {
                return Err(MetricsError::MismatchedTotals(first.total, bad.total));
            }
        }
        let find = |k| rows.iter().find(|r| r.policy == k).map(|r| r.throughput_pct);
        let delta = match (find(PolicyKind::Grv), find(PolicyKind::Fcfs)) {
            (Some(g), Some(f)) => Some(g - f),
            _ => None,
        };
        Ok(Self { rows, delta })
    }

    pub fn row(&self, label: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Mean rows in the report file layout.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_COLUMNS}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.label,
                fmt_1dp(r.total),
                fmt_1dp(r.completed),
                fmt_1dp(r.restarted),
                fmt_1dp(r.abandoned),
                fmt_1dp(r.throughput_pct)
            ));
        }
        out
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let multi = self.rows.iter().any(|r| r.runs > 1);
        writeln!(
            f,
            "{:<12} {:>5} {:>9} {:>10} {:>10} {:>10} {:>10} {:>11}",
            "policy", "runs", "total", "completed", "restarted", "abandoned", "evictions", "throughput"
        )?;
        for r in &self.rows {
            let tp = if multi {
                format!("{} ±{}", fmt_1dp(r.throughput_pct), fmt_1dp(r.throughput_sd))
            } else {
                fmt_1dp(r.throughput_pct)
            };
            writeln!(
                f,
                "{:<12} {:>5} {:>9} {:>10} {:>10} {:>10} {:>10} {:>11}",
                r.label,
                r.runs,
                fmt_1dp(r.total),
                fmt_1dp(r.completed),
                fmt_1dp(r.restarted),
                fmt_1dp(r.abandoned),
                fmt_1dp(r.restart_events),
                tp
            )?;
        }
        if let Some(d) = self.delta {
            let sign = if round_half_up_1dp(d) >= 0.0 { "+" } else { "" };
            writeln!(f, "delta (GRV - FCFS throughput): {sign}{}", fmt_1dp(d))?;
        }
        Ok(())
    }
}

/// Builds a comparison from single-run reports. All reports must cover the
/// same number of jobs.
pub fn compare(reports: &[MetricsReport]) -> Result<ComparisonTable, MetricsError> {
    ComparisonTable::from_rows(reports.iter().map(SummaryRow::from).collect())
}
