//! Slowdown metrics and per-run reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workload::{Job, JobId};

pub const DEFAULT_TAU: f64 = 10.0;

/// Column header of [`MetricsReport::csv_row`].
pub const REPORT_CSV_HEADER: &str = "policy,jobs,procs,tau,mean_slowdown,median_slowdown,p95_slowdown,mean_bounded_slowdown,median_bounded_slowdown,p95_bounded_slowdown,mean_pp_slowdown,median_pp_slowdown,p95_pp_slowdown,makespan";
pub const REPORT_SCHEMA: &str = "#schema=mars-report/1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("run time must be positive, got {0}")]
    NonPositiveRuntime(f64),
    #[error("wait time must be nonnegative, got {0}")]
    NegativeWait(f64),
    #[error("tau must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("processor count must be at least 1")]
    NoProcessors,
    #[error("no finished jobs to aggregate")]
    Empty,
    #[error("job {0} has not started")]
    Unstarted(JobId),
}

fn check(wait: f64, run: f64) -> Result<(), MetricsError> {
    if !(run > 0.0) {
        return Err(MetricsError::NonPositiveRuntime(run));
    }
    if !(wait >= 0.0) {
        return Err(MetricsError::NegativeWait(wait));
    }
    Ok(())
}

/// `(T_w + T_r) / T_r`
pub fn slowdown(wait: f64, run: f64) -> Result<f64, MetricsError> {
    check(wait, run)?;
    Ok((wait + run) / run)
}

/// `max{(T_w + T_r) / max{T_r, tau}, 1}`
pub fn bounded_slowdown(wait: f64, run: f64, tau: f64) -> Result<f64, MetricsError> {
    check(wait, run)?;
    if !(tau > 0.0) {
        return Err(MetricsError::NonPositiveTau(tau));
    }
    Ok(((wait + run) / run.max(tau)).max(1.0))
}

/// Bounded slowdown further divided by the job's processor count, floored at 1.
pub fn pp_slowdown(wait: f64, run: f64, tau: f64, procs: u32) -> Result<f64, MetricsError> {
    check(wait, run)?;
    if !(tau > 0.0) {
        return Err(MetricsError::NonPositiveTau(tau));
    }
    if procs == 0 {
        return Err(MetricsError::NoProcessors);
    }
    Ok(((wait + run) / (f64::from(procs) * run.max(tau))).max(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobMetrics {
    pub id: JobId,
    pub slowdown: f64,
    pub bounded_slowdown: f64,
    pub pp_slowdown: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Summary {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        // Nearest-rank percentile.
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Summary {
            mean: mean(values),
            median,
            p95: sorted[rank - 1],
        }
    }
}

/// Summation in id order so the result does not depend on job order.
fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: String,
    pub tau: f64,
    pub total_procs: u32,
    pub job_count: usize,
    pub makespan: f64,
    pub slowdown: Summary,
    pub bounded_slowdown: Summary,
    pub pp_slowdown: Summary,
    /// Sorted by job id.
    pub per_job: Vec<JobMetrics>,
}

/// Builds a report over finished jobs. Makespan is last end minus first submit.
pub fn aggregate(
    finished: &[Job],
    tau: f64,
    policy: &str,
    total_procs: u32,
) -> Result<MetricsReport, MetricsError> {
    if finished.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut per_job = Vec::with_capacity(finished.len());
    let mut first_submit = f64::INFINITY;
    let mut last_end = f64::NEG_INFINITY;
    for job in finished {
        let wait = job.wait_time.ok_or(MetricsError::Unstarted(job.id))?;
        per_job.push(JobMetrics {
            id: job.id,
            slowdown: slowdown(wait, job.run_time)?,
            bounded_slowdown: bounded_slowdown(wait, job.run_time, tau)?,
            pp_slowdown: pp_slowdown(wait, job.run_time, tau, job.requested_procs)?,
        });
        first_submit = first_submit.min(job.submit_time);
        last_end = last_end.max(job.submit_time + wait + job.run_time);
    }
    per_job.sort_by_key(|m| m.id);
    let column = |f: fn(&JobMetrics) -> f64| per_job.iter().map(f).collect::<Vec<_>>();
    Ok(MetricsReport {
        policy: policy.to_string(),
        tau,
        total_procs,
        job_count: per_job.len(),
        makespan: last_end - first_submit,
        slowdown: Summary::of(&column(|m| m.slowdown)),
        bounded_slowdown: Summary::of(&column(|m| m.bounded_slowdown)),
        pp_slowdown: Summary::of(&column(|m| m.pp_slowdown)),
        per_job,
    })
}

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.policy,
            self.job_count,
            self.total_procs,
            self.tau,
            self.slowdown.mean,
            self.slowdown.median,
            self.slowdown.p95,
            self.bounded_slowdown.mean,
            self.bounded_slowdown.median,
            self.bounded_slowdown.p95,
            self.pp_slowdown.mean,
            self.pp_slowdown.median,
            self.pp_slowdown.p95,
            self.makespan
        );
        s
    }

    /// Structured summary without the per-job rows.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": "mars-report/1",
            "policy": self.policy,
            "jobs": self.job_count,
            "procs": self.total_procs,
            "tau": self.tau,
            "makespan": self.makespan,
            "slowdown": self.slowdown,
            "bounded_slowdown": self.bounded_slowdown,
            "pp_slowdown": self.pp_slowdown,
        })
    }
}
