//! Closed-form priority policies.
//!
//! Every policy maps a waiting job to a score and the job with the lowest score
//! runs first; ties go to the earlier submit time, then the lower id.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workload::{Job, JobId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    Fcfs,
    Sjf,
    Wfp3,
    Unicef,
    F1,
    F2,
    F3,
    F4,
    /// Delegates to the learned agent.
    Rl,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeuristicError {
    #[error("policy RL has no closed-form score")]
    NotHeuristic,
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
}

impl PolicyKind {
    pub const HEURISTICS: [PolicyKind; 8] = [
        PolicyKind::Fcfs,
        PolicyKind::Sjf,
        PolicyKind::Wfp3,
        PolicyKind::Unicef,
        PolicyKind::F1,
        PolicyKind::F2,
        PolicyKind::F3,
        PolicyKind::F4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Fcfs => "fcfs",
            PolicyKind::Sjf => "sjf",
            PolicyKind::Wfp3 => "wfp3",
            PolicyKind::Unicef => "unicef",
            PolicyKind::F1 => "f1",
            PolicyKind::F2 => "f2",
            PolicyKind::F3 => "f3",
            PolicyKind::F4 => "f4",
            PolicyKind::Rl => "rl",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = HeuristicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s.to_ascii_lowercase().as_str() {
            "fcfs" => PolicyKind::Fcfs,
            "sjf" => PolicyKind::Sjf,
            "wfp3" => PolicyKind::Wfp3,
            "unicef" | "unicep" => PolicyKind::Unicef,
            "f1" => PolicyKind::F1,
            "f2" => PolicyKind::F2,
            "f3" => PolicyKind::F3,
            "f4" => PolicyKind::F4,
            "rl" => PolicyKind::Rl,
            _ => return Err(HeuristicError::UnknownPolicy(s.to_string())),
        };
        Ok(kind)
    }
}

fn log10_clamped(x: f64) -> f64 {
    x.max(1.0).log10()
}

/// Priority score of a waiting job at time `now`; lower runs first.
///
/// `s_t` is the submit time, `r_t` the requested time, `n_t` the processor
/// count and `w_t = now - s_t`. Logarithm arguments are clamped to at least 1,
/// and UNICEF uses 1 in place of `log2(1) = 0`.
pub fn score(job: &Job, now: f64, kind: PolicyKind) -> Result<f64, HeuristicError> {
    let s = job.submit_time;
    let r = job.requested_time;
    let n = f64::from(job.requested_procs);
    let w = (now - s).max(0.0);
    let value = match kind {
        PolicyKind::Fcfs => s,
        PolicyKind::Sjf => r,
        PolicyKind::Wfp3 => -(w / r).powi(3) * n,
        PolicyKind::Unicef => {
            let log_n = if job.requested_procs <= 1 { 1.0 } else { n.log2() };
            -w / (log_n * r)
        }
        PolicyKind::F1 => log10_clamped(r) * n + 8.70e2 * log10_clamped(s),
        PolicyKind::F2 => r.sqrt() * n + 2.56e4 * log10_clamped(s),
        PolicyKind::F3 => r * n + 6.86e6 * log10_clamped(s),
        PolicyKind::F4 => r * n.sqrt() + 5.30e5 * log10_clamped(s),
        PolicyKind::Rl => return Err(HeuristicError::NotHeuristic),
    };
    Ok(value)
}

/// Total order used by every heuristic: score, then submit time, then id.
pub fn compare_priority(a: (&Job, f64), b: (&Job, f64)) -> Ordering {
    a.1.total_cmp(&b.1)
        .then(a.0.submit_time.total_cmp(&b.0.submit_time))
        .then(a.0.id.cmp(&b.0.id))
}

/// Sorts `queue` into priority order.
pub fn order_queue<'a>(
    queue: &[&'a Job],
    now: f64,
    kind: PolicyKind,
) -> Result<Vec<&'a Job>, HeuristicError> {
    let mut scored = queue
        .iter()
        .map(|j| score(j, now, kind).map(|s| (*j, s)))
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|a, b| compare_priority(*a, *b));
    Ok(scored.into_iter().map(|(j, _)| j).collect())
}

/// What a policy wants to do next.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    Start(JobId),
    Pass,
}

/// Picks the highest-priority ready job. It is started only if it fits the free
/// processors; otherwise the policy passes and leaves the gap to backfilling.
pub fn select_next(
    queue: &[&Job],
    now: f64,
    free_procs: u32,
    kind: PolicyKind,
) -> Result<Selection, HeuristicError> {
    let mut best: Option<(&Job, f64)> = None;
    for job in queue {
        let s = score(job, now, kind)?;
        best = match best {
            Some(b) if compare_priority(b, (job, s)) != Ordering::Greater => Some(b),
            _ => Some((job, s)),
        };
    }
    Ok(match best {
        Some((job, _)) if job.requested_procs <= free_procs => Selection::Start(job.id),
        _ => Selection::Pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(id: JobId, submit: f64, req: f64, procs: u32) -> Job {
        Job::new(id, submit, req, req, procs).unwrap()
    }

    #[test]
    fn table_values() {
        let j = job(1, 0.0, 10.0, 4);
        assert_eq!(score(&j, 20.0, PolicyKind::Wfp3).unwrap(), -32.0);
        assert_eq!(score(&j, 30.0, PolicyKind::Unicef).unwrap(), -1.5);
        let j = job(2, 1000.0, 100.0, 10);
        assert!((score(&j, 1000.0, PolicyKind::F1).unwrap() - 2630.0).abs() < 1e-9);
        assert_eq!(score(&job(3, 0.0, 50.0, 1), 0.0, PolicyKind::Sjf).unwrap(), 50.0);
        assert_eq!(score(&job(3, 7.0, 50.0, 1), 9.0, PolicyKind::Fcfs).unwrap(), 7.0);
        assert_eq!(
            score(&j, 0.0, PolicyKind::Rl),
            Err(HeuristicError::NotHeuristic)
        );
    }

    #[test]
    fn unicef_single_core_guard() {
        let j = job(1, 0.0, 10.0, 1);
        assert_eq!(score(&j, 30.0, PolicyKind::Unicef).unwrap(), -3.0);
    }

    #[test]
    fn f_policies_clamp_log_arguments() {
        let j = job(1, 0.0, 0.5, 3);
        for kind in [PolicyKind::F1, PolicyKind::F2, PolicyKind::F3, PolicyKind::F4] {
            assert!(score(&j, 0.0, kind).unwrap().is_finite());
        }
        assert_eq!(score(&j, 0.0, PolicyKind::F1).unwrap(), 0.0);
    }

    #[test]
    fn selection_examples() {
        let jobs = [job(1, 5.0, 10.0, 1), job(2, 3.0, 10.0, 1), job(3, 9.0, 10.0, 1)];
        let q: Vec<&Job> = jobs.iter().collect();
        assert_eq!(
            select_next(&q, 10.0, 4, PolicyKind::Fcfs).unwrap(),
            Selection::Start(2)
        );

        let jobs = [job(1, 0.0, 100.0, 1), job(3, 0.0, 10.0, 1), job(2, 0.0, 10.0, 1)];
        let q: Vec<&Job> = jobs.iter().collect();
        assert_eq!(
            select_next(&q, 0.0, 4, PolicyKind::Sjf).unwrap(),
            Selection::Start(2)
        );

        let jobs = [job(1, 0.0, 10.0, 8), job(2, 0.0, 20.0, 4)];
        let q: Vec<&Job> = jobs.iter().collect();
        assert_eq!(
            select_next(&q, 0.0, 4, PolicyKind::Sjf).unwrap(),
            Selection::Pass
        );
        assert_eq!(select_next(&[], 0.0, 4, PolicyKind::Sjf).unwrap(), Selection::Pass);
    }

    #[test]
    fn parses_cli_names() {
        assert_eq!("FCFS".parse::<PolicyKind>().unwrap(), PolicyKind::Fcfs);
        assert_eq!("f3".parse::<PolicyKind>().unwrap(), PolicyKind::F3);
        assert!("bogus".parse::<PolicyKind>().is_err());
    }
}
