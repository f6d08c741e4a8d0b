//! Size-based routing of workloads to a heuristic or to the learned agent.
//!
//! Small workloads go to SJF, medium ones to UNICEF, large ones to the agent.
//! An undersized workload is merged with the next one when the pair is large
//! enough for the agent, and oversized workloads are halved until they fit.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    evaluate_greedy, train, ActorCritic, AgentError, Environment, Hyperparameters, ModelVersions,
};
use crate::dag::split_workload;
use crate::heuristics::PolicyKind;
use crate::metrics::{self, MetricsError, MetricsReport};
use crate::simulator::{run_episode, HeuristicPolicy, SimError, SimOptions};
use crate::workload::{Job, JobId, WorkloadError, WorkloadTrace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecisionError {
    #[error("thresholds must satisfy 0 < MIN < MEDIAN < MAX, got {min}/{median}/{max}")]
    InvalidThresholds {
        min: usize,
        median: usize,
        max: usize,
    },
    #[error("chunk {chunk} needs a trained model")]
    MissingModel { chunk: usize },
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub min: usize,
    pub median: usize,
    pub max: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min: 256,
            median: 512,
            max: 20_000,
        }
    }
}

impl Thresholds {
    pub fn new(min: usize, median: usize, max: usize) -> Result<Self, DecisionError> {
        let t = Thresholds { min, median, max };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), DecisionError> {
        if 0 < self.min && self.min < self.median && self.median < self.max {
            Ok(())
        } else {
            Err(DecisionError::InvalidThresholds {
                min: self.min,
                median: self.median,
                max: self.max,
            })
        }
    }
}

/// Which rule produced a chunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Combine,
    Sjf,
    Unicef,
    Rl,
    Split,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Direct,
    CombinedFrom { current: usize, next: usize },
    SplitFrom { total: usize, part: usize, parts: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanChunk {
    pub jobs: Vec<Job>,
    pub policy: PolicyKind,
    pub branch: Branch,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub chunks: Vec<PlanChunk>,
    /// The next workload was merged into this plan.
    pub consumed_next: bool,
}

impl Plan {
    pub fn job_count(&self) -> usize {
        self.chunks.iter().map(|c| c.jobs.len()).sum()
    }

    pub fn needs_model(&self) -> bool {
        self.chunks.iter().any(|c| c.policy == PolicyKind::Rl)
    }

    /// Structured dump for auditing routing decisions.
    pub fn explain(&self) -> serde_json::Value {
        let chunks: Vec<_> = self
            .chunks
            .iter()
            .enumerate()
            .map(|(i, c)| {
                serde_json::json!({
                    "index": i,
                    "jobs": c.jobs.len(),
                    "policy": c.policy.name(),
                    "branch": c.branch,
                    "provenance": c.provenance,
                    "first_job": c.jobs.first().map(|j| j.id),
                    "last_job": c.jobs.last().map(|j| j.id),
                })
            })
            .collect();
        serde_json::json!({
            "schema": "mars-plan/1",
            "jobs": self.job_count(),
            "consumed_next": self.consumed_next,
            "chunks": chunks,
        })
    }
}

fn split_chunks(jobs: Vec<Job>, max: usize) -> Vec<PlanChunk> {
    let total = jobs.len();
    let parts = split_workload(&jobs, max);
    let n = parts.len();
    parts
        .into_iter()
        .enumerate()
        .map(|(part, jobs)| PlanChunk {
            jobs,
            policy: PolicyKind::Rl,
            branch: Branch::Split,
            provenance: if n == 1 {
                Provenance::Direct
            } else {
                Provenance::SplitFrom {
                    total,
                    part,
                    parts: n,
                }
            },
        })
        .collect()
}

/// The branch that fires for a workload of `eta` jobs followed by one of
/// `next_len` jobs. Exactly one branch applies to every size.
pub fn route(eta: usize, next_len: Option<usize>, compatible: bool, t: &Thresholds) -> Branch {
    match next_len {
        Some(n) if compatible && eta < t.median && eta + n > t.median => Branch::Combine,
        _ if eta < t.min => Branch::Sjf,
        _ if eta < t.median => Branch::Unicef,
        _ if eta <= t.max => Branch::Rl,
        _ => Branch::Split,
    }
}

/// Plans one workload. `next` is the following workload, if any, and
/// `compatible` says whether both share the agent's observation layout.
pub fn decide(
    current: &[Job],
    next: Option<&[Job]>,
    compatible: bool,
    thresholds: &Thresholds,
) -> Result<Plan, DecisionError> {
    thresholds.validate()?;
    let eta = current.len();
    if eta == 0 {
        return Ok(Plan::default());
    }
    let single = |policy, branch| Plan {
        chunks: vec![PlanChunk {
            jobs: current.to_vec(),
            policy,
            branch,
            provenance: Provenance::Direct,
        }],
        consumed_next: false,
    };
    match route(eta, next.map(<[Job]>::len), compatible, thresholds) {
        Branch::Combine => {
            let next = next.unwrap_or_default();
            let mut jobs = current.to_vec();
            jobs.extend_from_slice(next);
            let mut chunks = split_chunks(jobs, thresholds.max);
            for c in &mut chunks {
                c.branch = Branch::Combine;
                if c.provenance == Provenance::Direct {
                    c.provenance = Provenance::CombinedFrom {
                        current: eta,
                        next: next.len(),
                    };
                }
            }
            Ok(Plan {
                chunks,
                consumed_next: true,
            })
        }
        Branch::Sjf => Ok(single(PolicyKind::Sjf, Branch::Sjf)),
        Branch::Unicef => Ok(single(PolicyKind::Unicef, Branch::Unicef)),
        Branch::Rl => Ok(single(PolicyKind::Rl, Branch::Rl)),
        Branch::Split => Ok(Plan {
            chunks: split_chunks(current.to_vec(), thresholds.max),
            consumed_next: false,
        }),
    }
}

/// Plans a sequence of workloads, merging pairs where the rules allow.
pub fn plan_workloads(
    workloads: &[Vec<Job>],
    thresholds: &Thresholds,
) -> Result<Plan, DecisionError> {
    let mut plan = Plan::default();
    let mut i = 0;
    while i < workloads.len() {
        let next = workloads.get(i + 1).map(Vec::as_slice);
        let step = decide(&workloads[i], next, true, thresholds)?;
        i += if step.consumed_next { 2 } else { 1 };
        plan.chunks.extend(step.chunks);
    }
    Ok(plan)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub chunks: Vec<MetricsReport>,
    pub aggregate: MetricsReport,
    /// All finished jobs, sorted by id.
    pub finished: Vec<Job>,
}

/// Builds a standalone trace for a chunk; dependencies on jobs outside the
/// chunk are dropped.
pub fn chunk_trace(chunk: &PlanChunk, name: &str, total_procs: u32) -> Result<WorkloadTrace, DecisionError> {
    let ids: HashSet<JobId> = chunk.jobs.iter().map(|j| j.id).collect();
    let jobs = chunk
        .jobs
        .iter()
        .cloned()
        .map(|mut j| {
            j.dependencies.retain(|d| ids.contains(d));
            j.wait_time = None;
            j
        })
        .collect();
    Ok(WorkloadTrace::new(name, total_procs, jobs)?)
}

/// Trains a fresh model on `training` for `hyper.epochs` epochs, for plans
/// that need an agent but have no saved model.
pub fn train_on_demand(
    training: &WorkloadTrace,
    hyper: &Hyperparameters,
    options: &SimOptions,
) -> Result<ActorCritic, DecisionError> {
    let env = Environment::single(training.clone(), *options);
    let outcome = train(
        &env,
        hyper,
        ActorCritic::new(hyper)?,
        &mut ModelVersions::new(),
        |_| {},
    )?;
    match outcome.diverged {
        Some(e) => Err(e.into()),
        None => Ok(outcome.model),
    }
}

/// Runs every chunk on its own simulator and aggregates over all jobs.
/// Agent chunks use the greedy policy of `model`.
pub fn run_plan(
    plan: &Plan,
    total_procs: u32,
    options: &SimOptions,
    model: Option<(&ActorCritic, &Hyperparameters)>,
) -> Result<PlanReport, DecisionError> {
    let mut reports = Vec::with_capacity(plan.chunks.len());
    let mut finished = Vec::with_capacity(plan.job_count());
    for (i, chunk) in plan.chunks.iter().enumerate() {
        if chunk.jobs.is_empty() {
            continue;
        }
        let trace = chunk_trace(chunk, &format!("chunk-{i}"), total_procs)?;
        let result = match chunk.policy {
            PolicyKind::Rl => {
                let (m, h) = model.ok_or(DecisionError::MissingModel { chunk: i })?;
                evaluate_greedy(m, h, &trace, options)?
            }
            kind => run_episode(&trace, &mut HeuristicPolicy(kind), options)?,
        };
        reports.push(result.report);
        finished.extend(result.finished);
    }
    if finished.is_empty() {
        return Err(MetricsError::Empty.into());
    }
    finished.sort_by_key(|j| j.id);
    let procs = options.total_procs.unwrap_or(total_procs);
    let aggregate = metrics::aggregate(&finished, options.tau, "mars", procs)?;
    Ok(PlanReport {
        chunks: reports,
        aggregate,
        finished,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jobs(n: usize, first: u64) -> Vec<Job> {
        (0..n as u64)
            .map(|i| Job::new(first + i, i as f64, 10.0, 10.0, 1).unwrap())
            .collect()
    }

    fn shape(plan: &Plan) -> Vec<(usize, PolicyKind)> {
        plan.chunks.iter().map(|c| (c.jobs.len(), c.policy)).collect()
    }

    #[test]
    fn branch_examples() {
        let t = Thresholds::default();
        assert_eq!(shape(&decide(&jobs(100, 1), None, true, &t).unwrap()), vec![(100, PolicyKind::Sjf)]);
        assert_eq!(shape(&decide(&jobs(300, 1), None, true, &t).unwrap()), vec![(300, PolicyKind::Unicef)]);
        let combined = decide(&jobs(400, 1), Some(&jobs(400, 1000)), true, &t).unwrap();
        assert_eq!(shape(&combined), vec![(800, PolicyKind::Rl)]);
        assert!(combined.consumed_next);
        assert_eq!(
            shape(&decide(&jobs(50_000, 1), None, true, &t).unwrap()),
            vec![(12_500, PolicyKind::Rl); 4]
        );
        assert!(decide(&[], None, true, &t).unwrap().chunks.is_empty());
    }

    #[test]
    fn incompatible_next_is_not_merged() {
        let t = Thresholds::default();
        let plan = decide(&jobs(400, 1), Some(&jobs(400, 1000)), false, &t).unwrap();
        assert_eq!(shape(&plan), vec![(400, PolicyKind::Unicef)]);
    }

    #[test]
    fn thresholds_must_be_ordered() {
        assert!(Thresholds::new(512, 256, 20_000).is_err());
        assert!(Thresholds::new(0, 1, 2).is_err());
        assert!(decide(
            &jobs(1, 1),
            None,
            true,
            &Thresholds {
                min: 5,
                median: 5,
                max: 9
            }
        )
        .is_err());
    }

    #[test]
    fn single_heuristic_chunk_matches_direct_run() {
        let js = jobs(20, 1);
        let plan = decide(&js, None, true, &Thresholds::default()).unwrap();
        let opts = SimOptions::default();
        let report = run_plan(&plan, 4, &opts, None).unwrap();
        let trace = WorkloadTrace::new("t", 4, js).unwrap();
        let direct = run_episode(&trace, &mut HeuristicPolicy(PolicyKind::Sjf), &opts).unwrap();
        assert_eq!(report.chunks[0], direct.report);
        assert_eq!(report.aggregate.job_count, 20);
    }

    #[test]
    fn rl_chunk_without_model_errors() {
        let plan = decide(&jobs(600, 1), None, true, &Thresholds::default()).unwrap();
        assert_eq!(
            run_plan(&plan, 4, &SimOptions::default(), None),
            Err(DecisionError::MissingModel { chunk: 0 })
        );
    }
}
