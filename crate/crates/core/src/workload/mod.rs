//! Jobs, workload traces, and the loaders that produce them.

mod swf;
mod synthetic;
mod workflow;

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use swf::{parse_swf, write_swf, LineError, SwfParse};
pub use synthetic::{generate_synthetic, SyntheticConfig};
pub use workflow::{parse_workflow, TaskSpec, WorkflowDescription};

pub type JobId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("trace contains no valid jobs ({dropped} dropped, {malformed} malformed)")]
    NoJobs { dropped: usize, malformed: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid job {id}: {reason}")]
    InvalidJob { id: JobId, reason: String },
    #[error("slice [{start}, {start}+{count}) out of range for {len} jobs")]
    OutOfRange {
        start: usize,
        count: usize,
        len: usize,
    },
    #[error("job {job} depends on unknown job {dependency}")]
    UnknownDependency { job: JobId, dependency: JobId },
    #[error("dependency cycle through jobs {0:?}")]
    DependencyCycle(Vec<JobId>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Running,
    Finished,
}

/// A rigid, non-preemptable batch job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: JobId,
    /// Seconds since trace start.
    pub submit_time: f64,
    /// Set by the simulator when the job starts.
    pub wait_time: Option<f64>,
    /// Actual runtime in seconds.
    pub run_time: f64,
    /// User runtime estimate in seconds.
    pub requested_time: f64,
    pub requested_procs: u32,
    /// Currency per processor-second.
    pub cost_rate: f64,
    pub status: JobStatus,
    pub dependencies: Vec<JobId>,
}

impl Job {
    pub fn new(
        id: JobId,
        submit_time: f64,
        run_time: f64,
        requested_time: f64,
        requested_procs: u32,
    ) -> Result<Self, WorkloadError> {
        let job = Job {
            id,
            submit_time,
            wait_time: None,
            run_time,
            requested_time,
            requested_procs,
            cost_rate: 0.0,
            status: JobStatus::Pending,
            dependencies: Vec::new(),
        };
        job.validate()?;
        Ok(job)
    }

    pub fn with_cost_rate(mut self, cost_rate: f64) -> Self {
        self.cost_rate = cost_rate;
        self
    }

    pub fn with_dependencies(mut self, deps: Vec<JobId>) -> Self {
        self.dependencies = deps;
        self
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |reason: &str| {
            Err(WorkloadError::InvalidJob {
                id: self.id,
                reason: reason.to_string(),
            })
        };
        if self.id == 0 {
            return bad("id must be positive");
        }
        if self.requested_procs < 1 {
            return bad("requested_procs must be at least 1");
        }
        if !(self.run_time > 0.0 && self.run_time.is_finite()) {
            return bad("run_time must be positive");
        }
        if !(self.requested_time > 0.0 && self.requested_time.is_finite()) {
            return bad("requested_time must be positive");
        }
        if !(self.submit_time >= 0.0 && self.submit_time.is_finite()) {
            return bad("submit_time must be nonnegative");
        }
        if !(self.cost_rate >= 0.0 && self.cost_rate.is_finite()) {
            return bad("cost_rate must be nonnegative");
        }
        if let Some(w) = self.wait_time {
            if !(w >= 0.0 && w.is_finite()) {
                return bad("wait_time must be nonnegative");
            }
        }
        Ok(())
    }

    pub fn start_time(&self) -> Option<f64> {
        self.wait_time.map(|w| self.submit_time + w)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.start_time().map(|s| s + self.run_time)
    }

    /// Processor-seconds implied by the user estimate.
    pub fn requested_area(&self) -> f64 {
        self.requested_time * f64::from(self.requested_procs)
    }
}

/// An ordered job list together with the size of the machine it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadTrace {
    pub name: String,
    pub total_procs: u32,
    pub jobs: Vec<Job>,
}

impl WorkloadTrace {
    /// Sorts by submit time (stable, ties by id) and checks every trace invariant.
    pub fn new(
        name: impl Into<String>,
        total_procs: u32,
        mut jobs: Vec<Job>,
    ) -> Result<Self, WorkloadError> {
        if total_procs == 0 {
            return Err(WorkloadError::InvalidConfig(
                "total_procs must be at least 1".into(),
            ));
        }
        jobs.sort_by(|a, b| {
            a.submit_time
                .total_cmp(&b.submit_time)
                .then(a.id.cmp(&b.id))
        });
        let trace = WorkloadTrace {
            name: name.into(),
            total_procs,
            jobs,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let mut ids = HashSet::with_capacity(self.jobs.len());
        for pair in self.jobs.windows(2) {
            if pair[1].submit_time < pair[0].submit_time {
                return Err(WorkloadError::InvalidJob {
                    id: pair[1].id,
                    reason: "jobs are not ordered by submit_time".into(),
                });
            }
        }
        for job in &self.jobs {
            job.validate()?;
            if job.requested_procs > self.total_procs {
                return Err(WorkloadError::InvalidJob {
                    id: job.id,
                    reason: format!(
                        "requests {} processors on a {}-processor system",
                        job.requested_procs, self.total_procs
                    ),
                });
            }
            if !ids.insert(job.id) {
                return Err(WorkloadError::InvalidJob {
                    id: job.id,
                    reason: "duplicate id".into(),
                });
            }
        }
        check_dependencies(&self.jobs)
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    /// Shifts submit times so the first job arrives at 0.
    pub fn rebase(&mut self) {
        if let Some(first) = self.jobs.first().map(|j| j.submit_time) {
            for job in &mut self.jobs {
                job.submit_time -= first;
            }
        }
    }
}

/// Every dependency must resolve inside `jobs` and the dependency graph must be acyclic.
pub(crate) fn check_dependencies(jobs: &[Job]) -> Result<(), WorkloadError> {
    if jobs.iter().all(|j| j.dependencies.is_empty()) {
        return Ok(());
    }
    let by_id: HashMap<JobId, &Job> = jobs.iter().map(|j| (j.id, j)).collect();
    for job in jobs {
        for dep in &job.dependencies {
            if !by_id.contains_key(dep) {
                return Err(WorkloadError::UnknownDependency {
                    job: job.id,
                    dependency: *dep,
                });
            }
        }
    }
    // Kahn's algorithm; leftovers sit on a cycle or behind one.
    let mut indegree: BTreeMap<JobId, usize> =
        jobs.iter().map(|j| (j.id, j.dependencies.len())).collect();
    let mut successors: HashMap<JobId, Vec<JobId>> = HashMap::new();
    for job in jobs {
        for dep in &job.dependencies {
            successors.entry(*dep).or_default().push(job.id);
        }
    }
    let mut ready: Vec<JobId> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| *id)
        .collect();
    let mut seen = 0;
    while let Some(id) = ready.pop() {
        seen += 1;
        for succ in successors.get(&id).into_iter().flatten() {
            let d = indegree.get_mut(succ).expect("known id");
            *d -= 1;
            if *d == 0 {
                ready.push(*succ);
            }
        }
    }
    if seen == jobs.len() {
        Ok(())
    } else {
        let stuck = indegree
            .into_iter()
            .filter(|(_, d)| *d > 0)
            .map(|(id, _)| id)
            .collect();
        Err(WorkloadError::DependencyCycle(stuck))
    }
}

/// Gaussian cost-rate distribution, truncated at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostDistribution {
    pub mean: f64,
    pub std_dev: f64,
}

impl Default for CostDistribution {
    fn default() -> Self {
        CostDistribution {
            mean: 1.0,
            std_dev: 0.25,
        }
    }
}

impl CostDistribution {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if !(self.mean.is_finite() && self.mean >= 0.0) {
            return Err(WorkloadError::InvalidConfig(
                "cost mean must be finite and nonnegative".into(),
            ));
        }
        if !(self.std_dev.is_finite() && self.std_dev >= 0.0) {
            return Err(WorkloadError::InvalidConfig(
                "cost std_dev must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn sample<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        if self.std_dev == 0.0 {
            return self.mean;
        }
        let normal = Normal::new(self.mean, self.std_dev).expect("validated parameters");
        // Rejection keeps the shape of the truncated density; the cap only matters
        // for means many deviations below zero.
        for _ in 0..64 {
            let x = normal.sample(rng);
            if x >= 0.0 {
                return x;
            }
        }
        0.0
    }
}

/// Draws a cost rate for every job. Trace formats without cost information get
/// their costs this way, seeded by the experiment seed.
pub fn assign_costs(
    trace: &mut WorkloadTrace,
    dist: CostDistribution,
    seed: u64,
) -> Result<(), WorkloadError> {
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for job in &mut trace.jobs {
        job.cost_rate = dist.sample(&mut rng);
    }
    Ok(())
}

/// Takes `count` jobs, either contiguously from `start_index` or (with `shuffle`)
/// as a seeded random sample of the whole trace, and re-bases submit times to 0.
pub fn slice_trace(
    trace: &WorkloadTrace,
    start_index: usize,
    count: usize,
    seed: u64,
    shuffle: bool,
) -> Result<WorkloadTrace, WorkloadError> {
    let len = trace.jobs.len();
    let out_of_range = || WorkloadError::OutOfRange {
        start: start_index,
        count,
        len,
    };
    let mut jobs: Vec<Job> = if shuffle {
        if count > len {
            return Err(out_of_range());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, len, count).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| trace.jobs[i].clone()).collect()
    } else {
        let end = start_index.checked_add(count).ok_or_else(out_of_range)?;
        if end > len {
            return Err(out_of_range());
        }
        trace.jobs[start_index..end].to_vec()
    };
    // Dependencies outside the slice can never be satisfied.
    let kept: HashSet<JobId> = jobs.iter().map(|j| j.id).collect();
    for job in &mut jobs {
        job.dependencies.retain(|d| kept.contains(d));
        job.wait_time = None;
        job.status = JobStatus::Pending;
    }
    let mut sliced = WorkloadTrace::new(trace.name.clone(), trace.total_procs, jobs)?;
    sliced.rebase();
    Ok(sliced)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(id: JobId, submit: f64) -> Job {
        Job::new(id, submit, 10.0, 10.0, 1).unwrap()
    }

    #[test]
    fn job_invariants_are_checked() {
        assert!(Job::new(1, 0.0, 0.0, 1.0, 1).is_err());
        assert!(Job::new(1, 0.0, 1.0, 0.0, 1).is_err());
        assert!(Job::new(1, -1.0, 1.0, 1.0, 1).is_err());
        assert!(Job::new(1, 0.0, 1.0, 1.0, 0).is_err());
        assert!(Job::new(0, 0.0, 1.0, 1.0, 1).is_err());
        let mut j = job(1, 10.0);
        j.wait_time = Some(15.0);
        assert_eq!(j.start_time(), Some(25.0));
        assert_eq!(j.end_time(), Some(35.0));
    }

    #[test]
    fn trace_sorts_and_rejects_oversized_jobs() {
        let t = WorkloadTrace::new("t", 4, vec![job(2, 5.0), job(1, 3.0)]).unwrap();
        assert_eq!(t.jobs[0].id, 1);
        let big = Job::new(3, 0.0, 1.0, 1.0, 8).unwrap();
        assert!(WorkloadTrace::new("t", 4, vec![big]).is_err());
    }

    #[test]
    fn dependency_cycles_are_rejected() {
        let a = job(1, 0.0).with_dependencies(vec![2]);
        let b = job(2, 0.0).with_dependencies(vec![1]);
        let err = WorkloadTrace::new("t", 4, vec![a, b]).unwrap_err();
        assert_eq!(err, WorkloadError::DependencyCycle(vec![1, 2]));
        let c = job(3, 0.0).with_dependencies(vec![9]);
        assert!(matches!(
            WorkloadTrace::new("t", 4, vec![c]),
            Err(WorkloadError::UnknownDependency { .. })
        ));
    }

    fn long_trace(n: u64) -> WorkloadTrace {
        let jobs = (1..=n).map(|i| job(i, 100.0 + i as f64)).collect();
        WorkloadTrace::new("long", 8, jobs).unwrap()
    }

    #[test]
    fn identity_slice_only_rebases() {
        let t = long_trace(50);
        let s = slice_trace(&t, 0, 50, 0, false).unwrap();
        assert_eq!(s.jobs.len(), 50);
        assert_eq!(s.jobs[0].submit_time, 0.0);
        for (a, b) in t.jobs.iter().zip(&s.jobs) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.submit_time - 101.0, b.submit_time);
        }
    }

    #[test]
    fn slice_bounds_and_shuffle_determinism() {
        let t = long_trace(100);
        assert!(matches!(
            slice_trace(&t, 90, 20, 0, false),
            Err(WorkloadError::OutOfRange { .. })
        ));
        assert!(slice_trace(&t, 0, 101, 0, true).is_err());
        let a = slice_trace(&t, 0, 30, 11, true).unwrap();
        let b = slice_trace(&t, 0, 30, 11, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.jobs[0].submit_time, 0.0);
        let c = slice_trace(&t, 0, 30, 12, true).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn costs_are_seeded_and_nonnegative() {
        let mut a = long_trace(200);
        let mut b = long_trace(200);
        let dist = CostDistribution {
            mean: 0.1,
            std_dev: 1.0,
        };
        assign_costs(&mut a, dist, 3).unwrap();
        assign_costs(&mut b, dist, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.jobs.iter().all(|j| j.cost_rate >= 0.0));
        assert!(assign_costs(
            &mut a,
            CostDistribution {
                mean: 1.0,
                std_dev: -1.0
            },
            0
        )
        .is_err());
    }
}
