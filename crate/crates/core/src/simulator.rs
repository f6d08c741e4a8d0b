//! Discrete-event simulation of a homogeneous cluster.
//!
//! Time advances from event to event (arrivals and completions) instead of
//! ticking. Completions at a given instant are processed before arrivals so that
//! freed processors are visible to jobs arriving at the same moment; within a
//! kind, events are ordered by job id (arrivals by trace order).

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::EpisodeTrajectory;
use crate::heuristics::{self, HeuristicError, PolicyKind, Selection};
use crate::metrics::{self, MetricsError, MetricsReport};
use crate::workload::{Job, JobId, JobStatus, WorkloadTrace};

pub const JOBS_CSV_SCHEMA: &str = "#schema=mars-jobs/1";
pub const JOBS_CSV_HEADER: &str = "id,submit,start,end,wait,procs,policy";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("cluster needs at least one processor")]
    NoProcessors,
    #[error("job {job} can never start: it needs {procs} processors")]
    Deadlock { job: JobId, procs: u32 },
    #[error("job {0} is waiting on dependencies that can never finish")]
    Stuck(JobId),
    #[error("policy contract violation: {0}")]
    ContractViolation(String),
    #[error("policy failure: {0}")]
    Policy(String),
    #[error("invariant violated at t={time}: {reason}")]
    Invariant { time: f64, reason: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
}

/// Why a start request was refused. The state is left untouched.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum StartRejection {
    #[error("job needs {needed} processors, {free} free")]
    InsufficientProcs { needed: u32, free: u32 },
    #[error("dependency {0} has not finished")]
    UnmetDependency(JobId),
    #[error("job is not pending")]
    NotPending,
    #[error("job has not been submitted yet")]
    NotSubmitted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Overrides the trace's processor count.
    pub total_procs: Option<u32>,
    pub backfill: bool,
    pub tau: f64,
    /// Re-check the cluster invariants after every event and start.
    pub check_invariants: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            total_procs: None,
            backfill: true,
            tau: metrics::DEFAULT_TAU,
            check_invariants: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Arrival(JobId),
    Completion(JobId),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct TimeKey(f64);

impl Eq for TimeKey {}

impl PartialOrd for TimeKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimeKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunningJob {
    pub id: JobId,
    pub procs: u32,
    pub start: f64,
    pub end_time: f64,
    /// `start + requested_time`: what a real scheduler would believe.
    pub estimated_end: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterState {
    total_procs: u32,
    free_procs: u32,
    running: BTreeMap<(TimeKey, JobId), RunningJob>,
    clock: f64,
    pending: Vec<JobId>,
    finished: Vec<Job>,
    finished_ids: HashSet<JobId>,
}

impl ClusterState {
    pub fn new(total_procs: u32) -> Result<Self, SimError> {
        if total_procs == 0 {
            return Err(SimError::NoProcessors);
        }
        Ok(ClusterState {
            total_procs,
            free_procs: total_procs,
            running: BTreeMap::new(),
            clock: 0.0,
            pending: Vec::new(),
            finished: Vec::new(),
            finished_ids: HashSet::new(),
        })
    }

    pub fn total_procs(&self) -> u32 {
        self.total_procs
    }

    pub fn free_procs(&self) -> u32 {
        self.free_procs
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Pending job ids in arrival order.
    pub fn pending(&self) -> &[JobId] {
        &self.pending
    }

    /// Running jobs ordered by actual end time, then id.
    pub fn running(&self) -> impl Iterator<Item = &RunningJob> + '_ {
        self.running.values()
    }

    pub fn running_count(&self) -> usize {
        self.running.len()
    }

    pub fn finished(&self) -> &[Job] {
        &self.finished
    }

    pub fn is_finished(&self, id: JobId) -> bool {
        self.finished_ids.contains(&id)
    }

    pub fn dependencies_met(&self, job: &Job) -> bool {
        job.dependencies.iter().all(|d| self.finished_ids.contains(d))
    }

    /// Registers a job that has arrived and is waiting to start.
    pub fn enqueue(&mut self, job: &Job) {
        self.pending.push(job.id);
    }

    /// Starts a pending job at `now`, setting its wait time.
    pub fn start_job(&mut self, job: &mut Job, now: f64) -> Result<(), StartRejection> {
        if job.status != JobStatus::Pending {
            return Err(StartRejection::NotPending);
        }
        let Some(pos) = self.pending.iter().position(|&id| id == job.id) else {
            return Err(StartRejection::NotPending);
        };
        if now < job.submit_time {
            return Err(StartRejection::NotSubmitted);
        }
        if let Some(dep) = job
            .dependencies
            .iter()
            .find(|d| !self.finished_ids.contains(d))
        {
            return Err(StartRejection::UnmetDependency(*dep));
        }
        if job.requested_procs > self.free_procs {
            return Err(StartRejection::InsufficientProcs {
                needed: job.requested_procs,
                free: self.free_procs,
            });
        }
        self.pending.remove(pos);
        self.free_procs -= job.requested_procs;
        job.wait_time = Some(now - job.submit_time);
        job.status = JobStatus::Running;
        let end_time = now + job.run_time;
        self.running.insert(
            (TimeKey(end_time), job.id),
            RunningJob {
                id: job.id,
                procs: job.requested_procs,
                start: now,
                end_time,
                estimated_end: now + job.requested_time,
            },
        );
        Ok(())
    }

    fn next_completion(&self) -> Option<(f64, JobId)> {
        self.running.keys().next().map(|(t, id)| (t.0, *id))
    }

    fn complete_next(&mut self) -> Option<RunningJob> {
        let (_, done) = self.running.pop_first()?;
        self.free_procs += done.procs;
        self.clock = self.clock.max(done.end_time);
        Some(done)
    }

    /// Processor conservation and clock monotonicity.
    pub fn check_invariants(&self) -> Result<(), SimError> {
        let used: u64 = self.running.values().map(|r| u64::from(r.procs)).sum();
        if u64::from(self.free_procs) + used != u64::from(self.total_procs) {
            return Err(SimError::Invariant {
                time: self.clock,
                reason: format!(
                    "free {} + running {} != total {}",
                    self.free_procs, used, self.total_procs
                ),
            });
        }
        if let Some(r) = self.running.values().find(|r| r.end_time < self.clock) {
            return Err(SimError::Invariant {
                time: self.clock,
                reason: format!("job {} ended at {} but is still running", r.id, r.end_time),
            });
        }
        Ok(())
    }
}

/// What a policy sees when asked for a decision.
#[derive(Debug)]
pub struct QueueView<'a> {
    pub now: f64,
    pub free_procs: u32,
    pub total_procs: u32,
    pub running: usize,
    /// Jobs that have arrived and whose dependencies are done, in arrival order.
    pub ready: Vec<&'a Job>,
    /// Running jobs, ordered by actual end time.
    pub running_jobs: Vec<RunningJob>,
}

impl QueueView<'_> {
    pub fn fits(&self, job: &Job) -> bool {
        job.requested_procs <= self.free_procs
    }
}

/// A scheduling policy driving the simulator.
pub trait SchedulerPolicy {
    fn label(&self) -> String;

    /// Next job to start now, or pass.
    fn select(&mut self, view: &QueueView<'_>) -> Result<Selection, SimError>;

    /// Priority order used for EASY backfilling once `select` has passed.
    fn backfill_order(&mut self, view: &QueueView<'_>) -> Result<Vec<JobId>, SimError>;

    /// Called once with every finished job when the episode ends.
    fn on_episode_end(&mut self, _finished: &[Job], _tau: f64) -> Result<(), SimError> {
        Ok(())
    }

    fn take_trajectory(&mut self) -> Option<EpisodeTrajectory> {
        None
    }
}

/// One of the closed-form heuristics.
#[derive(Clone, Copy, Debug)]
pub struct HeuristicPolicy(pub PolicyKind);

impl SchedulerPolicy for HeuristicPolicy {
    fn label(&self) -> String {
        self.0.name().to_string()
    }

    fn select(&mut self, view: &QueueView<'_>) -> Result<Selection, SimError> {
        Ok(heuristics::select_next(
            &view.ready,
            view.now,
            view.free_procs,
            self.0,
        )?)
    }

    fn backfill_order(&mut self, view: &QueueView<'_>) -> Result<Vec<JobId>, SimError> {
        Ok(heuristics::order_queue(&view.ready, view.now, self.0)?
            .into_iter()
            .map(|j| j.id)
            .collect())
    }
}

/// A cluster plus the trace feeding it.
#[derive(Clone, Debug)]
pub struct Simulation {
    state: ClusterState,
    jobs: Vec<Job>,
    index: HashMap<JobId, usize>,
    next_arrival: usize,
    options: SimOptions,
}

impl Simulation {
    pub fn new(trace: &WorkloadTrace, options: &SimOptions) -> Result<Self, SimError> {
        let total = options.total_procs.unwrap_or(trace.total_procs);
        let state = ClusterState::new(total)?;
        if let Some(big) = trace.jobs.iter().find(|j| j.requested_procs > total) {
            return Err(SimError::Deadlock {
                job: big.id,
                procs: big.requested_procs,
            });
        }
        let mut jobs = trace.jobs.clone();
        for job in &mut jobs {
            job.wait_time = None;
            job.status = JobStatus::Pending;
        }
        let index = jobs.iter().enumerate().map(|(i, j)| (j.id, i)).collect();
        Ok(Simulation {
            state,
            jobs,
            index,
            next_arrival: 0,
            options: *options,
        })
    }

    pub fn state(&self) -> &ClusterState {
        &self.state
    }

    pub fn options(&self) -> &SimOptions {
        &self.options
    }

    pub fn clock(&self) -> f64 {
        self.state.clock
    }

    pub fn job(&self, id: JobId) -> Option<&Job> {
        self.index.get(&id).map(|&i| &self.jobs[i])
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    /// Jobs that have not arrived yet.
    pub fn future_arrivals(&self) -> usize {
        self.jobs.len() - self.next_arrival
    }

    pub fn is_done(&self) -> bool {
        self.state.finished.len() == self.jobs.len()
    }

    pub fn next_event_time(&self) -> Option<f64> {
        let completion = self.state.next_completion().map(|(t, _)| t);
        let arrival = self.jobs.get(self.next_arrival).map(|j| j.submit_time);
        match (completion, arrival) {
            (Some(c), Some(a)) => Some(c.min(a)),
            (c, a) => c.or(a),
        }
    }

    /// Jumps the clock to the next event and applies it. Returns `None` once
    /// every job has finished; errors if jobs remain but nothing can happen.
    pub fn advance_to_next_event(&mut self) -> Result<Option<SimEvent>, SimError> {
        let completion = self.state.next_completion();
        let arrival = self
            .jobs
            .get(self.next_arrival)
            .map(|j| (j.submit_time, j.id));
        let event = match (completion, arrival) {
            (Some((tc, _)), Some((ta, _))) if tc <= ta => self.apply_completion(),
            (Some(_), None) => self.apply_completion(),
            (_, Some(_)) => self.apply_arrival(),
            (None, None) => {
                if let Some(&id) = self.state.pending.first() {
                    let job = self.job(id).expect("pending ids are known");
                    return Err(if job.requested_procs > self.state.total_procs {
                        SimError::Deadlock {
                            job: id,
                            procs: job.requested_procs,
                        }
                    } else {
                        SimError::Stuck(id)
                    });
                }
                return Ok(None);
            }
        };
        if self.options.check_invariants {
            self.state.check_invariants()?;
        }
        Ok(Some(event))
    }

    fn apply_completion(&mut self) -> SimEvent {
        let done = self.state.complete_next().expect("completion exists");
        let idx = self.index[&done.id];
        let job = &mut self.jobs[idx];
        job.status = JobStatus::Finished;
        self.state.finished.push(job.clone());
        self.state.finished_ids.insert(done.id);
        SimEvent {
            time: done.end_time,
            kind: EventKind::Completion(done.id),
        }
    }

    fn apply_arrival(&mut self) -> SimEvent {
        let job = &self.jobs[self.next_arrival];
        self.next_arrival += 1;
        self.state.clock = self.state.clock.max(job.submit_time);
        self.state.pending.push(job.id);
        SimEvent {
            time: job.submit_time,
            kind: EventKind::Arrival(job.id),
        }
    }

    pub fn view(&self) -> QueueView<'_> {
        let ready = self
            .state
            .pending
            .iter()
            .map(|id| &self.jobs[self.index[id]])
            .filter(|j| self.state.dependencies_met(j))
            .collect();
        QueueView {
            now: self.state.clock,
            free_procs: self.state.free_procs,
            total_procs: self.state.total_procs,
            running: self.state.running.len(),
            ready,
            running_jobs: self.state.running.values().copied().collect(),
        }
    }

    /// Starts job `id` at the current clock.
    pub fn start(&mut self, id: JobId) -> Result<(), StartRejection> {
        let idx = *self.index.get(&id).ok_or(StartRejection::NotPending)?;
        let now = self.state.clock;
        self.state.start_job(&mut self.jobs[idx], now)
    }

    /// Asks `selector` for jobs to start until it passes or no ready job fits.
    /// Returns the number of jobs started.
    pub fn schedule_cycle<F>(&mut self, mut selector: F) -> Result<usize, SimError>
    where
        F: FnMut(&QueueView<'_>) -> Result<Selection, SimError>,
    {
        let mut started = 0;
        loop {
            let choice = {
                let view = self.view();
                if !view.ready.iter().any(|j| view.fits(j)) {
                    break;
                }
                let choice = selector(&view)?;
                if let Selection::Start(id) = choice {
                    if !view.ready.iter().any(|j| j.id == id) {
                        return Err(SimError::ContractViolation(format!(
                            "selected job {id} is not a ready pending job"
                        )));
                    }
                }
                choice
            };
            match choice {
                Selection::Pass => break,
                Selection::Start(id) => {
                    self.start(id).map_err(|e| {
                        SimError::ContractViolation(format!("cannot start job {id}: {e}"))
                    })?;
                    started += 1;
                    if self.options.check_invariants {
                        self.state.check_invariants()?;
                    }
                }
            }
        }
        Ok(started)
    }

    /// EASY backfilling over `ordered` (highest priority first). Leading jobs
    /// that fit are started; the first that does not gets a reservation at the
    /// earliest time enough processors free up, judged from running jobs'
    /// requested times. Later jobs start now only if they fit and either finish
    /// (by their own estimate) before that reservation or use only processors
    /// the reservation does not need.
    pub fn backfill_easy(&mut self, ordered: &[JobId]) -> usize {
        let now = self.state.clock;
        let queue: Vec<(JobId, u32, f64)> = ordered
            .iter()
            .filter_map(|id| self.job(*id))
            .filter(|j| {
                j.status == JobStatus::Pending
                    && self.state.pending.contains(&j.id)
                    && self.state.dependencies_met(j)
            })
            .map(|j| (j.id, j.requested_procs, j.requested_time))
            .collect();
        let mut started = 0;
        let mut idx = 0;
        while idx < queue.len() && queue[idx].1 <= self.state.free_procs {
            self.start(queue[idx].0).expect("checked fit and readiness");
            started += 1;
            idx += 1;
        }
        if idx >= queue.len() {
            return started;
        }
        let head_procs = queue[idx].1;
        let mut releases: Vec<(f64, u32)> = self
            .state
            .running
            .values()
            .map(|r| (r.estimated_end.max(now), r.procs))
            .collect();
        releases.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut available = self.state.free_procs;
        let mut shadow = f64::INFINITY;
        let mut extra = 0u32;
        for (t, p) in releases {
            available += p;
            if available >= head_procs {
                shadow = t;
                extra = available - head_procs;
                break;
            }
        }
        for &(id, procs, estimate) in &queue[idx + 1..] {
            if procs > self.state.free_procs {
                continue;
            }
            let ends_in_time = now + estimate <= shadow;
            if ends_in_time || procs <= extra {
                self.start(id).expect("checked fit and readiness");
                started += 1;
                if !ends_in_time {
                    extra -= procs;
                }
            }
        }
        started
    }

    /// One decision point: the policy's own cycle, then EASY backfilling if enabled.
    pub fn schedule_with(&mut self, policy: &mut dyn SchedulerPolicy) -> Result<usize, SimError> {
        let mut started = self.schedule_cycle(|view| policy.select(view))?;
        if self.options.backfill {
            let order = {
                let view = self.view();
                if view.ready.is_empty() {
                    return Ok(started);
                }
                policy.backfill_order(&view)?
            };
            started += self.backfill_easy(&order);
            if self.options.check_invariants {
                self.state.check_invariants()?;
            }
        }
        Ok(started)
    }

    /// Finished jobs sorted by id.
    pub fn into_finished(self) -> Vec<Job> {
        let mut done = self.state.finished;
        done.sort_by_key(|j| j.id);
        done
    }
}

#[derive(Clone, Debug)]
pub struct EpisodeResult {
    pub finished: Vec<Job>,
    pub report: MetricsReport,
    pub trajectory: Option<EpisodeTrajectory>,
}

/// Runs a whole trace to completion under `policy`.
pub fn run_episode(
    trace: &WorkloadTrace,
    policy: &mut dyn SchedulerPolicy,
    options: &SimOptions,
) -> Result<EpisodeResult, SimError> {
    run_episode_observed(trace, policy, options, |_, _| Ok(()))
}

/// Like [`run_episode`], calling `observer` after every event and after every
/// scheduling pass (with `None`).
pub fn run_episode_observed<O>(
    trace: &WorkloadTrace,
    policy: &mut dyn SchedulerPolicy,
    options: &SimOptions,
    mut observer: O,
) -> Result<EpisodeResult, SimError>
where
    O: FnMut(&Simulation, Option<&SimEvent>) -> Result<(), SimError>,
{
    let mut sim = Simulation::new(trace, options)?;
    while let Some(event) = sim.advance_to_next_event()? {
        observer(&sim, Some(&event))?;
        while sim.next_event_time() == Some(sim.clock()) {
            let event = sim.advance_to_next_event()?.expect("event is pending");
            observer(&sim, Some(&event))?;
        }
        sim.schedule_with(policy)?;
        observer(&sim, None)?;
    }
    let total = sim.state.total_procs;
    let finished = sim.into_finished();
    if finished.is_empty() {
        return Err(SimError::Metrics(MetricsError::Empty));
    }
    policy.on_episode_end(&finished, options.tau)?;
    let report = metrics::aggregate(&finished, options.tau, &policy.label(), total)?;
    Ok(EpisodeResult {
        finished,
        report,
        trajectory: policy.take_trajectory(),
    })
}

/// Per-job records as CSV, preceded by a schema tag line.
pub fn jobs_csv(finished: &[Job], policy: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{JOBS_CSV_SCHEMA}");
    let _ = writeln!(out, "{JOBS_CSV_HEADER}");
    for job in finished {
        let wait = job.wait_time.unwrap_or(f64::NAN);
        let start = job.submit_time + wait;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            job.id,
            job.submit_time,
            start,
            start + job.run_time,
            wait,
            job.requested_procs,
            policy
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(id: JobId, submit: f64, run: f64, req: f64, procs: u32) -> Job {
        Job::new(id, submit, run, req, procs).unwrap()
    }

    fn trace(p: u32, jobs: Vec<Job>) -> WorkloadTrace {
        WorkloadTrace::new("t", p, jobs).unwrap()
    }

    #[test]
    fn new_cluster_examples() {
        let c = ClusterState::new(128).unwrap();
        assert_eq!((c.free_procs(), c.clock()), (128, 0.0));
        assert_eq!(ClusterState::new(0), Err(SimError::NoProcessors));
        assert_eq!(ClusterState::new(163_840).unwrap().free_procs(), 163_840);
    }

    #[test]
    fn start_job_examples() {
        let mut c = ClusterState::new(4).unwrap();
        let mut a = job(1, 10.0, 5.0, 5.0, 4);
        c.enqueue(&a);
        c.start_job(&mut a, 25.0).unwrap();
        assert_eq!(c.free_procs(), 0);
        assert_eq!(a.wait_time, Some(15.0));

        let mut c = ClusterState::new(3).unwrap();
        let mut b = job(2, 0.0, 5.0, 5.0, 4);
        c.enqueue(&b);
        let before = c.clone();
        assert_eq!(
            c.start_job(&mut b, 0.0),
            Err(StartRejection::InsufficientProcs { needed: 4, free: 3 })
        );
        assert_eq!(c, before);
        assert_eq!(b.wait_time, None);

        let mut d = job(3, 0.0, 5.0, 5.0, 1).with_dependencies(vec![1]);
        c.enqueue(&d);
        assert_eq!(
            c.start_job(&mut d, 0.0),
            Err(StartRejection::UnmetDependency(1))
        );
    }

    #[test]
    fn completion_then_arrival() {
        // A runs 0..100; B arrives at 120.
        let t = trace(4, vec![job(1, 0.0, 100.0, 100.0, 4), job(2, 120.0, 1.0, 1.0, 1)]);
        let mut sim = Simulation::new(&t, &SimOptions::default()).unwrap();
        sim.advance_to_next_event().unwrap();
        sim.start(1).unwrap();
        let ev = sim.advance_to_next_event().unwrap().unwrap();
        assert_eq!(ev, SimEvent { time: 100.0, kind: EventKind::Completion(1) });
        assert_eq!(sim.state().free_procs(), 4);
    }

    #[test]
    fn ties_process_completion_first() {
        let t = trace(4, vec![job(1, 0.0, 50.0, 50.0, 4), job(2, 50.0, 1.0, 1.0, 4)]);
        let mut sim = Simulation::new(&t, &SimOptions::default()).unwrap();
        sim.advance_to_next_event().unwrap();
        sim.start(1).unwrap();
        let ev = sim.advance_to_next_event().unwrap().unwrap();
        assert_eq!(ev.kind, EventKind::Completion(1));
        let ev = sim.advance_to_next_event().unwrap().unwrap();
        assert_eq!(ev.kind, EventKind::Arrival(2));
    }

    #[test]
    fn empty_system_jumps_to_arrival() {
        let t = trace(4, vec![job(1, 7.0, 1.0, 1.0, 1)]);
        let mut sim = Simulation::new(&t, &SimOptions::default()).unwrap();
        sim.advance_to_next_event().unwrap();
        assert_eq!(sim.clock(), 7.0);
    }

    #[test]
    fn oversized_job_is_a_deadlock() {
        let t = trace(8, vec![job(1, 0.0, 1.0, 1.0, 8)]);
        let opts = SimOptions {
            total_procs: Some(4),
            ..Default::default()
        };
        assert!(matches!(
            run_episode(&t, &mut HeuristicPolicy(PolicyKind::Fcfs), &opts),
            Err(SimError::Deadlock { job: 1, procs: 8 })
        ));
    }

    #[test]
    fn schedule_cycle_examples() {
        let t = trace(
            4,
            vec![job(1, 0.0, 10.0, 10.0, 2), job(2, 0.0, 10.0, 10.0, 2)],
        );
        let mut sim = Simulation::new(&t, &SimOptions::default()).unwrap();
        assert_eq!(sim.schedule_cycle(|_| Ok(Selection::Pass)).unwrap(), 0);
        sim.advance_to_next_event().unwrap();
        sim.advance_to_next_event().unwrap();
        let mut order = vec![2, 1].into_iter();
        let started = sim
            .schedule_cycle(|_| Ok(order.next().map_or(Selection::Pass, Selection::Start)))
            .unwrap();
        assert_eq!(started, 2);
        assert_eq!(sim.job(2).unwrap().wait_time, Some(0.0));

        let t = trace(8, vec![job(1, 0.0, 10.0, 10.0, 8), job(2, 0.0, 1.0, 1.0, 4)]);
        let mut sim = Simulation::new(&t, &SimOptions::default()).unwrap();
        sim.advance_to_next_event().unwrap();
        sim.advance_to_next_event().unwrap();
        sim.start(2).unwrap();
        let mut fcfs = HeuristicPolicy(PolicyKind::Fcfs);
        assert_eq!(sim.schedule_cycle(|v| fcfs.select(v)).unwrap(), 0);

        let t = trace(4, vec![job(1, 0.0, 1.0, 1.0, 1)]);
        let mut sim = Simulation::new(&t, &SimOptions::default()).unwrap();
        sim.advance_to_next_event().unwrap();
        assert!(matches!(
            sim.schedule_cycle(|_| Ok(Selection::Start(42))),
            Err(SimError::ContractViolation(_))
        ));
    }

    /// Head needs 8 of 8 processors; a 4-processor job runs until t=100.
    fn backfill_case(candidate_estimate: f64) -> Simulation {
        let t = trace(
            8,
            vec![
                job(1, 0.0, 100.0, 100.0, 4),
                job(2, 0.0, 10.0, 10.0, 8),
                job(3, 0.0, candidate_estimate, candidate_estimate, 4),
            ],
        );
        let mut sim = Simulation::new(&t, &SimOptions::default()).unwrap();
        for _ in 0..3 {
            sim.advance_to_next_event().unwrap();
        }
        sim.start(1).unwrap();
        sim
    }

    #[test]
    fn easy_backfills_short_candidate() {
        let mut sim = backfill_case(50.0);
        assert_eq!(sim.backfill_easy(&[2, 3]), 1);
        assert_eq!(sim.job(3).unwrap().wait_time, Some(0.0));
        assert_eq!(sim.job(2).unwrap().wait_time, None);
    }

    #[test]
    fn easy_refuses_long_candidate() {
        let mut sim = backfill_case(200.0);
        assert_eq!(sim.backfill_easy(&[2, 3]), 0);
    }

    #[test]
    fn easy_starts_fitting_head() {
        let t = trace(8, vec![job(1, 0.0, 10.0, 10.0, 8)]);
        let mut sim = Simulation::new(&t, &SimOptions::default()).unwrap();
        sim.advance_to_next_event().unwrap();
        assert_eq!(sim.backfill_easy(&[1]), 1);
    }

    #[test]
    fn episode_examples() {
        let t = trace(4, vec![job(1, 0.0, 10.0, 10.0, 4)]);
        let r = run_episode(&t, &mut HeuristicPolicy(PolicyKind::Fcfs), &SimOptions::default())
            .unwrap();
        assert_eq!(r.finished[0].wait_time, Some(0.0));
        assert_eq!(r.report.slowdown.mean, 1.0);

        let t = trace(4, vec![job(1, 0.0, 30.0, 30.0, 4), job(2, 0.0, 30.0, 30.0, 4)]);
        let r = run_episode(&t, &mut HeuristicPolicy(PolicyKind::Fcfs), &SimOptions::default())
            .unwrap();
        assert_eq!(r.finished[1].wait_time, Some(30.0));
    }

    #[test]
    fn dependencies_delay_start() {
        let t = trace(
            8,
            vec![
                job(1, 0.0, 10.0, 10.0, 1),
                job(2, 0.0, 5.0, 5.0, 1).with_dependencies(vec![1]),
            ],
        );
        let opts = SimOptions {
            check_invariants: true,
            ..Default::default()
        };
        let r = run_episode(&t, &mut HeuristicPolicy(PolicyKind::Sjf), &opts).unwrap();
        assert_eq!(r.finished[1].wait_time, Some(10.0));
    }

    #[test]
    fn jobs_csv_has_schema_and_rows() {
        let t = trace(4, vec![job(1, 0.0, 10.0, 10.0, 4)]);
        let r = run_episode(&t, &mut HeuristicPolicy(PolicyKind::Fcfs), &SimOptions::default())
            .unwrap();
        let csv = jobs_csv(&r.finished, "fcfs");
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], JOBS_CSV_SCHEMA);
        assert_eq!(lines[1], JOBS_CSV_HEADER);
        assert_eq!(lines[2], "1,0,0,10,0,4,fcfs");
    }
}
