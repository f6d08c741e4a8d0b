//! Workflow DAGs: construction with cycle detection, level-wise task combining,
//! workload halving, and a coarse feature-vector similarity between workflows.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workload::{Job, JobId, WorkflowDescription, WorkloadError, WorkloadTrace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DagError {
    #[error("task {task:?} depends on unknown task {dependency:?}")]
    UnknownDependency { task: String, dependency: String },
    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

/// Per-task demand over the resource types the model carries. Only processors
/// are enforced by the simulator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceProfile {
    pub procs: f64,
    pub memory: f64,
    pub io: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkflowDag {
    tasks: BTreeMap<JobId, Job>,
    names: BTreeMap<JobId, String>,
    edges: BTreeSet<(JobId, JobId)>,
    profiles: BTreeMap<JobId, ResourceProfile>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DagFeatures {
    pub task_count: usize,
    /// Nodes on the longest path.
    pub depth: usize,
    /// Largest level of the longest-path leveling.
    pub width: usize,
    pub total_core_seconds: f64,
    pub mean_cores: f64,
}

/// Builds the DAG for a parsed workflow description. Task ids are assigned
/// 1..=n in description order.
pub fn build_dag(desc: &WorkflowDescription) -> Result<WorkflowDag, DagError> {
    let ids: BTreeMap<&str, JobId> = desc
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.name.as_str(), i as JobId + 1))
        .collect();
    let mut tasks = BTreeMap::new();
    let mut names = BTreeMap::new();
    let mut edges = BTreeSet::new();
    let mut profiles = BTreeMap::new();
    for (i, spec) in desc.tasks.iter().enumerate() {
        let id = i as JobId + 1;
        let mut deps = Vec::with_capacity(spec.after.len());
        for dep in &spec.after {
            let dep_id = *ids.get(dep.as_str()).ok_or_else(|| DagError::UnknownDependency {
                task: spec.name.clone(),
                dependency: dep.clone(),
            })?;
            edges.insert((dep_id, id));
            deps.push(dep_id);
        }
        deps.sort_unstable();
        deps.dedup();
        let job = Job::new(id, spec.submit, spec.runtime, spec.estimate, spec.cores)?
            .with_cost_rate(spec.cost_rate)
            .with_dependencies(deps);
        profiles.insert(
            id,
            ResourceProfile {
                procs: f64::from(spec.cores),
                memory: spec.memory,
                io: spec.io,
                cost: spec.cost_rate * f64::from(spec.cores) * spec.estimate,
            },
        );
        tasks.insert(id, job);
        names.insert(id, spec.name.clone());
    }
    let dag = WorkflowDag {
        tasks,
        names,
        edges,
        profiles,
    };
    if let Some(cycle) = dag.find_cycle() {
        return Err(DagError::Cycle(
            cycle.iter().map(|id| dag.names[id].clone()).collect(),
        ));
    }
    Ok(dag)
}

impl WorkflowDag {
    /// Builds a DAG from jobs carrying their own dependency lists.
    pub fn from_jobs(jobs: &[Job]) -> Result<Self, DagError> {
        let mut tasks = BTreeMap::new();
        let mut names = BTreeMap::new();
        let mut edges = BTreeSet::new();
        let mut profiles = BTreeMap::new();
        for job in jobs {
            tasks.insert(job.id, job.clone());
            names.insert(job.id, job.id.to_string());
            profiles.insert(
                job.id,
                ResourceProfile {
                    procs: f64::from(job.requested_procs),
                    cost: job.cost_rate * job.requested_area(),
                    ..Default::default()
                },
            );
        }
        for job in jobs {
            for dep in &job.dependencies {
                if !tasks.contains_key(dep) {
                    return Err(DagError::UnknownDependency {
                        task: job.id.to_string(),
                        dependency: dep.to_string(),
                    });
                }
                edges.insert((*dep, job.id));
            }
        }
        let dag = WorkflowDag {
            tasks,
            names,
            edges,
            profiles,
        };
        if let Some(cycle) = dag.find_cycle() {
            return Err(DagError::Cycle(
                cycle.iter().map(|id| dag.names[id].clone()).collect(),
            ));
        }
        Ok(dag)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task(&self, id: JobId) -> Option<&Job> {
        self.tasks.get(&id)
    }

    pub fn name(&self, id: JobId) -> Option<&str> {
        self.names.get(&id).map(String::as_str)
    }

    pub fn edges(&self) -> impl Iterator<Item = (JobId, JobId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn profile(&self, id: JobId) -> Option<&ResourceProfile> {
        self.profiles.get(&id)
    }

    fn successors(&self) -> BTreeMap<JobId, Vec<JobId>> {
        let mut succ: BTreeMap<JobId, Vec<JobId>> =
            self.tasks.keys().map(|id| (*id, Vec::new())).collect();
        for (a, b) in &self.edges {
            succ.get_mut(a).expect("edge endpoints exist").push(*b);
        }
        succ
    }

    /// Iterative three-colour DFS; returns one witness cycle if any exists.
    fn find_cycle(&self) -> Option<Vec<JobId>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Colour {
            White,
            Grey,
            Black,
        }
        let succ = self.successors();
        let mut colour: BTreeMap<JobId, Colour> =
            self.tasks.keys().map(|id| (*id, Colour::White)).collect();
        for &root in self.tasks.keys() {
            if colour[&root] != Colour::White {
                continue;
            }
            let mut path: Vec<JobId> = vec![root];
            let mut cursor: Vec<usize> = vec![0];
            colour.insert(root, Colour::Grey);
            while let Some(&node) = path.last() {
                let next_idx = cursor.last_mut().expect("parallel stacks");
                if let Some(&child) = succ[&node].get(*next_idx) {
                    *next_idx += 1;
                    match colour[&child] {
                        Colour::White => {
                            colour.insert(child, Colour::Grey);
                            path.push(child);
                            cursor.push(0);
                        }
                        Colour::Grey => {
                            let start = path.iter().position(|&n| n == child).expect("on path");
                            let mut cycle = path[start..].to_vec();
                            cycle.push(child);
                            return Some(cycle);
                        }
                        Colour::Black => {}
                    }
                } else {
                    colour.insert(node, Colour::Black);
                    path.pop();
                    cursor.pop();
                }
            }
        }
        None
    }

    /// Longest-path level of every task (sources are level 0).
    fn levels(&self) -> BTreeMap<JobId, usize> {
        let succ = self.successors();
        let mut indegree: BTreeMap<JobId, usize> = self.tasks.keys().map(|id| (*id, 0)).collect();
        for (_, b) in &self.edges {
            *indegree.get_mut(b).expect("exists") += 1;
        }
        let mut level: BTreeMap<JobId, usize> = self.tasks.keys().map(|id| (*id, 0)).collect();
        let mut ready: BTreeSet<JobId> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        while let Some(id) = ready.pop_first() {
            let l = level[&id];
            for child in &succ[&id] {
                let lc = level.get_mut(child).expect("exists");
                *lc = (*lc).max(l + 1);
                let d = indegree.get_mut(child).expect("exists");
                *d -= 1;
                if *d == 0 {
                    ready.insert(*child);
                }
            }
        }
        level
    }

    /// Groups tasks into level sets that can be co-submitted. Tasks within a group
    /// have no dependency path between them, and concatenating the groups gives a
    /// topological order. Groups are sorted by id.
    pub fn combine_parallel_tasks(&self) -> Vec<Vec<JobId>> {
        let levels = self.levels();
        let depth = levels.values().max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); depth];
        for (id, l) in levels {
            groups[l].push(id);
        }
        groups
    }

    pub fn topological_order(&self) -> Vec<JobId> {
        self.combine_parallel_tasks().into_iter().flatten().collect()
    }

    pub fn features(&self) -> DagFeatures {
        let groups = self.combine_parallel_tasks();
        let task_count = self.tasks.len();
        let total_core_seconds = self
            .tasks
            .values()
            .map(|j| f64::from(j.requested_procs) * j.run_time)
            .sum();
        let mean_cores = if task_count == 0 {
            0.0
        } else {
            self.tasks
                .values()
                .map(|j| f64::from(j.requested_procs))
                .sum::<f64>()
                / task_count as f64
        };
        DagFeatures {
            task_count,
            depth: groups.len(),
            width: groups.iter().map(Vec::len).max().unwrap_or(0),
            total_core_seconds,
            mean_cores,
        }
    }

    /// Flattens the DAG into a trace for the simulator; dependencies are kept.
    pub fn to_trace(&self, name: &str, total_procs: u32) -> Result<WorkloadTrace, DagError> {
        Ok(WorkloadTrace::new(
            name,
            total_procs,
            self.tasks.values().cloned().collect(),
        )?)
    }
}

/// Halves the list (first half gets the extra element) until every chunk holds at
/// most `max_size` items. Concatenating the chunks reproduces the input.
pub fn split_workload<T: Clone>(jobs: &[T], max_size: usize) -> Vec<Vec<T>> {
    assert!(max_size >= 1, "max_size must be at least 1");
    let mut out = Vec::new();
    fn halve<T: Clone>(part: &[T], max: usize, out: &mut Vec<Vec<T>>) {
        if part.len() <= max {
            out.push(part.to_vec());
        } else {
            let mid = part.len().div_ceil(2);
            halve(&part[..mid], max, out);
            halve(&part[mid..], max, out);
        }
    }
    halve(jobs, max_size, &mut out);
    out
}

/// `1 - mean_k |a_k - b_k| / max(|a_k|, |b_k|)` over the five features, with a
/// feature contributing 0 when both sides are 0.
pub fn dag_similarity(a: &DagFeatures, b: &DagFeatures) -> f64 {
    let pairs = [
        (a.task_count as f64, b.task_count as f64),
        (a.depth as f64, b.depth as f64),
        (a.width as f64, b.width as f64),
        (a.total_core_seconds, b.total_core_seconds),
        (a.mean_cores, b.mean_cores),
    ];
    let diff: f64 = pairs
        .iter()
        .map(|&(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale == 0.0 {
                0.0
            } else {
                (x - y).abs() / scale
            }
        })
        .sum();
    (1.0 - diff / pairs.len() as f64).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::parse_workflow;

    fn dag(text: &str) -> WorkflowDag {
        build_dag(&parse_workflow(text).unwrap()).unwrap()
    }

    fn chain(n: usize) -> WorkflowDag {
        let mut text = String::from("task t0 cores=1 runtime=10\n");
        for i in 1..n {
            text.push_str(&format!("task t{i} cores=1 runtime=10 after=t{}\n", i - 1));
        }
        dag(&text)
    }

    #[test]
    fn single_node() {
        let d = dag("task a cores=1 runtime=1");
        let f = d.features();
        assert_eq!((f.task_count, f.depth, f.width), (1, 1, 1));
    }

    #[test]
    fn chain_levels() {
        let d = chain(3);
        assert_eq!(d.combine_parallel_tasks(), vec![vec![1], vec![2], vec![3]]);
        let f = d.features();
        assert_eq!((f.depth, f.width), (3, 1));
    }

    #[test]
    fn fan_in_levels() {
        let d = dag("task a cores=1 runtime=1\ntask b cores=1 runtime=1\ntask c cores=1 runtime=1 after=a,b");
        assert_eq!(d.combine_parallel_tasks(), vec![vec![1, 2], vec![3]]);
    }

    #[test]
    fn cycle_reports_witness() {
        let desc = parse_workflow(
            "task A cores=1 runtime=1 after=C\ntask B cores=1 runtime=1 after=A\ntask C cores=1 runtime=1 after=B",
        )
        .unwrap();
        match build_dag(&desc) {
            Err(DagError::Cycle(names)) => {
                assert_eq!(names.first(), names.last());
                let members: BTreeSet<_> = names.iter().cloned().collect();
                assert_eq!(
                    members,
                    ["A", "B", "C"].iter().map(|s| s.to_string()).collect()
                );
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn unknown_dependency() {
        let desc = parse_workflow("task a cores=1 runtime=1 after=zz").unwrap();
        assert!(matches!(
            build_dag(&desc),
            Err(DagError::UnknownDependency { .. })
        ));
    }

    #[test]
    fn split_examples() {
        let sizes = |n: usize, max: usize| -> Vec<usize> {
            let v: Vec<usize> = (0..n).collect();
            split_workload(&v, max).iter().map(Vec::len).collect()
        };
        assert_eq!(sizes(50_000, 20_000), vec![12_500; 4]);
        assert_eq!(sizes(100, 20_000), vec![100]);
        assert_eq!(sizes(20_001, 20_000), vec![10_001, 10_000]);
        assert_eq!(sizes(0, 5), vec![0]);
    }

    #[test]
    fn similarity_examples() {
        let a = chain(3).features();
        let b = chain(300).features();
        assert_eq!(dag_similarity(&a, &a), 1.0);
        assert_eq!(dag_similarity(&a, &b), dag_similarity(&b, &a));
        let s = dag_similarity(&a, &b);
        // task_count, depth and core-seconds each differ by 0.99; width and mean cores match.
        assert!((s - (1.0 - 3.0 * 0.99 / 5.0)).abs() < 1e-12, "{s}");
        assert!(s < 0.5);
    }

    #[test]
    fn trace_keeps_dependencies() {
        let t = chain(3).to_trace("wf", 4).unwrap();
        assert_eq!(t.jobs[2].dependencies, vec![2]);
    }
}
