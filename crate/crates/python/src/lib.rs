//! Python bindings: build traces, run policies, train and apply the agent.

use std::fmt::Display;

use mars_core::agent::{self, ActorCritic, Environment};
use mars_core::decision::{self, Branch};
use mars_core::heuristics::PolicyKind;
use mars_core::metrics;
use mars_core::neural::{from_model_json, to_model_json};
use mars_core::simulator::HeuristicPolicy;
use mars_core::workload::{
    assign_costs, generate_synthetic, parse_swf, slice_trace, write_swf, CostDistribution,
};
use mars_core::{
    run_episode, Hyperparameters, MetricsReport, ModelVersions, SimOptions, SyntheticConfig,
    Thresholds, WorkloadTrace,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn value_err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn options(tau: f64, backfill: bool) -> SimOptions {
    SimOptions {
        tau,
        backfill,
        ..SimOptions::default()
    }
}

/// Reads hyperparameters from a dict with the same keys as the `[agent]`
/// table of the CLI config.
fn hyperparameters(py: Python<'_>, agent: Option<&Bound<'_, PyDict>>) -> PyResult<Hyperparameters> {
    let Some(d) = agent else {
        return Ok(Hyperparameters::default());
    };
    let text: String = py.import("json")?.call_method1("dumps", (d,))?.extract()?;
    let hyper: Hyperparameters = serde_json::from_str(&text).map_err(value_err)?;
    hyper.validate().map_err(value_err)?;
    Ok(hyper)
}

fn thresholds(t: Option<(usize, usize, usize)>) -> PyResult<Thresholds> {
    match t {
        Some((min, median, max)) => Thresholds::new(min, median, max).map_err(value_err),
        None => Ok(Thresholds::default()),
    }
}

/// A workload: a machine size and jobs sorted by submit time.
#[pyclass(name = "Trace", module = "mars_sched", frozen)]
struct PyTrace(WorkloadTrace);

#[pymethods]
impl PyTrace {
    /// Parses SWF text. Malformed lines are skipped.
    #[staticmethod]
    #[pyo3(signature = (text, seed = 0))]
    fn from_swf(text: &str, seed: u64) -> PyResult<Self> {
        let mut trace = parse_swf(text).map_err(value_err)?.trace;
        assign_costs(&mut trace, CostDistribution::default(), seed).map_err(value_err)?;
        Ok(PyTrace(trace))
    }

    #[staticmethod]
    #[pyo3(signature = (jobs = 512, seed = 0))]
    fn synthetic(jobs: usize, seed: u64) -> PyResult<Self> {
        let cfg = SyntheticConfig {
            job_count: jobs,
            seed,
            ..SyntheticConfig::default()
        };
        generate_synthetic(&cfg).map(PyTrace).map_err(value_err)
    }

    /// A 128-processor trace with heavy-tailed runtimes and high load.
    #[staticmethod]
    #[pyo3(signature = (jobs, seed = 0))]
    fn sp2_like(jobs: usize, seed: u64) -> PyResult<Self> {
        generate_synthetic(&SyntheticConfig::sdsc_sp2_like(jobs, seed))
            .map(PyTrace)
            .map_err(value_err)
    }

    fn to_swf(&self) -> String {
        write_swf(&self.0)
    }

    /// `count` jobs from `start`, with times shifted so the first submit is 0.
    fn slice(&self, start: usize, count: usize) -> PyResult<Self> {
        let mut t = slice_trace(&self.0, start, count, 0, false).map_err(value_err)?;
        t.rebase();
        Ok(PyTrace(t))
    }

    #[getter]
    fn total_procs(&self) -> u32 {
        self.0.total_procs
    }

    /// `(id, submit_time, run_time, requested_time, requested_procs)` per job.
    fn jobs(&self) -> Vec<(u64, f64, f64, f64, u32)> {
        self.0
            .jobs
            .iter()
            .map(|j| (j.id, j.submit_time, j.run_time, j.requested_time, j.requested_procs))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Trace(name={:?}, jobs={}, procs={})",
            self.0.name,
            self.0.len(),
            self.0.total_procs
        )
    }
}

/// Summary of one scheduled run.
#[pyclass(name = "Report", module = "mars_sched", frozen)]
struct PyReport(MetricsReport);

#[pymethods]
impl PyReport {
    #[getter]
    fn policy(&self) -> &str {
        &self.0.policy
    }

    #[getter]
    fn jobs(&self) -> usize {
        self.0.job_count
    }

    #[getter]
    fn mean_bounded_slowdown(&self) -> f64 {
        self.0.bounded_slowdown.mean
    }

    #[getter]
    fn median_bounded_slowdown(&self) -> f64 {
        self.0.bounded_slowdown.median
    }

    #[getter]
    fn p95_bounded_slowdown(&self) -> f64 {
        self.0.bounded_slowdown.p95
    }

    #[getter]
    fn mean_slowdown(&self) -> f64 {
        self.0.slowdown.mean
    }

    #[getter]
    fn mean_pp_slowdown(&self) -> f64 {
        self.0.pp_slowdown.mean
    }

    #[getter]
    fn makespan(&self) -> f64 {
        self.0.makespan
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(runtime_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(policy={:?}, jobs={}, mean_bounded_slowdown={:.4})",
            self.0.policy, self.0.job_count, self.0.bounded_slowdown.mean
        )
    }
}

/// A trained actor-critic scheduling agent.
#[pyclass(name = "Model", module = "mars_sched")]
struct PyModel {
    model: ActorCritic,
    hyper: Hyperparameters,
}

#[pymethods]
impl PyModel {
    /// Trains a fresh agent on `trace`. `agent` takes the keys of the CLI's
    /// `[agent]` table, e.g. `{"epochs": 50, "seed": 1, "mode": "online"}`.
    #[staticmethod]
    #[pyo3(signature = (trace, agent = None, tau = metrics::DEFAULT_TAU, backfill = true))]
    fn train(
        py: Python<'_>,
        trace: &PyTrace,
        agent: Option<&Bound<'_, PyDict>>,
        tau: f64,
        backfill: bool,
    ) -> PyResult<Self> {
        let hyper = hyperparameters(py, agent)?;
        let mut model = ActorCritic::new(&hyper).map_err(value_err)?;
        model.adopt(&hyper).map_err(value_err)?;
        let env = Environment::single(trace.0.clone(), options(tau, backfill));
        let outcome = py
            .detach(|| agent::train(&env, &hyper, model, &mut ModelVersions::new(), |_| {}))
            .map_err(runtime_err)?;
        if let Some(e) = outcome.diverged {
            return Err(runtime_err(format!("training diverged: {e}")));
        }
        Ok(PyModel {
            model: outcome.model,
            hyper,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (text, agent = None))]
    fn from_json(py: Python<'_>, text: &str, agent: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let hyper = hyperparameters(py, agent)?;
        let mut model: ActorCritic = from_model_json(text).map_err(value_err)?;
        model.adopt(&hyper).map_err(value_err)?;
        Ok(PyModel { model, hyper })
    }

    fn to_json(&self) -> PyResult<String> {
        to_model_json(&self.model).map_err(runtime_err)
    }

    #[getter]
    fn epochs_trained(&self) -> u64 {
        self.model.epochs_trained
    }

    /// Greedy run over `trace`.
    #[pyo3(signature = (trace, tau = metrics::DEFAULT_TAU, backfill = true))]
    fn evaluate(&self, py: Python<'_>, trace: &PyTrace, tau: f64, backfill: bool) -> PyResult<PyReport> {
        let result = py
            .detach(|| agent::evaluate_greedy(&self.model, &self.hyper, &trace.0, &options(tau, backfill)))
            .map_err(runtime_err)?;
        Ok(PyReport(result.report))
    }

    fn __repr__(&self) -> String {
        format!("Model(epochs_trained={})", self.model.epochs_trained)
    }
}

/// Runs one heuristic, or `"rl"` with a model, over `trace`.
#[pyfunction]
#[pyo3(signature = (trace, policy = "fcfs", model = None, tau = metrics::DEFAULT_TAU, backfill = true))]
fn simulate(
    py: Python<'_>,
    trace: &PyTrace,
    policy: &str,
    model: Option<PyRef<'_, PyModel>>,
    tau: f64,
    backfill: bool,
) -> PyResult<PyReport> {
    let kind: PolicyKind = policy.parse().map_err(value_err)?;
    if kind == PolicyKind::Rl {
        let m = model.ok_or_else(|| PyValueError::new_err("policy rl needs a model"))?;
        return m.evaluate(py, trace, tau, backfill);
    }
    let opts = options(tau, backfill);
    let result = py
        .detach(|| run_episode(&trace.0, &mut HeuristicPolicy(kind), &opts))
        .map_err(runtime_err)?;
    Ok(PyReport(result.report))
}

/// Mean bounded slowdown of the uniform random policy over `episodes` runs.
#[pyfunction]
#[pyo3(signature = (trace, episodes = 20, slots = 16, seed = 0, tau = metrics::DEFAULT_TAU))]
fn random_baseline(trace: &PyTrace, episodes: usize, slots: usize, seed: u64, tau: f64) -> PyResult<f64> {
    agent::random_baseline(&trace.0, slots, &options(tau, true), episodes, seed)
        .map(|r| -r)
        .map_err(runtime_err)
}

/// Plans `trace` (cut into pieces of `workload_size` jobs, or whole) and runs
/// every chunk with the policy its branch picks. Returns the report and the
/// plan as JSON.
#[pyfunction]
#[pyo3(signature = (trace, model = None, workload_size = None, thresholds = None, tau = metrics::DEFAULT_TAU, backfill = true))]
fn run_mars(
    py: Python<'_>,
    trace: &PyTrace,
    model: Option<PyRef<'_, PyModel>>,
    workload_size: Option<usize>,
    thresholds: Option<(usize, usize, usize)>,
    tau: f64,
    backfill: bool,
) -> PyResult<(PyReport, String)> {
    let t = self::thresholds(thresholds)?;
    let workloads = match workload_size {
        Some(0) => return Err(PyValueError::new_err("workload_size must be positive")),
        Some(n) => trace.0.jobs.chunks(n).map(<[_]>::to_vec).collect(),
        None => vec![trace.0.jobs.clone()],
    };
    let plan = decision::plan_workloads(&workloads, &t).map_err(value_err)?;
    let model = model.as_ref().map(|m| (&m.model, &m.hyper));
    let opts = options(tau, backfill);
    let report = py
        .detach(|| decision::run_plan(&plan, trace.0.total_procs, &opts, model))
        .map_err(runtime_err)?;
    Ok((PyReport(report.aggregate), plan.explain().to_string()))
}

/// The branch a workload of `eta` jobs takes, given the size of the next
/// workload if there is one.
#[pyfunction]
#[pyo3(signature = (eta, next_len = None, compatible = true, thresholds = None))]
fn route(
    eta: usize,
    next_len: Option<usize>,
    compatible: bool,
    thresholds: Option<(usize, usize, usize)>,
) -> PyResult<&'static str> {
    let t = self::thresholds(thresholds)?;
    Ok(match decision::route(eta, next_len, compatible, &t) {
        Branch::Combine => "combine",
        Branch::Sjf => "sjf",
        Branch::Unicef => "unicef",
        Branch::Rl => "rl",
        Branch::Split => "split",
    })
}

#[pyfunction]
fn slowdown(wait: f64, run: f64) -> PyResult<f64> {
    metrics::slowdown(wait, run).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (wait, run, tau = metrics::DEFAULT_TAU))]
fn bounded_slowdown(wait: f64, run: f64, tau: f64) -> PyResult<f64> {
    metrics::bounded_slowdown(wait, run, tau).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (wait, run, procs, tau = metrics::DEFAULT_TAU))]
fn pp_slowdown(wait: f64, run: f64, procs: u32, tau: f64) -> PyResult<f64> {
    metrics::pp_slowdown(wait, run, tau, procs).map_err(value_err)
}

/// Names of the heuristic policies.
#[pyfunction]
fn heuristics(py: Python<'_>) -> PyResult<Bound<'_, PyList>> {
    PyList::new(py, PolicyKind::HEURISTICS.iter().map(|k| k.name()))
}

#[pymodule]
fn mars_sched(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrace>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(random_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(run_mars, m)?)?;
    m.add_function(wrap_pyfunction!(route, m)?)?;
    m.add_function(wrap_pyfunction!(slowdown, m)?)?;
    m.add_function(wrap_pyfunction!(bounded_slowdown, m)?)?;
    m.add_function(wrap_pyfunction!(pp_slowdown, m)?)?;
    m.add_function(wrap_pyfunction!(heuristics, m)?)?;
    Ok(())
}
