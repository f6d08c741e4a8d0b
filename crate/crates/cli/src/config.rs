//! Run configuration: built-in defaults, then an optional TOML file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use mars_core::agent::UpdateMode;
use mars_core::decision::Thresholds;
use mars_core::heuristics::PolicyKind;
use mars_core::{Hyperparameters, SimOptions, SyntheticConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// A policy as named on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyChoice {
    Kind(PolicyKind),
    /// Size-based routing between heuristics and the agent.
    Mars,
}

impl PolicyChoice {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        if s.eq_ignore_ascii_case("mars") {
            return Ok(PolicyChoice::Mars);
        }
        s.parse::<PolicyKind>().map(PolicyChoice::Kind).map_err(|_| {
            CliError::Usage(format!(
                "unknown policy {s:?}; expected one of fcfs, sjf, wfp3, unicef, f1, f2, f3, f4, rl, mars"
            ))
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyChoice::Kind(k) => k.name(),
            PolicyChoice::Mars => "mars",
        }
    }

    /// Mars only needs a model when its plan has an RL branch, which is
    /// known after planning.
    pub fn needs_model(self) -> bool {
        matches!(self, PolicyChoice::Kind(PolicyKind::Rl))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// SWF trace, or a workflow description when the name ends in `.wf`.
    pub trace: Option<PathBuf>,
    pub policy: String,
    pub policies: Vec<String>,
    pub seed: u64,
    pub tau: f64,
    pub procs: Option<u32>,
    pub backfill: bool,
    pub out: PathBuf,
    /// First job of the slice taken from the source.
    pub start: usize,
    /// Slice length; all remaining jobs when absent.
    pub count: Option<usize>,
    pub model: Option<PathBuf>,
    pub train_on_demand: bool,
    pub train_from_heuristic: bool,
    /// Cut the trace into consecutive workloads of this many jobs before
    /// planning. The whole trace is one workload when absent.
    pub workload_size: Option<usize>,
    pub explain: bool,
    pub wall_clock: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            trace: None,
            policy: "fcfs".to_string(),
            policies: Vec::new(),
            seed: 0,
            tau: mars_core::metrics::DEFAULT_TAU,
            procs: None,
            backfill: true,
            out: PathBuf::from("mars-out"),
            start: 0,
            count: None,
            model: None,
            train_on_demand: false,
            train_from_heuristic: false,
            workload_size: None,
            explain: false,
            wall_clock: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub synthetic: Option<SyntheticConfig>,
    pub thresholds: Thresholds,
    pub agent: Hyperparameters,
}

/// Flags shared by every subcommand; `None` leaves the file or default value.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub trace: Option<PathBuf>,
    pub synthetic: Option<usize>,
    pub policy: Option<String>,
    pub policies: Option<Vec<String>>,
    pub epochs: Option<u64>,
    pub seed: Option<u64>,
    pub tau: Option<f64>,
    pub procs: Option<u32>,
    pub backfill: Option<bool>,
    pub out: Option<PathBuf>,
    pub start: Option<usize>,
    pub count: Option<usize>,
    pub model: Option<PathBuf>,
    pub mode: Option<UpdateMode>,
    pub workload_size: Option<usize>,
    pub explain: bool,
    pub train_on_demand: bool,
    pub train_from_heuristic: bool,
    pub wall_clock: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text)
            .map_err(|e| CliError::Usage(format!("{}: {}", origin.display(), e.message())))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                Self::from_toml(&text, p)
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        let run = &mut self.run;
        if let Some(t) = &o.trace {
            run.trace = Some(t.clone());
        }
        if let Some(n) = o.synthetic {
            self.synthetic.get_or_insert_with(SyntheticConfig::default).job_count = n;
        }
        if let Some(p) = &o.policy {
            run.policy = p.clone();
        }
        if let Some(p) = &o.policies {
            run.policies = p.clone();
        }
        if let Some(e) = o.epochs {
            self.agent.epochs = e;
        }
        if let Some(s) = o.seed {
            run.seed = s;
        }
        if let Some(t) = o.tau {
            run.tau = t;
        }
        if let Some(p) = o.procs {
            run.procs = Some(p);
        }
        if let Some(b) = o.backfill {
            run.backfill = b;
        }
        if let Some(d) = &o.out {
            run.out = d.clone();
        }
        if let Some(s) = o.start {
            run.start = s;
        }
        if let Some(c) = o.count {
            run.count = Some(c);
        }
        if let Some(m) = &o.model {
            run.model = Some(m.clone());
        }
        if let Some(m) = o.mode {
            self.agent.mode = m;
        }
        if let Some(w) = o.workload_size {
            run.workload_size = Some(w);
        }
        run.explain |= o.explain;
        run.train_on_demand |= o.train_on_demand;
        run.train_from_heuristic |= o.train_from_heuristic;
        run.wall_clock |= o.wall_clock;
        // One seed drives the whole run.
        self.agent.seed = run.seed;
        if let Some(s) = &mut self.synthetic {
            s.seed = run.seed;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        self.thresholds
            .validate()
            .or_else(|e| usage(e.to_string()))?;
        self.agent.validate().or_else(|e| usage(e.to_string()))?;
        if let Some(s) = &self.synthetic {
            s.validate().or_else(|e| usage(e.to_string()))?;
        }
        if !(self.run.tau > 0.0 && self.run.tau.is_finite()) {
            return usage("tau must be positive".into());
        }
        if self.run.procs == Some(0) {
            return usage("procs must be at least 1".into());
        }
        if self.run.count == Some(0) {
            return usage("count must be at least 1".into());
        }
        if self.run.workload_size == Some(0) {
            return usage("workload size must be at least 1".into());
        }
        PolicyChoice::parse(&self.run.policy)?;
        for p in &self.run.policies {
            PolicyChoice::parse(p)?;
        }
        Ok(())
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            total_procs: self.run.procs,
            backfill: self.run.backfill,
            tau: self.run.tau,
            check_invariants: false,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}
