//! Multi-policy HPC batch scheduler.
//!
//! The crate is organised around a deterministic discrete-event simulator of a
//! homogeneous cluster running rigid, non-preemptable jobs. On top of it sit the
//! closed-form priority heuristics, a small feed-forward network library, an
//! actor-critic scheduling agent, and the size-based decision policy that routes
//! each workload to a heuristic or to the learned agent.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod dag;
pub mod decision;
pub mod heuristics;
pub mod metrics;
pub mod neural;
pub mod simulator;
pub mod workload;

mod error;

pub use error::{Error, Result};

pub use agent::{Hyperparameters, ModelVersions, RlPolicy, TrainingCurve};
pub use dag::{DagFeatures, WorkflowDag};
pub use decision::{Plan, Thresholds};
pub use heuristics::PolicyKind;
pub use metrics::MetricsReport;
pub use simulator::{run_episode, ClusterState, EpisodeResult, SimOptions};
pub use workload::{Job, JobId, JobStatus, SyntheticConfig, WorkloadTrace};
