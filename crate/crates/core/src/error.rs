use thiserror::Error;

use crate::agent::AgentError;
use crate::dag::DagError;
use crate::decision::DecisionError;
use crate::heuristics::HeuristicError;
use crate::metrics::MetricsError;
use crate::neural::NeuralError;
use crate::simulator::SimError;
use crate::workload::WorkloadError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Decision(#[from] DecisionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
