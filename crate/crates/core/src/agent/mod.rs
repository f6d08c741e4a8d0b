//! Actor-critic scheduling agent.
//!
//! The agent looks at a fixed window of the ready queue and either picks one
//! visible job to start now or passes. Rewards are zero until the episode ends,
//! when the agent receives the negated mean bounded slowdown.

mod model;
mod policy;
mod state;
mod train;
mod update;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, MetricsError};
use crate::neural::{AdamConfig, NeuralError};
use crate::simulator::SimError;
use crate::workload::Job;

pub use model::{
    apply_cost_adjustment, select_action, ActionChoice, ActorCritic, ActorKind, CostStats,
    PolicyOutput,
};
pub use policy::{ActionMode, RandomPolicy, RlPolicy};
pub use state::{encode_state, state_len, CLUSTER_FEATURES, JOB_FEATURES};
pub use train::{
    evaluate_greedy, random_baseline, train, CurveRow, Environment, ModelVersions, SavedVersion,
    TrainOutcome, TrainingCurve, TRAINING_CURVE_HEADER, TRAINING_CURVE_SCHEMA,
};
pub use update::{
    actor_critic_update, compute_advantages, compute_gae, EpisodeTrajectory, Step,
    UpdateDiagnostics,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("trajectory is incomplete (no terminal reward)")]
    IncompleteTrajectory,
    #[error("non-finite TD error; update skipped")]
    NonFiniteDelta,
    #[error("model does not match the configuration: {0}")]
    Incompatible(String),
    #[error("rollout worker {worker} failed twice in epoch {epoch}: {reason}")]
    WorkerFailed {
        epoch: u64,
        worker: usize,
        reason: String,
    },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

impl AgentError {
    /// Numerical blow-up during an update, as opposed to a configuration or
    /// simulation failure.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            AgentError::NonFiniteDelta | AgentError::Neural(NeuralError::NonFinite(_))
        )
    }
}

/// How gradients from collected episodes become parameter updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateMode {
    /// Gradients of all workers' episodes are averaged and applied once per epoch.
    Batch,
    /// One critic and one actor step per transition, in episode order.
    Online,
    /// Clipped-surrogate updates, several passes over the epoch's batch.
    Ppo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub gamma: f64,
    /// Adam step size of the actor.
    pub actor_lr: f64,
    /// Adam step size of the critic.
    pub critic_lr: f64,
    /// Advantage mixing between TD(0) (0) and Monte Carlo returns (1).
    pub gae_lambda: f64,
    pub slots: usize,
    pub epochs: u64,
    pub workers: usize,
    pub cost_weight: f64,
    pub entropy_weight: f64,
    pub mode: UpdateMode,
    pub ppo_clip: f64,
    pub ppo_epochs: usize,
    pub hidden: Vec<usize>,
    pub actor: ActorKind,
    /// Seconds mapped to 1.0 for wait and requested-time features.
    pub horizon: f64,
    /// Cost rate mapped to 1.0.
    pub cost_scale: f64,
    pub validate_every: u64,
    pub rollback_patience: usize,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            gamma: 1.0,
            actor_lr: 3e-3,
            critic_lr: 3e-3,
            gae_lambda: 1.0,
            slots: 16,
            epochs: 200,
            workers: 1,
            cost_weight: 0.0,
            entropy_weight: 0.0,
            mode: UpdateMode::Batch,
            ppo_clip: 0.2,
            ppo_epochs: 4,
            hidden: vec![64, 64],
            actor: ActorKind::Shared,
            horizon: 43_200.0,
            cost_scale: 2.0,
            validate_every: 50,
            rollback_patience: 3,
            seed: 0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidHyperparameters(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(self.actor_lr > 0.0 && self.actor_lr.is_finite()) {
            return bad("actor step size must be positive");
        }
        if !(self.critic_lr > 0.0 && self.critic_lr.is_finite()) {
            return bad("critic step size must be positive");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must be in [0, 1]");
        }
        if self.slots == 0 {
            return bad("slots must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if !(self.cost_weight >= 0.0 && self.cost_weight.is_finite()) {
            return bad("cost weight must be nonnegative");
        }
        if !(self.entropy_weight >= 0.0 && self.entropy_weight.is_finite()) {
            return bad("entropy weight must be nonnegative");
        }
        if !(self.ppo_clip > 0.0 && self.ppo_clip < 1.0) {
            return bad("ppo clip must be in (0, 1)");
        }
        if self.ppo_epochs == 0 {
            return bad("ppo_epochs must be at least 1");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if !(self.cost_scale > 0.0 && self.cost_scale.is_finite()) {
            return bad("cost scale must be positive");
        }
        if self.rollback_patience == 0 {
            return bad("rollback patience must be at least 1");
        }
        Ok(())
    }

    pub(crate) fn actor_adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.actor_lr,
            ..AdamConfig::default()
        }
    }

    pub(crate) fn critic_adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.critic_lr,
            ..AdamConfig::default()
        }
    }
}

/// `-(mean bounded slowdown)` over the finished jobs.
pub fn episode_reward(finished: &[Job], tau: f64) -> Result<f64, AgentError> {
    if finished.is_empty() {
        return Err(MetricsError::Empty.into());
    }
    let mut total = 0.0;
    for job in finished {
        let wait = job.wait_time.ok_or(MetricsError::Unstarted(job.id))?;
        total += metrics::bounded_slowdown(wait, job.run_time, tau)?;
    }
    Ok(-total / finished.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn done(id: u64, wait: f64, run: f64) -> Job {
        let mut j = Job::new(id, 0.0, run, run, 1).unwrap();
        j.wait_time = Some(wait);
        j
    }

    #[test]
    fn episode_reward_examples() {
        assert_eq!(
            episode_reward(&[done(1, 0.0, 5.0), done(2, 0.0, 50.0)], 10.0).unwrap(),
            -1.0
        );
        assert_eq!(episode_reward(&[done(1, 90.0, 10.0)], 10.0).unwrap(), -10.0);
        assert_eq!(
            episode_reward(&[done(1, 0.0, 10.0), done(2, 90.0, 10.0)], 10.0).unwrap(),
            -5.5
        );
        assert!(episode_reward(&[], 10.0).is_err());
    }

    #[test]
    fn hyperparameter_validation() {
        assert!(Hyperparameters::default().validate().is_ok());
        for h in [
            Hyperparameters {
                gamma: 0.0,
                ..Default::default()
            },
            Hyperparameters {
                gamma: 1.5,
                ..Default::default()
            },
            Hyperparameters {
                actor_lr: 0.0,
                ..Default::default()
            },
            Hyperparameters {
                critic_lr: -1.0,
                ..Default::default()
            },
            Hyperparameters {
                slots: 0,
                ..Default::default()
            },
        ] {
            assert!(h.validate().is_err());
        }
    }
}
