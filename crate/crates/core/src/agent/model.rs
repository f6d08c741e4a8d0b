use rand::Rng;
use serde::{Deserialize, Serialize};

use super::state::{state_len, CLUSTER_FEATURES, JOB_FEATURES};
use super::{AgentError, Hyperparameters};
use crate::neural::{
    masked_softmax, Activation, AdamState, ForwardCache, Gradients, Network,
};
use crate::workload::Job;

/// Shape of the actor network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorKind {
    /// One small network scores every action from that slot's features plus
    /// the cluster features; the pass action has its own indicator input.
    Shared,
    /// One network maps the whole state to `slots + 1` logits.
    Flat,
}

/// Actor and critic networks with their optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub kind: ActorKind,
    pub slots: usize,
    pub actor: Network,
    pub critic: Network,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
    pub epochs_trained: u64,
}

pub(crate) enum ActorCaches {
    Shared(Vec<Option<ForwardCache>>),
    Flat(ForwardCache),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub logits: Vec<f64>,
    /// Masked softmax before the cost adjustment.
    pub base: Vec<f64>,
    /// Distribution actually sampled from.
    pub probs: Vec<f64>,
    /// The cost adjustment collapsed to zero mass and was skipped.
    pub cost_fallback: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionChoice {
    Slot(usize),
    Pass,
}

const SHARED_INPUT: usize = JOB_FEATURES + 1 + CLUSTER_FEATURES;

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

impl ActorCritic {
    pub fn new(hyper: &Hyperparameters) -> Result<Self, AgentError> {
        hyper.validate()?;
        let n = state_len(hyper.slots);
        let actor_sizes = match hyper.actor {
            ActorKind::Shared => sizes(SHARED_INPUT, &hyper.hidden, 1),
            ActorKind::Flat => sizes(n, &hyper.hidden, hyper.slots + 1),
        };
        let actor = Network::new(
            &actor_sizes,
            Activation::Tanh,
            Activation::Identity,
            hyper.seed,
        )?;
        let critic = Network::new(
            &sizes(n, &hyper.hidden, 1),
            Activation::Tanh,
            Activation::Identity,
            hyper.seed.wrapping_add(1),
        )?;
        Ok(ActorCritic {
            kind: hyper.actor,
            slots: hyper.slots,
            actor_adam: AdamState::new(&actor, hyper.actor_adam()),
            critic_adam: AdamState::new(&critic, hyper.critic_adam()),
            actor,
            critic,
            epochs_trained: 0,
        })
    }

    /// Checks that the model's observation and action layout matches `hyper`,
    /// and adopts its step sizes.
    pub fn adopt(&mut self, hyper: &Hyperparameters) -> Result<(), AgentError> {
        hyper.validate()?;
        if self.slots != hyper.slots || self.kind != hyper.actor {
            return Err(AgentError::Incompatible(format!(
                "model has {} slots ({:?} actor), configuration asks for {} ({:?})",
                self.slots, self.kind, hyper.slots, hyper.actor
            )));
        }
        if self.critic.input_dim() != state_len(self.slots) {
            return Err(AgentError::Incompatible("critic input size".into()));
        }
        self.actor_adam.config.learning_rate = hyper.actor_lr;
        self.critic_adam.config.learning_rate = hyper.critic_lr;
        Ok(())
    }

    pub fn action_count(&self) -> usize {
        self.slots + 1
    }

    fn shared_input(&self, state: &[f64], action: usize) -> Vec<f64> {
        let mut x = vec![0.0; SHARED_INPUT];
        if action < self.slots {
            let base = action * JOB_FEATURES;
            x[..JOB_FEATURES].copy_from_slice(&state[base..base + JOB_FEATURES]);
        } else {
            x[JOB_FEATURES] = 1.0;
        }
        let c = self.slots * JOB_FEATURES;
        x[JOB_FEATURES + 1..].copy_from_slice(&state[c..c + CLUSTER_FEATURES]);
        x
    }

    /// Raw actor outputs; masked-out actions get `-inf`.
    pub(crate) fn logits(
        &self,
        state: &[f64],
        mask: &[bool],
    ) -> Result<(Vec<f64>, ActorCaches), AgentError> {
        match self.kind {
            ActorKind::Shared => {
                let mut logits = vec![f64::NEG_INFINITY; self.action_count()];
                let mut caches = Vec::with_capacity(self.action_count());
                for (a, &ok) in mask.iter().enumerate() {
                    if ok {
                        let (out, cache) = self.actor.forward(&self.shared_input(state, a))?;
                        logits[a] = out[0];
                        caches.push(Some(cache));
                    } else {
                        caches.push(None);
                    }
                }
                Ok((logits, ActorCaches::Shared(caches)))
            }
            ActorKind::Flat => {
                let (mut out, cache) = self.actor.forward(state)?;
                for (z, &ok) in out.iter_mut().zip(mask) {
                    if !ok {
                        *z = f64::NEG_INFINITY;
                    }
                }
                Ok((out, ActorCaches::Flat(cache)))
            }
        }
    }

    /// Accumulates `dL/dlogits` into actor parameter gradients.
    pub(crate) fn backprop_logits(
        &self,
        caches: &ActorCaches,
        dlogits: &[f64],
        grads: &mut Gradients,
    ) -> Result<(), AgentError> {
        match caches {
            ActorCaches::Shared(per_action) => {
                for (cache, &d) in per_action.iter().zip(dlogits) {
                    if let Some(cache) = cache {
                        if d != 0.0 {
                            self.actor.backward_into(cache, &[1.0], grads, d)?;
                        }
                    }
                }
            }
            ActorCaches::Flat(cache) => {
                let clean: Vec<f64> = dlogits
                    .iter()
                    .map(|d| if d.is_finite() { *d } else { 0.0 })
                    .collect();
                self.actor.backward_into(cache, &clean, grads, 1.0)?;
            }
        }
        Ok(())
    }

    pub(crate) fn policy_with_caches(
        &self,
        state: &[f64],
        mask: &[bool],
        cost_factors: &[f64],
        cost_weight: f64,
    ) -> Result<(PolicyOutput, ActorCaches), AgentError> {
        let (logits, caches) = self.logits(state, mask)?;
        let base = masked_softmax(&logits, mask);
        let (probs, cost_fallback) = apply_cost_adjustment(&base, cost_factors, cost_weight);
        Ok((
            PolicyOutput {
                logits,
                base,
                probs,
                cost_fallback,
            },
            caches,
        ))
    }

    pub fn policy(
        &self,
        state: &[f64],
        mask: &[bool],
        cost_factors: &[f64],
        cost_weight: f64,
    ) -> Result<PolicyOutput, AgentError> {
        self.policy_with_caches(state, mask, cost_factors, cost_weight)
            .map(|(p, _)| p)
    }

    pub fn value(&self, state: &[f64]) -> Result<f64, AgentError> {
        Ok(self.critic.predict(state)?[0])
    }

    /// Bitwise equality of both networks and both optimizer states.
    pub fn bit_identical(&self, other: &ActorCritic) -> bool {
        let bits = |g: &Gradients| g.flatten().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.actor.same_parameters(&other.actor)
            && self.critic.same_parameters(&other.critic)
            && self.actor_adam.t == other.actor_adam.t
            && self.critic_adam.t == other.critic_adam.t
            && bits(&self.actor_adam.m) == bits(&other.actor_adam.m)
            && bits(&self.actor_adam.v) == bits(&other.actor_adam.v)
            && bits(&self.critic_adam.m) == bits(&other.critic_adam.m)
            && bits(&self.critic_adam.v) == bits(&other.critic_adam.v)
    }
}

/// Multiplies each probability by `factor^weight` and renormalizes. Weight 0
/// returns the input unchanged. If every adjusted entry is zero the input is
/// returned and the flag is set.
pub fn apply_cost_adjustment(probs: &[f64], factors: &[f64], weight: f64) -> (Vec<f64>, bool) {
    if weight == 0.0 {
        return (probs.to_vec(), false);
    }
    let adjusted: Vec<f64> = probs
        .iter()
        .zip(factors)
        .map(|(p, c)| if *p > 0.0 { p * c.powf(weight) } else { 0.0 })
        .collect();
    let sum: f64 = adjusted.iter().sum();
    if !(sum > 0.0 && sum.is_finite()) {
        return (probs.to_vec(), true);
    }
    (adjusted.into_iter().map(|q| q / sum).collect(), false)
}

/// Argmax (lowest index on ties) when `rng` is `None`, otherwise a draw.
/// Zero-probability actions are never returned.
pub fn select_action<R: Rng + ?Sized>(probs: &[f64], rng: Option<&mut R>) -> usize {
    let support = || probs.iter().enumerate().filter(|(_, p)| **p > 0.0);
    match rng {
        None => {
            let mut best = 0;
            let mut best_p = f64::NEG_INFINITY;
            for (i, &p) in support() {
                if p > best_p {
                    best = i;
                    best_p = p;
                }
            }
            best
        }
        Some(rng) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut last = 0;
            for (i, &p) in support() {
                acc += p;
                last = i;
                if u < acc {
                    return i;
                }
            }
            last
        }
    }
}

/// Gaussian model of job cost (`cost_rate * procs * requested_time`) used to
/// turn a cost into a factor in (0, 1), cheaper jobs nearer 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostStats {
    pub mean: f64,
    pub std_dev: f64,
}

impl CostStats {
    pub fn job_cost(job: &Job) -> f64 {
        job.cost_rate * f64::from(job.requested_procs) * job.requested_time
    }

    pub fn from_jobs(jobs: &[Job]) -> Self {
        if jobs.is_empty() {
            return CostStats {
                mean: 0.0,
                std_dev: 0.0,
            };
        }
        let costs: Vec<f64> = jobs.iter().map(Self::job_cost).collect();
        let n = costs.len() as f64;
        let mean = costs.iter().sum::<f64>() / n;
        let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
        CostStats {
            mean,
            std_dev: var.sqrt(),
        }
    }

    /// Upper-tail probability of the job's cost under the fitted normal.
    pub fn factor(&self, job: &Job) -> f64 {
        if !(self.std_dev > 0.0) {
            return 1.0;
        }
        let z = (Self::job_cost(job) - self.mean) / self.std_dev;
        0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
    }
}
