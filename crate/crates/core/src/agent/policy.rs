use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{select_action, ActorCritic, CostStats};
use super::state::encode_state;
use super::update::{EpisodeTrajectory, Step};
use super::{episode_reward, Hyperparameters};
use crate::heuristics::Selection;
use crate::simulator::{QueueView, SchedulerPolicy, SimError};
use crate::workload::{Job, JobId};

#[derive(Clone, Debug)]
pub enum ActionMode {
    Greedy,
    Sample(Box<ChaCha8Rng>),
}

/// Visible slot mask plus pass. Pass is withheld while the machine is idle and
/// some visible job fits, so the agent cannot stall an empty cluster.
fn action_mask(view: &QueueView<'_>, slots: usize) -> Vec<bool> {
    let mut mask = vec![false; slots + 1];
    for (i, job) in view.ready.iter().take(slots).enumerate() {
        mask[i] = view.fits(job);
    }
    let any_slot = mask[..slots].iter().any(|&m| m);
    mask[slots] = !(view.running == 0 && any_slot);
    mask
}

fn fcfs_order(view: &QueueView<'_>) -> Vec<JobId> {
    view.ready.iter().map(|j| j.id).collect()
}

/// The learned policy as a simulator driver. After the agent passes, EASY
/// backfilling ranks the visible jobs by the actor's scores.
#[derive(Clone, Debug)]
pub struct RlPolicy {
    model: ActorCritic,
    hyper: Hyperparameters,
    mode: ActionMode,
    costs: CostStats,
    record: bool,
    trajectory: EpisodeTrajectory,
    cost_fallbacks: usize,
}

impl RlPolicy {
    /// `jobs` supplies the cost statistics (normally the trace about to run).
    pub fn new(model: ActorCritic, hyper: &Hyperparameters, jobs: &[Job], mode: ActionMode) -> Self {
        RlPolicy {
            model,
            hyper: hyper.clone(),
            mode,
            costs: CostStats::from_jobs(jobs),
            record: false,
            trajectory: EpisodeTrajectory::default(),
            cost_fallbacks: 0,
        }
    }

    pub fn greedy(model: ActorCritic, hyper: &Hyperparameters, jobs: &[Job]) -> Self {
        Self::new(model, hyper, jobs, ActionMode::Greedy)
    }

    pub fn sampling(model: ActorCritic, hyper: &Hyperparameters, jobs: &[Job], seed: u64) -> Self {
        Self::new(
            model,
            hyper,
            jobs,
            ActionMode::Sample(Box::new(ChaCha8Rng::seed_from_u64(seed))),
        )
    }

    /// Record decisions for training.
    pub fn recording(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn model(&self) -> &ActorCritic {
        &self.model
    }

    pub fn cost_fallbacks(&self) -> usize {
        self.cost_fallbacks
    }
}

impl SchedulerPolicy for RlPolicy {
    fn label(&self) -> String {
        "rl".to_string()
    }

    fn select(&mut self, view: &QueueView<'_>) -> Result<Selection, SimError> {
        let slots = self.model.slots;
        let mask = action_mask(view, slots);
        let valid = mask.iter().filter(|&&m| m).count();
        if !mask[..slots].iter().any(|&m| m) {
            return Ok(Selection::Pass);
        }
        let state = encode_state(
            &view.ready,
            view.now,
            view.free_procs,
            view.total_procs,
            slots,
            self.hyper.horizon,
            self.hyper.cost_scale,
        );
        let mut cost_factors = vec![1.0; slots + 1];
        for (i, job) in view.ready.iter().take(slots).enumerate() {
            cost_factors[i] = self.costs.factor(job);
        }
        let policy_err = |e: super::AgentError| SimError::Policy(e.to_string());
        let out = self
            .model
            .policy(&state, &mask, &cost_factors, self.hyper.cost_weight)
            .map_err(policy_err)?;
        self.cost_fallbacks += usize::from(out.cost_fallback);
        let action = match &mut self.mode {
            ActionMode::Greedy => select_action::<ChaCha8Rng>(&out.probs, None),
            ActionMode::Sample(rng) => select_action(&out.probs, Some(rng.as_mut())),
        };
        if self.record && valid > 1 {
            let value = self.model.value(&state).map_err(policy_err)?;
            self.trajectory.push(Step {
                log_prob: out.probs[action].ln(),
                state,
                mask,
                cost_factors,
                action,
                reward: 0.0,
                value,
            });
        }
        Ok(if action == slots {
            Selection::Pass
        } else {
            Selection::Start(view.ready[action].id)
        })
    }

    /// Visible jobs by descending actor score (slot order on ties), then the
    /// invisible remainder in arrival order.
    fn backfill_order(&mut self, view: &QueueView<'_>) -> Result<Vec<JobId>, SimError> {
        let slots = self.model.slots;
        let visible = view.ready.len().min(slots);
        let state = encode_state(
            &view.ready,
            view.now,
            view.free_procs,
            view.total_procs,
            slots,
            self.hyper.horizon,
            self.hyper.cost_scale,
        );
        let mut mask = vec![false; slots + 1];
        mask[..visible].iter_mut().for_each(|m| *m = true);
        let out = self
            .model
            .policy(&state, &mask, &vec![1.0; slots + 1], 0.0)
            .map_err(|e| SimError::Policy(e.to_string()))?;
        let mut ranked: Vec<usize> = (0..visible).collect();
        ranked.sort_by(|&a, &b| out.logits[b].total_cmp(&out.logits[a]).then(a.cmp(&b)));
        let mut order: Vec<JobId> = ranked.into_iter().map(|i| view.ready[i].id).collect();
        order.extend(view.ready[visible..].iter().map(|j| j.id));
        Ok(order)
    }

    fn on_episode_end(&mut self, finished: &[Job], tau: f64) -> Result<(), SimError> {
        if self.record {
            let reward = episode_reward(finished, tau).map_err(|e| SimError::Policy(e.to_string()))?;
            self.trajectory.finish(reward);
        }
        Ok(())
    }

    fn take_trajectory(&mut self) -> Option<EpisodeTrajectory> {
        self.record.then(|| std::mem::take(&mut self.trajectory))
    }
}

/// Uniform choice among the same actions the agent may take.
#[derive(Clone, Debug)]
pub struct RandomPolicy {
    slots: usize,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(slots: usize, seed: u64) -> Self {
        RandomPolicy {
            slots,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl SchedulerPolicy for RandomPolicy {
    fn label(&self) -> String {
        "random".to_string()
    }

    fn select(&mut self, view: &QueueView<'_>) -> Result<Selection, SimError> {
        let mask = action_mask(view, self.slots);
        let valid: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let pick = valid[self.rng.random_range(0..valid.len())];
        Ok(if pick == self.slots {
            Selection::Pass
        } else {
            Selection::Start(view.ready[pick].id)
        })
    }

    fn backfill_order(&mut self, view: &QueueView<'_>) -> Result<Vec<JobId>, SimError> {
        Ok(fcfs_order(view))
    }
}
