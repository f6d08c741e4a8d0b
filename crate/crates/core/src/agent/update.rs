use serde::{Deserialize, Serialize};

use super::model::{ActorCritic, PolicyOutput};
use super::{AgentError, Hyperparameters, UpdateMode};
use crate::neural::{adam_step, Gradients};

/// One recorded decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: Vec<f64>,
    /// Valid actions: one entry per slot, then pass.
    pub mask: Vec<bool>,
    pub cost_factors: Vec<f64>,
    pub action: usize,
    /// Reward received after this action.
    pub reward: f64,
    /// Critic estimate of `state` when the action was taken.
    pub value: f64,
    pub log_prob: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrajectory {
    pub steps: Vec<Step>,
    pub terminal: bool,
    /// Terminal reward, kept even when no decision was recorded.
    pub episode_reward: Option<f64>,
}

impl EpisodeTrajectory {
    pub fn push(&mut self, step: Step) {
        self.steps.push(step);
    }

    /// Places the terminal reward on the last step and closes the episode.
    pub fn finish(&mut self, reward: f64) {
        if let Some(last) = self.steps.last_mut() {
            last.reward = reward;
        }
        self.episode_reward = Some(reward);
        self.terminal = true;
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// TD(0) advantages `r + gamma * v(s') - v(s)` with `v(terminal) = 0`, and the
/// critic targets `r + gamma * v(s')`.
pub fn compute_advantages(
    trajectory: &EpisodeTrajectory,
    gamma: f64,
) -> Result<(Vec<f64>, Vec<f64>), AgentError> {
    compute_gae(trajectory, gamma, 0.0)
}

/// Generalized advantage estimates; `lambda = 0` is TD(0) and `lambda = 1`
/// the Monte Carlo return minus the critic estimate. Targets are advantage
/// plus value.
pub fn compute_gae(
    trajectory: &EpisodeTrajectory,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), AgentError> {
    if !trajectory.terminal {
        return Err(AgentError::IncompleteTrajectory);
    }
    let steps = &trajectory.steps;
    let n = steps.len();
    let mut advantages = vec![0.0; n];
    let mut targets = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { steps[t + 1].value } else { 0.0 };
        let delta = steps[t].reward + gamma * next_value - steps[t].value;
        running = if t + 1 < n {
            delta + gamma * lambda * running
        } else {
            delta
        };
        advantages[t] = running;
        targets[t] = running + steps[t].value;
    }
    if lambda == 0.0 {
        // Exact TD target without the add-then-subtract rounding.
        for t in 0..n {
            let next_value = if t + 1 < n { steps[t + 1].value } else { 0.0 };
            targets[t] = steps[t].reward + gamma * next_value;
        }
    }
    Ok((advantages, targets))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub steps: usize,
    pub mean_delta: f64,
    pub mean_entropy: f64,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
    pub cost_fallbacks: usize,
}

fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// Gradient of `-weight * ln q(a) + cost_weight * E_q[1 - factor]
/// - entropy_weight * H(q)` with respect to the logits.
fn logit_gradient(
    out: &PolicyOutput,
    action: usize,
    weight: f64,
    cost_factors: &[f64],
    hyper: &Hyperparameters,
) -> Vec<f64> {
    let q = &out.probs;
    let mut d: Vec<f64> = q.iter().map(|p| weight * p).collect();
    d[action] -= weight;
    if hyper.cost_weight > 0.0 {
        let expected: f64 = q
            .iter()
            .zip(cost_factors)
            .map(|(p, c)| p * (1.0 - c))
            .sum();
        for ((dj, p), c) in d.iter_mut().zip(q).zip(cost_factors) {
            *dj += hyper.cost_weight * p * ((1.0 - c) - expected);
        }
    }
    if hyper.entropy_weight > 0.0 {
        let h = entropy(q);
        for (dj, p) in d.iter_mut().zip(q) {
            if *p > 0.0 {
                *dj += hyper.entropy_weight * p * (p.ln() + h);
            }
        }
    }
    d
}

fn td_errors(trajectory: &EpisodeTrajectory, gamma: f64) -> Vec<f64> {
    let steps = &trajectory.steps;
    (0..steps.len())
        .map(|t| {
            let next = steps.get(t + 1).map_or(0.0, |s| s.value);
            steps[t].reward + gamma * next - steps[t].value
        })
        .collect()
}

/// Applies the policy-gradient update for a set of completed episodes (one per
/// rollout worker). On a non-finite TD error or gradient nothing changes.
pub fn actor_critic_update(
    model: &mut ActorCritic,
    trajectories: &[EpisodeTrajectory],
    hyper: &Hyperparameters,
) -> Result<UpdateDiagnostics, AgentError> {
    if trajectories.iter().any(|t| !t.terminal) {
        return Err(AgentError::IncompleteTrajectory);
    }
    let deltas: Vec<f64> = trajectories
        .iter()
        .flat_map(|t| td_errors(t, hyper.gamma))
        .collect();
    if deltas.iter().any(|d| !d.is_finite()) {
        return Err(AgentError::NonFiniteDelta);
    }
    let steps = deltas.len();
    let mut diag = UpdateDiagnostics {
        steps,
        mean_delta: if steps > 0 {
            deltas.iter().sum::<f64>() / steps as f64
        } else {
            0.0
        },
        ..Default::default()
    };
    if steps == 0 {
        return Ok(diag);
    }
    let backup = model.clone();
    let result = match hyper.mode {
        UpdateMode::Batch => batch_update(model, trajectories, hyper, &mut diag),
        UpdateMode::Online => online_update(model, trajectories, hyper, &mut diag),
        UpdateMode::Ppo => ppo_update(model, trajectories, hyper, &mut diag),
    };
    if let Err(e) = result {
        *model = backup;
        return Err(e);
    }
    Ok(diag)
}

fn check(grads: &Gradients) -> Result<(), AgentError> {
    if grads.is_finite() {
        Ok(())
    } else {
        Err(AgentError::NonFiniteDelta)
    }
}

fn batch_update(
    model: &mut ActorCritic,
    trajectories: &[EpisodeTrajectory],
    hyper: &Hyperparameters,
    diag: &mut UpdateDiagnostics,
) -> Result<(), AgentError> {
    let mut ga = Gradients::zeros_like(&model.actor);
    let mut gc = Gradients::zeros_like(&model.critic);
    let workers = trajectories.len() as f64;
    let mut entropy_sum = 0.0;
    for traj in trajectories {
        let (adv, targets) = compute_gae(traj, hyper.gamma, hyper.gae_lambda)?;
        let mut discount = 1.0;
        for (t, step) in traj.steps.iter().enumerate() {
            let (v, cache) = model.critic.forward(&step.state)?;
            model
                .critic
                .backward_into(&cache, &[-(targets[t] - v[0])], &mut gc, discount / workers)?;
            let (out, caches) = model.policy_with_caches(
                &step.state,
                &step.mask,
                &step.cost_factors,
                hyper.cost_weight,
            )?;
            diag.cost_fallbacks += usize::from(out.cost_fallback);
            entropy_sum += entropy(&out.probs);
            let mut d = logit_gradient(&out, step.action, discount * adv[t], &step.cost_factors, hyper);
            for x in &mut d {
                *x /= workers;
            }
            model.backprop_logits(&caches, &d, &mut ga)?;
            discount *= hyper.gamma;
        }
    }
    check(&ga)?;
    check(&gc)?;
    diag.mean_entropy = entropy_sum / diag.steps as f64;
    diag.actor_grad_norm = ga.norm();
    diag.critic_grad_norm = gc.norm();
    adam_step(&mut model.critic, &gc, &mut model.critic_adam)?;
    adam_step(&mut model.actor, &ga, &mut model.actor_adam)?;
    Ok(())
}

fn online_update(
    model: &mut ActorCritic,
    trajectories: &[EpisodeTrajectory],
    hyper: &Hyperparameters,
    diag: &mut UpdateDiagnostics,
) -> Result<(), AgentError> {
    let mut entropy_sum = 0.0;
    for traj in trajectories {
        let mut discount = 1.0;
        let n = traj.steps.len();
        for t in 0..n {
            let step = &traj.steps[t];
            let (v, cache) = model.critic.forward(&step.state)?;
            let next = if t + 1 < n {
                model.value(&traj.steps[t + 1].state)?
            } else {
                0.0
            };
            let delta = step.reward + hyper.gamma * next - v[0];
            if !delta.is_finite() {
                return Err(AgentError::NonFiniteDelta);
            }
            let (gc, _) = model.critic.backward(&cache, &[-discount * delta])?;
            let (out, caches) = model.policy_with_caches(
                &step.state,
                &step.mask,
                &step.cost_factors,
                hyper.cost_weight,
            )?;
            diag.cost_fallbacks += usize::from(out.cost_fallback);
            entropy_sum += entropy(&out.probs);
            let d = logit_gradient(&out, step.action, discount * delta, &step.cost_factors, hyper);
            let mut ga = Gradients::zeros_like(&model.actor);
            model.backprop_logits(&caches, &d, &mut ga)?;
            check(&ga)?;
            diag.actor_grad_norm += ga.norm() / diag.steps as f64;
            diag.critic_grad_norm += gc.norm() / diag.steps as f64;
            adam_step(&mut model.critic, &gc, &mut model.critic_adam)?;
            adam_step(&mut model.actor, &ga, &mut model.actor_adam)?;
            discount *= hyper.gamma;
        }
    }
    diag.mean_entropy = entropy_sum / diag.steps as f64;
    Ok(())
}

fn ppo_update(
    model: &mut ActorCritic,
    trajectories: &[EpisodeTrajectory],
    hyper: &Hyperparameters,
    diag: &mut UpdateDiagnostics,
) -> Result<(), AgentError> {
    let mut batch = Vec::with_capacity(diag.steps);
    for traj in trajectories {
        let (adv, targets) = compute_gae(traj, hyper.gamma, hyper.gae_lambda)?;
        for (t, step) in traj.steps.iter().enumerate() {
            batch.push((step, adv[t], targets[t]));
        }
    }
    let n = batch.len() as f64;
    let (lo, hi) = (1.0 - hyper.ppo_clip, 1.0 + hyper.ppo_clip);
    for pass in 0..hyper.ppo_epochs {
        let mut ga = Gradients::zeros_like(&model.actor);
        let mut gc = Gradients::zeros_like(&model.critic);
        let mut entropy_sum = 0.0;
        for (step, adv, target) in &batch {
            let (v, cache) = model.critic.forward(&step.state)?;
            model
                .critic
                .backward_into(&cache, &[-(target - v[0])], &mut gc, 1.0 / n)?;
            let (out, caches) = model.policy_with_caches(
                &step.state,
                &step.mask,
                &step.cost_factors,
                hyper.cost_weight,
            )?;
            entropy_sum += entropy(&out.probs);
            let ratio = (out.probs[step.action].ln() - step.log_prob).exp();
            let clipped = (*adv > 0.0 && ratio > hi) || (*adv < 0.0 && ratio < lo);
            let weight = if clipped { 0.0 } else { adv * ratio };
            let mut d = logit_gradient(&out, step.action, weight, &step.cost_factors, hyper);
            for x in &mut d {
                *x /= n;
            }
            model.backprop_logits(&caches, &d, &mut ga)?;
            if pass == 0 {
                diag.cost_fallbacks += usize::from(out.cost_fallback);
            }
        }
        check(&ga)?;
        check(&gc)?;
        if pass == 0 {
            diag.mean_entropy = entropy_sum / n;
            diag.actor_grad_norm = ga.norm();
            diag.critic_grad_norm = gc.norm();
        }
        adam_step(&mut model.critic, &gc, &mut model.critic_adam)?;
        adam_step(&mut model.actor, &ga, &mut model.actor_adam)?;
    }
    Ok(())
}
