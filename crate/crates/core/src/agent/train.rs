use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::model::ActorCritic;
use super::policy::{RandomPolicy, RlPolicy};
use super::update::{actor_critic_update, EpisodeTrajectory};
use super::{AgentError, Hyperparameters};
use crate::simulator::{run_episode, EpisodeResult, SimOptions};
use crate::workload::WorkloadTrace;

pub const TRAINING_CURVE_SCHEMA: &str = "#schema=mars-curve/1";
pub const TRAINING_CURVE_HEADER: &str =
    "epoch,mean_reward,entropy,mean_delta,validation_reward,rolled_back,wall_seconds";

/// Where rollout workers and validation get their workloads.
#[derive(Clone, Debug)]
pub struct Environment {
    /// Worker `w` in epoch `e` runs `train[(e * workers + w) % train.len()]`.
    pub train: Vec<WorkloadTrace>,
    pub validation: Option<WorkloadTrace>,
    pub options: SimOptions,
}

impl Environment {
    pub fn single(trace: WorkloadTrace, options: SimOptions) -> Self {
        Environment {
            train: vec![trace],
            validation: None,
            options,
        }
    }

    fn trace_for(&self, epoch: u64, worker: usize, workers: usize) -> &WorkloadTrace {
        let i = (epoch as usize)
            .wrapping_mul(workers)
            .wrapping_add(worker)
            % self.train.len();
        &self.train[i]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedVersion {
    pub model: ActorCritic,
    pub validation_reward: f64,
    pub epoch: u64,
}

/// The current model and the two before it, each with the validation reward it
/// scored when it was recorded.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelVersions {
    pub current: Option<SavedVersion>,
    pub previous: Option<SavedVersion>,
    pub older: Option<SavedVersion>,
    /// Consecutive validations that scored below their predecessor.
    pub decline_streak: usize,
    pub rollbacks: usize,
}

impl ModelVersions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        [&self.current, &self.previous, &self.older]
            .iter()
            .filter(|v| v.is_some())
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_none()
    }

    /// Rotates in a newly validated model. After `patience` consecutive
    /// validations each worse than the model before it, the versions shift
    /// back by one and the previous model is returned for the trainer to
    /// continue from.
    pub fn record_validation(
        &mut self,
        model: ActorCritic,
        reward: f64,
        epoch: u64,
        patience: usize,
    ) -> Option<ActorCritic> {
        let declined = self
            .current
            .as_ref()
            .is_some_and(|prev| reward < prev.validation_reward);
        self.older = self.previous.take();
        self.previous = self.current.take();
        self.current = Some(SavedVersion {
            model,
            validation_reward: reward,
            epoch,
        });
        self.decline_streak = if declined { self.decline_streak + 1 } else { 0 };
        if self.decline_streak >= patience.max(1) && self.previous.is_some() {
            self.current = self.previous.take();
            self.previous = self.older.take();
            self.decline_streak = 0;
            self.rollbacks += 1;
            return self.current.as_ref().map(|v| v.model.clone());
        }
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: u64,
    pub mean_reward: f64,
    pub entropy: f64,
    pub mean_delta: f64,
    pub validation_reward: Option<f64>,
    pub rolled_back: bool,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub rows: Vec<CurveRow>,
}

impl TrainingCurve {
    /// With `wall_clock` off the wall-time column is written as 0 so repeated
    /// runs produce identical files.
    pub fn to_csv(&self, wall_clock: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{TRAINING_CURVE_SCHEMA}");
        let _ = writeln!(out, "{TRAINING_CURVE_HEADER}");
        for r in &self.rows {
            let validation = r.validation_reward.map(|v| v.to_string()).unwrap_or_default();
            let wall = if wall_clock { r.wall_seconds } else { 0.0 };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.epoch,
                r.mean_reward,
                r.entropy,
                r.mean_delta,
                validation,
                u8::from(r.rolled_back),
                wall
            );
        }
        out
    }
}

/// SplitMix64 finalizer; decorrelates per-epoch and per-worker seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rollout(
    model: &ActorCritic,
    hyper: &Hyperparameters,
    trace: &WorkloadTrace,
    options: &SimOptions,
    seed: u64,
) -> Result<EpisodeTrajectory, AgentError> {
    let mut policy = RlPolicy::sampling(model.clone(), hyper, &trace.jobs, seed).recording();
    let result = run_episode(trace, &mut policy, options)?;
    result.trajectory.ok_or(AgentError::IncompleteTrajectory)
}

/// Greedy run of `model` over `trace`.
pub fn evaluate_greedy(
    model: &ActorCritic,
    hyper: &Hyperparameters,
    trace: &WorkloadTrace,
    options: &SimOptions,
) -> Result<EpisodeResult, AgentError> {
    let mut policy = RlPolicy::greedy(model.clone(), hyper, &trace.jobs);
    Ok(run_episode(trace, &mut policy, options)?)
}

/// Mean episode reward of the uniform random policy over `episodes` seeds.
pub fn random_baseline(
    trace: &WorkloadTrace,
    slots: usize,
    options: &SimOptions,
    episodes: usize,
    seed: u64,
) -> Result<f64, AgentError> {
    let mut total = 0.0;
    for e in 0..episodes {
        let mut policy = RandomPolicy::new(slots, mix(seed ^ mix(e as u64)));
        let result = run_episode(trace, &mut policy, options)?;
        total += -result.report.bounded_slowdown.mean;
    }
    Ok(total / episodes.max(1) as f64)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// The last model that received a finite update.
    pub model: ActorCritic,
    pub curve: TrainingCurve,
    /// Set when training stopped early on a non-finite update.
    pub diverged: Option<AgentError>,
}

/// Trains `model` for `hyper.epochs` epochs. Each epoch every worker collects
/// one sampled episode from its own simulator using a snapshot of the model;
/// their gradients are averaged into a single update. Every
/// `hyper.validate_every` epochs the greedy policy is scored on the
/// validation trace and recorded in `versions`, which may roll the model back.
pub fn train(
    env: &Environment,
    hyper: &Hyperparameters,
    mut model: ActorCritic,
    versions: &mut ModelVersions,
    mut progress: impl FnMut(&CurveRow),
) -> Result<TrainOutcome, AgentError> {
    hyper.validate()?;
    model.adopt(hyper)?;
    if env.train.is_empty() {
        return Err(AgentError::InvalidHyperparameters(
            "no training traces".into(),
        ));
    }
    let started = Instant::now();
    let mut curve = TrainingCurve::default();
    for _ in 0..hyper.epochs {
        let epoch = model.epochs_trained;
        let snapshot = &model;
        let worker_seed = |w: usize, attempt: u64| {
            mix(hyper.seed ^ mix(epoch ^ mix(w as u64 ^ (attempt << 32))))
        };
        let run_worker = |w: usize| -> Result<EpisodeTrajectory, AgentError> {
            let trace = env.trace_for(epoch, w, hyper.workers);
            rollout(snapshot, hyper, trace, &env.options, worker_seed(w, 0)).or_else(|first| {
                rollout(snapshot, hyper, trace, &env.options, worker_seed(w, 1)).map_err(|e| {
                    AgentError::WorkerFailed {
                        epoch,
                        worker: w,
                        reason: format!("{first}; retry: {e}"),
                    }
                })
            })
        };
        let trajectories: Vec<EpisodeTrajectory> = if hyper.workers == 1 {
            vec![run_worker(0)?]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..hyper.workers)
                    .map(|w| scope.spawn(move || run_worker(w)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("rollout worker panicked"))
                    .collect::<Result<Vec<_>, _>>()
            })?
        };
        let mean_reward = trajectories
            .iter()
            .map(|t| t.episode_reward.unwrap_or(f64::NAN))
            .sum::<f64>()
            / trajectories.len() as f64;
        let diag = match actor_critic_update(&mut model, &trajectories, hyper) {
            Ok(d) => d,
            Err(e) if e.is_divergence() => {
                return Ok(TrainOutcome {
                    model,
                    curve,
                    diverged: Some(e),
                })
            }
            Err(e) => return Err(e),
        };
        model.epochs_trained += 1;

        let mut row = CurveRow {
            epoch: model.epochs_trained,
            mean_reward,
            entropy: diag.mean_entropy,
            mean_delta: diag.mean_delta,
            validation_reward: None,
            rolled_back: false,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        if let Some(validation) = &env.validation {
            if hyper.validate_every > 0 && model.epochs_trained.is_multiple_of(hyper.validate_every) {
                let result = evaluate_greedy(&model, hyper, validation, &env.options)?;
                let reward = -result.report.bounded_slowdown.mean;
                row.validation_reward = Some(reward);
                if let Some(restored) = versions.record_validation(
                    model.clone(),
                    reward,
                    model.epochs_trained,
                    hyper.rollback_patience,
                ) {
                    let epochs = model.epochs_trained;
                    model = restored;
                    model.epochs_trained = epochs;
                    row.rolled_back = true;
                }
            }
        }
        progress(&row);
        curve.rows.push(row);
    }
    Ok(TrainOutcome {
        model,
        curve,
        diverged: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(seed: u64) -> ActorCritic {
        ActorCritic::new(&Hyperparameters {
            slots: 2,
            hidden: vec![4],
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn rollback_after_three_declines() {
        let mut v = ModelVersions::new();
        assert!(v.record_validation(model(1), -2.0, 50, 3).is_none());
        assert!(v.record_validation(model(2), -3.0, 100, 3).is_none());
        assert!(v.record_validation(model(3), -4.0, 150, 3).is_none());
        let restored = v.record_validation(model(4), -5.0, 200, 3).unwrap();
        assert!(restored.bit_identical(&model(3)));
        assert_eq!(v.rollbacks, 1);
        assert_eq!(v.current.as_ref().unwrap().epoch, 150);
    }

    #[test]
    fn improvement_resets_streak() {
        let mut v = ModelVersions::new();
        v.record_validation(model(1), -2.0, 1, 3);
        v.record_validation(model(2), -3.0, 2, 3);
        v.record_validation(model(3), -1.0, 3, 3);
        assert_eq!(v.decline_streak, 0);
        assert!(v.record_validation(model(4), -1.5, 4, 3).is_none());
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn curve_csv_hides_wall_time_by_default() {
        let curve = TrainingCurve {
            rows: vec![CurveRow {
                epoch: 1,
                mean_reward: -2.0,
                entropy: 0.5,
                mean_delta: 0.0,
                validation_reward: None,
                rolled_back: false,
                wall_seconds: 1.25,
            }],
        };
        let csv = curve.to_csv(false);
        assert!(csv.ends_with("1,-2,0.5,0,,0,0\n"));
        assert!(curve.to_csv(true).ends_with(",1.25\n"));
    }
}
