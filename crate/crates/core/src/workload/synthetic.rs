use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{CostDistribution, Job, WorkloadError, WorkloadTrace};

/// Parameters of the seeded synthetic workload generator.
///
/// Inter-arrival times are exponential, runtimes log-uniform, and processor
/// counts are powers of two with weight `1 / (k + 1)` for `2^k`. Times are
/// rounded to whole seconds so generated traces survive an SWF round trip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub name: String,
    pub job_count: usize,
    /// Jobs per second.
    pub arrival_rate: f64,
    pub runtime_min: f64,
    pub runtime_max: f64,
    /// Largest job is `2^max_cores_log2` processors.
    pub max_cores_log2: u32,
    pub total_procs: u32,
    pub cost_mean: f64,
    pub cost_std: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            name: "synthetic".to_string(),
            job_count: 512,
            arrival_rate: 0.0045,
            runtime_min: 60.0,
            runtime_max: 36_000.0,
            max_cores_log2: 6,
            total_procs: 256,
            cost_mean: 1.0,
            cost_std: 0.25,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// A stand-in with the shape of the SDSC IBM SP2 log: 128 processors,
    /// heavy-tailed runtimes up to 18 hours, and offered load near 0.9.
    pub fn sdsc_sp2_like(job_count: usize, seed: u64) -> Self {
        SyntheticConfig {
            name: "sdsc-sp2-like".to_string(),
            job_count,
            arrival_rate: 0.00095,
            runtime_min: 30.0,
            runtime_max: 64_800.0,
            max_cores_log2: 7,
            total_procs: 128,
            cost_mean: 1.0,
            cost_std: 0.25,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::InvalidConfig(m.to_string()));
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return bad("arrival_rate must be positive");
        }
        if !(self.runtime_min.is_finite() && self.runtime_min >= 1.0) {
            return bad("runtime_min must be at least 1 second");
        }
        if !(self.runtime_max.is_finite() && self.runtime_max >= self.runtime_min) {
            return bad("runtime_max must be at least runtime_min");
        }
        if self.total_procs == 0 {
            return bad("total_procs must be positive");
        }
        if self.max_cores_log2 >= 32 || (1u64 << self.max_cores_log2) > u64::from(self.total_procs)
        {
            return bad("2^max_cores_log2 must not exceed total_procs");
        }
        self.costs().validate()
    }

    fn costs(&self) -> CostDistribution {
        CostDistribution {
            mean: self.cost_mean,
            std_dev: self.cost_std,
        }
    }
}

/// Generates a trace that is a pure function of `cfg`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<WorkloadTrace, WorkloadError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inter_arrival = Exp::new(cfg.arrival_rate)
        .map_err(|e| WorkloadError::InvalidConfig(e.to_string()))?;
    let weights: Vec<f64> = (0..=cfg.max_cores_log2)
        .map(|k| 1.0 / f64::from(k + 1))
        .collect();
    let cores = WeightedIndex::new(&weights).expect("positive weights");
    let (ln_min, ln_max) = (cfg.runtime_min.ln(), cfg.runtime_max.ln());
    let costs = cfg.costs();

    let mut clock = 0.0f64;
    let mut jobs = Vec::with_capacity(cfg.job_count);
    for i in 0..cfg.job_count {
        if i > 0 {
            clock += inter_arrival.sample(&mut rng);
        }
        let submit = clock.floor();
        let run_time = rng
            .random_range(ln_min..=ln_max)
            .exp()
            .round()
            .max(1.0);
        let overestimate: f64 = rng.random_range(1.0..=5.0);
        let requested = (run_time * overestimate).ceil();
        let procs = 1u32 << cores.sample(&mut rng);
        let cost_rate = costs.sample(&mut rng);
        let job = Job::new(i as u64 + 1, submit, run_time, requested, procs)?
            .with_cost_rate(cost_rate);
        jobs.push(job);
    }
    WorkloadTrace::new(cfg.name.clone(), cfg.total_procs, jobs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_empty_trace() {
        let cfg = SyntheticConfig {
            job_count: 0,
            ..Default::default()
        };
        assert!(generate_synthetic(&cfg).unwrap().jobs.is_empty());
    }

    #[test]
    fn deterministic_and_sorted() {
        let cfg = SyntheticConfig {
            job_count: 512,
            seed: 7,
            ..Default::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.jobs.len(), 512);
        assert!(a.jobs.windows(2).all(|w| w[0].submit_time <= w[1].submit_time));
        for j in &a.jobs {
            let ratio = j.requested_time / j.run_time;
            assert!((1.0..=5.0 + 1.0 / j.run_time).contains(&ratio), "{ratio}");
            assert!(j.requested_procs.is_power_of_two());
            assert!(j.requested_procs <= 64);
        }
    }

    #[test]
    fn rejects_bad_bounds() {
        for cfg in [
            SyntheticConfig {
                arrival_rate: 0.0,
                ..Default::default()
            },
            SyntheticConfig {
                runtime_min: 100.0,
                runtime_max: 10.0,
                ..Default::default()
            },
            SyntheticConfig {
                max_cores_log2: 9,
                ..Default::default()
            },
            SyntheticConfig {
                cost_std: -0.5,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                generate_synthetic(&cfg),
                Err(WorkloadError::InvalidConfig(_))
            ));
        }
    }
}
