use crate::workload::Job;

/// Wait, requested time, processors, cost rate.
pub const JOB_FEATURES: usize = 4;
/// Free-processor fraction, queue occupancy.
pub const CLUSTER_FEATURES: usize = 2;

pub fn state_len(slots: usize) -> usize {
    slots * JOB_FEATURES + CLUSTER_FEATURES
}

fn unit(x: f64) -> f64 {
    if x.is_finite() {
        x.clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Fixed-length observation. The first `slots` jobs of `queue` (already in
/// submit order) fill the job slots, the rest are invisible; empty slots are
/// zero. Every entry lies in [0, 1]:
///
/// * wait and requested time are divided by `horizon`,
/// * processors by `total_procs`,
/// * cost rate by `cost_scale`,
/// * then free processors / total and min(queue length / slots, 1).
#[allow(clippy::too_many_arguments)]
pub fn encode_state(
    queue: &[&Job],
    now: f64,
    free_procs: u32,
    total_procs: u32,
    slots: usize,
    horizon: f64,
    cost_scale: f64,
) -> Vec<f64> {
    let mut state = vec![0.0; state_len(slots)];
    let p = f64::from(total_procs.max(1));
    for (slot, job) in queue.iter().take(slots).enumerate() {
        let base = slot * JOB_FEATURES;
        state[base] = unit((now - job.submit_time).max(0.0) / horizon);
        state[base + 1] = unit(job.requested_time / horizon);
        state[base + 2] = unit(f64::from(job.requested_procs) / p);
        state[base + 3] = unit(job.cost_rate / cost_scale);
    }
    let c = slots * JOB_FEATURES;
    state[c] = unit(f64::from(free_procs) / p);
    state[c + 1] = unit(queue.len() as f64 / slots as f64);
    state
}
