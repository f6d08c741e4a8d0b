use std::collections::HashMap;

use mars_core::agent::{encode_state, episode_reward, select_action, state_len};
use mars_core::dag::split_workload;
use mars_core::decision::{decide, route, Thresholds};
use mars_core::heuristics::score;
use mars_core::metrics::{aggregate, bounded_slowdown, pp_slowdown, slowdown};
use mars_core::neural::{masked_softmax, softmax};
use mars_core::simulator::HeuristicPolicy;
use mars_core::workload::{parse_swf, write_swf};
use mars_core::{run_episode, Job, JobId, PolicyKind, SimOptions, WorkloadTrace};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_trace(max_jobs: usize) -> impl Strategy<Value = WorkloadTrace> {
    (3u32..=6, 1..=max_jobs).prop_flat_map(|(log_p, n)| {
        let procs = 1u32 << log_p;
        prop::collection::vec((0u32..200, 1u32..3000, 1.0f64..2.5, 1..=procs), n).prop_map(
            move |rows| {
                let mut t = 0.0;
                let jobs = rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, (gap, run, over, p))| {
                        t += f64::from(gap);
                        let run = f64::from(run);
                        Job::new(i as JobId + 1, t, run, (run * over).round(), p).unwrap()
                    })
                    .collect();
                WorkloadTrace::new("prop", procs, jobs).unwrap()
            },
        )
    })
}

fn arb_policy() -> impl Strategy<Value = PolicyKind> {
    prop::sample::select(PolicyKind::HEURISTICS.to_vec())
}

proptest! {
    #[test]
    fn metrics_are_at_least_one_and_ordered(
        w in 0.0f64..1e6,
        r in 1e-3f64..1e5,
        tau in 1e-3f64..100.0,
        p in 1u32..1024,
    ) {
        let sd = slowdown(w, r).unwrap();
        let b = bounded_slowdown(w, r, tau).unwrap();
        let pp = pp_slowdown(w, r, tau, p).unwrap();
        prop_assert!(sd >= 1.0 && b >= 1.0 && pp >= 1.0);
        prop_assert!(b <= sd);
        prop_assert!(pp <= b);
    }

    #[test]
    fn aggregate_ignores_job_order(trace in arb_trace(60), seed in any::<u64>()) {
        let result = run_episode(&trace, &mut HeuristicPolicy(PolicyKind::Fcfs), &SimOptions::default()).unwrap();
        let mut shuffled = result.finished.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = aggregate(&result.finished, 10.0, "x", trace.total_procs).unwrap();
        let b = aggregate(&shuffled, 10.0, "x", trace.total_procs).unwrap();
        prop_assert_eq!(&a, &b);
        let reward = episode_reward(&shuffled, 10.0).unwrap();
        prop_assert!((a.bounded_slowdown.mean + reward).abs() <= 1e-12 * a.bounded_slowdown.mean);
        let longest = trace.jobs.iter().map(|j| j.run_time).fold(0.0, f64::max);
        prop_assert!(a.makespan >= longest);
    }

    #[test]
    fn every_job_runs_once_after_submission(
        trace in arb_trace(80),
        kind in arb_policy(),
        backfill in any::<bool>(),
    ) {
        let opts = SimOptions { backfill, check_invariants: true, ..SimOptions::default() };
        let result = run_episode(&trace, &mut HeuristicPolicy(kind), &opts).unwrap();
        prop_assert_eq!(result.finished.len(), trace.len());
        let submits: HashMap<JobId, f64> = trace.jobs.iter().map(|j| (j.id, j.submit_time)).collect();
        for j in &result.finished {
            prop_assert!(j.wait_time.unwrap() >= 0.0);
            prop_assert_eq!(j.submit_time, submits[&j.id]);
        }
        // Replaying gives the same schedule.
        let again = run_episode(&trace, &mut HeuristicPolicy(kind), &opts).unwrap();
        prop_assert_eq!(result.finished, again.finished);
    }

    #[test]
    fn processors_are_never_oversubscribed(trace in arb_trace(80), kind in arb_policy()) {
        let result = run_episode(&trace, &mut HeuristicPolicy(kind), &SimOptions::default()).unwrap();
        let mut edges: Vec<(f64, i64)> = Vec::new();
        for j in &result.finished {
            let start = j.submit_time + j.wait_time.unwrap();
            edges.push((start, i64::from(j.requested_procs)));
            edges.push((start + j.run_time, -i64::from(j.requested_procs)));
        }
        // Releases before acquisitions at equal times.
        edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut used = 0;
        for (_, d) in edges {
            used += d;
            prop_assert!(used <= i64::from(trace.total_procs));
        }
    }

    #[test]
    fn softmax_is_a_distribution(
        logits in prop::collection::vec(-800.0f64..800.0, 1..40),
        mask_bits in any::<u64>(),
    ) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        let mut mask: Vec<bool> = (0..logits.len()).map(|i| mask_bits >> (i % 64) & 1 == 1).collect();
        mask[0] = true;
        let q = masked_softmax(&logits, &mask);
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        for (x, m) in q.iter().zip(&mask) {
            prop_assert!(*m || *x == 0.0);
        }
    }

    #[test]
    fn sampled_actions_respect_the_mask(
        logits in prop::collection::vec(-20.0f64..20.0, 2..20),
        mask_bits in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let mut mask: Vec<bool> = (0..logits.len()).map(|i| mask_bits >> i & 1 == 1).collect();
        let last = mask.len() - 1;
        mask[last] = true;
        let probs = masked_softmax(&logits, &mask);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            prop_assert!(mask[select_action(&probs, Some(&mut rng))]);
        }
        prop_assert!(mask[select_action::<ChaCha8Rng>(&probs, None)]);
    }

    #[test]
    fn split_partitions_in_order(n in 0usize..5000, max in 1usize..700) {
        let items: Vec<usize> = (0..n).collect();
        let chunks = split_workload(&items, max);
        prop_assert!(chunks.iter().all(|c| c.len() <= max));
        prop_assert_eq!(chunks.concat(), items);
    }

    #[test]
    fn plans_partition_their_input(
        eta in 0usize..1500,
        next in prop::option::of(0usize..1500),
        compatible in any::<bool>(),
        min in 1usize..200,
        gap in 1usize..400,
        span in 1usize..900,
    ) {
        let t = Thresholds::new(min, min + gap, min + gap + span).unwrap();
        let jobs = |n: usize, first: JobId| -> Vec<Job> {
            (0..n as JobId).map(|i| Job::new(first + i, i as f64, 5.0, 5.0, 1).unwrap()).collect()
        };
        let current = jobs(eta, 1);
        let following = next.map(|n| jobs(n, 100_000));
        let plan = decide(&current, following.as_deref(), compatible, &t).unwrap();
        let mut want: Vec<JobId> = current.iter().map(|j| j.id).collect();
        if plan.consumed_next {
            want.extend(following.unwrap().iter().map(|j| j.id));
        }
        let got: Vec<JobId> = plan.chunks.iter().flat_map(|c| c.jobs.iter().map(|j| j.id)).collect();
        prop_assert_eq!(got, want);
        prop_assert!(plan.chunks.iter().all(|c| c.jobs.len() <= t.max));
        if eta > 0 {
            let branch = route(eta, next, compatible, &t);
            prop_assert!(plan.chunks.iter().all(|c| c.branch == branch));
        }
    }

    #[test]
    fn aging_never_lowers_priority(
        submit in 0.0f64..1e5,
        req in 1.0f64..1e5,
        procs in 1u32..512,
        now in 0.0f64..1e5,
        extra in 0.0f64..1e5,
    ) {
        let job = Job::new(1, submit, req, req, procs).unwrap();
        let now = submit + now;
        for kind in [PolicyKind::Wfp3, PolicyKind::Unicef] {
            prop_assert!(score(&job, now + extra, kind).unwrap() <= score(&job, now, kind).unwrap());
        }
    }

    #[test]
    fn swf_round_trip_keeps_job_fields(trace in arb_trace(50)) {
        let parsed = parse_swf(&write_swf(&trace)).unwrap();
        prop_assert!(parsed.errors.is_empty());
        prop_assert_eq!(parsed.trace.total_procs, trace.total_procs);
        prop_assert_eq!(parsed.trace.jobs.len(), trace.jobs.len());
        for (a, b) in parsed.trace.jobs.iter().zip(&trace.jobs) {
            prop_assert_eq!(
                (a.id, a.submit_time, a.run_time, a.requested_time, a.requested_procs),
                (b.id, b.submit_time, b.run_time, b.requested_time, b.requested_procs)
            );
        }
    }

    #[test]
    fn state_entries_are_normalised(trace in arb_trace(40), slots in 1usize..32, now in 0.0f64..1e6) {
        let queue: Vec<&Job> = trace.jobs.iter().collect();
        let s = encode_state(&queue, now, trace.total_procs / 2, trace.total_procs, slots, 43_200.0, 2.0);
        prop_assert_eq!(s.len(), state_len(slots));
        prop_assert!(s.iter().all(|x| (0.0..=1.0).contains(x)));
    }
}
