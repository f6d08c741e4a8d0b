use std::fmt::Write as _;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mars_core::agent::{
    evaluate_greedy, random_baseline, train, ActorCritic, Environment, ModelVersions,
    TrainOutcome,
};
use mars_core::dag::build_dag;
use mars_core::decision::{chunk_trace, plan_workloads, run_plan, train_on_demand, Plan};
use mars_core::neural::{from_model_json, to_model_json};
use mars_core::simulator::{jobs_csv, HeuristicPolicy};
use mars_core::workload::{
    assign_costs, generate_synthetic, parse_swf, parse_workflow, slice_trace, write_swf,
    CostDistribution,
};
use mars_core::{
    metrics, run_episode, Job, MetricsReport, PolicyKind, SyntheticConfig, WorkloadTrace,
};

use crate::config::{PolicyChoice, RunConfig};
use crate::error::CliError;

pub const COMPARE_SCHEMA: &str = "#schema=mars-compare/1";
pub const COMPARE_HEADER: &str =
    "policy,jobs,mean_bounded_slowdown,median_bounded_slowdown,p95_bounded_slowdown,makespan,wall_seconds";

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn read_input(path: &Path, what: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => CliError::Usage(format!("{what} not found: {}", path.display())),
        _ => CliError::io(path, e),
    })
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).unwrap_or_default();
    s.push('\n');
    s
}

fn is_workflow(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "wf")
}

fn read_trace_file(path: &Path, cfg: &RunConfig) -> Result<WorkloadTrace, CliError> {
    let text = read_input(path, "trace file")?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    if is_workflow(path) {
        let desc = parse_workflow(&text)?;
        let widest = desc.tasks.iter().map(|t| t.cores).max().unwrap_or(1);
        let dag = build_dag(&desc).map_err(|e| CliError::Usage(e.to_string()))?;
        return dag
            .to_trace(&name, cfg.run.procs.unwrap_or(widest))
            .map_err(|e| CliError::Usage(e.to_string()));
    }
    let parsed = parse_swf(&text)?;
    if !parsed.errors.is_empty() || parsed.dropped > 0 {
        eprintln!(
            "warning: {}: {} malformed lines skipped, {} jobs dropped",
            path.display(),
            parsed.errors.len(),
            parsed.dropped
        );
    }
    let mut trace = parsed.trace;
    trace.name = name;
    // SWF carries no cost information.
    assign_costs(&mut trace, CostDistribution::default(), cfg.run.seed)?;
    Ok(trace)
}

/// The whole configured source, before slicing.
pub fn load_source(cfg: &RunConfig) -> Result<WorkloadTrace, CliError> {
    if let Some(path) = &cfg.run.trace {
        return read_trace_file(path, cfg);
    }
    if let Some(syn) = &cfg.synthetic {
        return Ok(generate_synthetic(syn)?);
    }
    Err(CliError::Usage(
        "no workload given; pass --trace FILE or --synthetic N".into(),
    ))
}

/// The `[start, start + count)` window of the source, re-based to time 0.
pub fn window(cfg: &RunConfig, full: &WorkloadTrace) -> Result<WorkloadTrace, CliError> {
    let start = cfg.run.start;
    let count = cfg
        .run
        .count
        .unwrap_or_else(|| full.len().saturating_sub(start));
    if start == 0 && count == full.len() {
        let mut t = full.clone();
        t.rebase();
        return Ok(t);
    }
    Ok(slice_trace(full, start, count, cfg.run.seed, false)?)
}

fn load_workload(cfg: &RunConfig) -> Result<WorkloadTrace, CliError> {
    let full = load_source(cfg)?;
    let trace = window(cfg, &full)?;
    if trace.is_empty() {
        return Err(CliError::Usage("the selected workload has no jobs".into()));
    }
    Ok(trace)
}

pub fn load_model(path: &Path, cfg: &RunConfig) -> Result<ActorCritic, CliError> {
    let text = read_input(path, "model file")?;
    let mut model: ActorCritic = from_model_json(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    model
        .adopt(&cfg.agent)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(model)
}

/// Loads `--model`, or trains one on the head of `trace` when
/// `--train-on-demand` is set.
fn obtain_model(cfg: &RunConfig, trace: &WorkloadTrace, who: &str) -> Result<ActorCritic, CliError> {
    if let Some(path) = &cfg.run.model {
        return load_model(path, cfg);
    }
    if !cfg.run.train_on_demand {
        return Err(CliError::Usage(format!(
            "{who} needs a trained model; pass --model FILE or --train-on-demand"
        )));
    }
    let head = trace.len().min(cfg.thresholds.median);
    let training = slice_trace(trace, 0, head, cfg.run.seed, false)?;
    train_on_demand(&training, &cfg.agent, &cfg.sim_options()).map_err(|e| match e {
        mars_core::decision::DecisionError::Agent(a) if a.is_divergence() => {
            CliError::Diverged(a.to_string())
        }
        other => other.into(),
    })
}

fn workloads(cfg: &RunConfig, trace: &WorkloadTrace) -> Vec<Vec<Job>> {
    match cfg.run.workload_size {
        Some(n) => trace.jobs.chunks(n).map(<[Job]>::to_vec).collect(),
        None => vec![trace.jobs.clone()],
    }
}

pub struct PolicyRun {
    pub finished: Vec<Job>,
    pub report: MetricsReport,
    pub plan: Option<Plan>,
}

/// Lazily loaded or trained model shared by every policy of one command.
struct ModelSlot(Option<ActorCritic>);

impl ModelSlot {
    fn get(&mut self, cfg: &RunConfig, trace: &WorkloadTrace, who: &str) -> Result<&ActorCritic, CliError> {
        if self.0.is_none() {
            self.0 = Some(obtain_model(cfg, trace, who)?);
        }
        Ok(self.0.as_ref().expect("just filled"))
    }
}

fn run_policy(
    cfg: &RunConfig,
    choice: PolicyChoice,
    trace: &WorkloadTrace,
    models: &mut ModelSlot,
) -> Result<PolicyRun, CliError> {
    let opts = cfg.sim_options();
    match choice {
        PolicyChoice::Kind(PolicyKind::Rl) => {
            let model = models.get(cfg, trace, "policy rl")?;
            let result = evaluate_greedy(model, &cfg.agent, trace, &opts)?;
            Ok(PolicyRun {
                finished: result.finished,
                report: result.report,
                plan: None,
            })
        }
        PolicyChoice::Kind(kind) => {
            let result = run_episode(trace, &mut HeuristicPolicy(kind), &opts)?;
            Ok(PolicyRun {
                finished: result.finished,
                report: result.report,
                plan: None,
            })
        }
        PolicyChoice::Mars => {
            let plan = plan_workloads(&workloads(cfg, trace), &cfg.thresholds)?;
            let model = if plan.needs_model() {
                Some(models.get(cfg, trace, "the mars plan")?)
            } else {
                None
            };
            let report = run_plan(
                &plan,
                trace.total_procs,
                &opts,
                model.map(|m| (m, &cfg.agent)),
            )?;
            Ok(PolicyRun {
                finished: report.finished,
                report: report.aggregate,
                plan: Some(plan),
            })
        }
    }
}

fn report_csv(reports: &[&MetricsReport]) -> String {
    let mut s = format!("{}\n{}\n", metrics::REPORT_SCHEMA, metrics::REPORT_CSV_HEADER);
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

fn write_run_outputs(cfg: &RunConfig, run: &PolicyRun) -> Result<(), CliError> {
    let out = &cfg.run.out;
    write_out(out, "jobs.csv", &jobs_csv(&run.finished, &run.report.policy))?;
    write_out(out, "report.csv", &report_csv(&[&run.report]))?;
    write_out(out, "report.json", &pretty(&run.report.summary_json()))?;
    Ok(())
}

fn write_plan(cfg: &RunConfig, plan: &Plan) -> Result<(), CliError> {
    let explained = pretty(&plan.explain());
    write_out(&cfg.run.out, "plan.json", &explained)?;
    if cfg.run.explain {
        print!("{explained}");
    }
    Ok(())
}

/// Moves `model.json` to `model.prev.json` and that to `model.older.json`.
fn rotate_models(dir: &Path) -> Result<(), CliError> {
    let current = dir.join("model.json");
    let prev = dir.join("model.prev.json");
    let older = dir.join("model.older.json");
    if prev.exists() {
        fs::rename(&prev, &older).map_err(|e| CliError::io(&prev, e))?;
    }
    if current.exists() {
        fs::rename(&current, &prev).map_err(|e| CliError::io(&current, e))?;
    }
    Ok(())
}

fn save_model(dir: &Path, model: &ActorCritic) -> Result<PathBuf, CliError> {
    let text = to_model_json(model)?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    rotate_models(dir)?;
    write_out(dir, "model.json", &text)
}

fn print_summary(report: &MetricsReport) {
    println!(
        "{}: {} jobs, mean bounded slowdown {:.4}, makespan {}",
        report.policy, report.job_count, report.bounded_slowdown.mean, report.makespan
    );
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let choice = PolicyChoice::parse(&cfg.run.policy)?;
    let trace = load_workload(cfg)?;
    let mut models = ModelSlot(None);
    let run = run_policy(cfg, choice, &trace, &mut models)?;
    write_run_outputs(cfg, &run)?;
    if let Some(plan) = &run.plan {
        write_plan(cfg, plan)?;
        if cfg.run.train_from_heuristic {
            background_training(cfg, plan, &trace, models.0.take())?;
        }
    }
    print_summary(&run.report);
    Ok(())
}

/// Continues training on the chunks the plan sent to heuristics and saves the
/// result next to the other outputs.
fn background_training(
    cfg: &RunConfig,
    plan: &Plan,
    trace: &WorkloadTrace,
    model: Option<ActorCritic>,
) -> Result<(), CliError> {
    let traces = plan
        .chunks
        .iter()
        .enumerate()
        .filter(|(_, c)| c.policy != PolicyKind::Rl && !c.jobs.is_empty())
        .map(|(i, c)| chunk_trace(c, &format!("chunk-{i}"), trace.total_procs))
        .collect::<Result<Vec<_>, _>>()?;
    if traces.is_empty() {
        return Ok(());
    }
    let model = match model {
        Some(m) => m,
        None => match &cfg.run.model {
            Some(path) => load_model(path, cfg)?,
            None => ActorCritic::new(&cfg.agent)?,
        },
    };
    let env = Environment {
        train: traces,
        validation: None,
        options: cfg.sim_options(),
    };
    let outcome = train(&env, &cfg.agent, model, &mut ModelVersions::new(), |_| {})?;
    finish_training(cfg, outcome).map(|_| ())
}

fn finish_training(cfg: &RunConfig, outcome: TrainOutcome) -> Result<ActorCritic, CliError> {
    let out = &cfg.run.out;
    write_out(out, "curve.csv", &outcome.curve.to_csv(cfg.run.wall_clock))?;
    save_model(out, &outcome.model)?;
    match outcome.diverged {
        Some(e) => Err(CliError::Diverged(format!(
            "{e}; last good model kept at {}",
            out.join("model.json").display()
        ))),
        None => Ok(outcome.model),
    }
}

/// Held-out jobs for validation: the jobs after the training window, or an
/// independently seeded synthetic trace.
fn validation_trace(
    cfg: &RunConfig,
    full: &WorkloadTrace,
    training: &WorkloadTrace,
) -> Result<Option<WorkloadTrace>, CliError> {
    let after = cfg.run.start + training.len();
    if after < full.len() {
        let n = training.len().min(full.len() - after);
        return Ok(Some(slice_trace(full, after, n, cfg.run.seed, false)?));
    }
    if cfg.run.trace.is_none() {
        if let Some(syn) = &cfg.synthetic {
            let held_out = SyntheticConfig {
                seed: syn.seed ^ 0x005E_ED0F_0A11_DA7E,
                job_count: training.len(),
                ..syn.clone()
            };
            return Ok(Some(generate_synthetic(&held_out)?));
        }
    }
    Ok(None)
}

pub fn train_cmd(cfg: &RunConfig, resume: Option<&Path>) -> Result<(), CliError> {
    let full = load_source(cfg)?;
    let training = window(cfg, &full)?;
    if training.is_empty() {
        return Err(CliError::Usage("the selected workload has no jobs".into()));
    }
    let model = match resume {
        Some(path) => load_model(path, cfg)?,
        None => ActorCritic::new(&cfg.agent)?,
    };
    let start_epoch = model.epochs_trained;
    let env = Environment {
        validation: validation_trace(cfg, &full, &training)?,
        train: vec![training],
        options: cfg.sim_options(),
    };
    let every = cfg.agent.validate_every.max(1);
    let outcome = train(&env, &cfg.agent, model, &mut ModelVersions::new(), |row| {
        if row.epoch % every == 0 {
            eprintln!(
                "epoch {}: reward {:.4}{}",
                row.epoch,
                row.mean_reward,
                if row.rolled_back { " (rolled back)" } else { "" }
            );
        }
    })?;
    let last = outcome.curve.rows.last().map(|r| r.mean_reward);
    let model = finish_training(cfg, outcome)?;
    println!(
        "trained epochs {}..{}, last mean reward {}",
        start_epoch,
        model.epochs_trained,
        last.map(|r| format!("{r:.4}")).unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, baseline_episodes: usize) -> Result<(), CliError> {
    let trace = load_workload(cfg)?;
    let mut models = ModelSlot(None);
    let run = run_policy(cfg, PolicyChoice::Kind(PolicyKind::Rl), &trace, &mut models)?;
    write_run_outputs(cfg, &run)?;
    let greedy = -run.report.bounded_slowdown.mean;
    let mut summary = serde_json::json!({
        "schema": "mars-eval/1",
        "jobs": trace.len(),
        "greedy_reward": greedy,
    });
    if baseline_episodes > 0 {
        let random = random_baseline(
            &trace,
            cfg.agent.slots,
            &cfg.sim_options(),
            baseline_episodes,
            cfg.run.seed,
        )?;
        summary["random_baseline_reward"] = random.into();
        summary["baseline_episodes"] = baseline_episodes.into();
        summary["improvement"] = ((greedy - random) / random.abs()).into();
    }
    write_out(&cfg.run.out, "evaluation.json", &pretty(&summary))?;
    print_summary(&run.report);
    Ok(())
}

pub struct CompareRow {
    pub report: MetricsReport,
    pub wall_seconds: f64,
}

pub fn compare(cfg: &RunConfig) -> Result<Vec<CompareRow>, CliError> {
    let choices = cfg
        .run
        .policies
        .iter()
        .map(|p| PolicyChoice::parse(p))
        .collect::<Result<Vec<_>, _>>()?;
    if choices.len() < 2 {
        return Err(CliError::Usage(
            "compare needs at least two policies (--policies a,b)".into(),
        ));
    }
    if choices.iter().any(|c| c.needs_model())
        && cfg.run.model.is_none()
        && !cfg.run.train_on_demand
    {
        return Err(CliError::Usage(
            "policy rl needs a trained model; pass --model FILE or --train-on-demand".into(),
        ));
    }
    let trace = load_workload(cfg)?;
    let mut models = ModelSlot(None);
    let mut rows = Vec::with_capacity(choices.len());
    for choice in choices {
        let started = Instant::now();
        let run = run_policy(cfg, choice, &trace, &mut models)?;
        let wall = if cfg.run.wall_clock {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        if let Some(plan) = &run.plan {
            write_plan(cfg, plan)?;
        }
        let mut report = run.report;
        report.policy = choice.name().to_string();
        rows.push(CompareRow {
            report,
            wall_seconds: wall,
        });
    }
    write_out(&cfg.run.out, "compare.csv", &compare_csv(&rows))?;
    let table = compare_table(&rows);
    write_out(&cfg.run.out, "compare.txt", &table)?;
    print!("{table}");
    Ok(rows)
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s = format!("{COMPARE_SCHEMA}\n{COMPARE_HEADER}\n");
    for r in rows {
        let b = &r.report.bounded_slowdown;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.report.policy, r.report.job_count, b.mean, b.median, b.p95, r.report.makespan, r.wall_seconds
        );
    }
    s
}

pub fn compare_table(rows: &[CompareRow]) -> String {
    let header = ["policy", "jobs", "mean_bsld", "median_bsld", "p95_bsld", "makespan", "wall_s"];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
    for r in rows {
        let b = &r.report.bounded_slowdown;
        cells.push(vec![
            r.report.policy.clone(),
            r.report.job_count.to_string(),
            format!("{:.4}", b.mean),
            format!("{:.4}", b.median),
            format!("{:.4}", b.p95),
            format!("{:.0}", r.report.makespan),
            format!("{:.3}", r.wall_seconds),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut s = String::from("# mars-compare/1\n");
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| {
                if c == 0 {
                    format!("{v:<w$}", w = widths[c])
                } else {
                    format!("{v:>w$}", w = widths[c])
                }
            })
            .collect();
        s.push_str(line.join("  ").trim_end());
        s.push('\n');
    }
    s
}

pub fn gen(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let mut syn = cfg.synthetic.clone().unwrap_or_else(|| SyntheticConfig {
        seed: cfg.run.seed,
        ..SyntheticConfig::default()
    });
    if let Some(n) = cfg.run.count {
        syn.job_count = n;
    }
    let trace = generate_synthetic(&syn)?;
    let path = write_out(&cfg.run.out, "synthetic.swf", &write_swf(&trace))?;
    println!("wrote {} jobs to {}", trace.len(), path.display());
    Ok(path)
}

pub fn inspect(cfg: &RunConfig, path: Option<&Path>) -> Result<(), CliError> {
    let Some(path) = path else {
        print!("{}", cfg.to_toml());
        return Ok(());
    };
    let value = if path.extension().is_some_and(|e| e == "json") {
        let model = load_model(path, cfg)?;
        serde_json::json!({
            "schema": "mars-inspect/1",
            "kind": "model",
            "actor": model.kind,
            "slots": model.slots,
            "epochs_trained": model.epochs_trained,
            "actor_parameters": model.actor.parameter_count(),
            "critic_parameters": model.critic.parameter_count(),
        })
    } else if is_workflow(path) {
        let desc = parse_workflow(&read_input(path, "workflow file")?)?;
        let dag = build_dag(&desc).map_err(|e| CliError::Usage(e.to_string()))?;
        serde_json::json!({
            "schema": "mars-inspect/1",
            "kind": "workflow",
            "features": dag.features(),
            "parallel_groups": dag.combine_parallel_tasks().len(),
        })
    } else {
        let trace = read_trace_file(path, cfg)?;
        let runtimes: Vec<f64> = trace.jobs.iter().map(|j| j.run_time).collect();
        let span = match (trace.jobs.first(), trace.jobs.last()) {
            (Some(a), Some(b)) => b.submit_time - a.submit_time,
            _ => 0.0,
        };
        serde_json::json!({
            "schema": "mars-inspect/1",
            "kind": "trace",
            "name": trace.name,
            "jobs": trace.len(),
            "procs": trace.total_procs,
            "arrival_span": span,
            "mean_runtime": runtimes.iter().sum::<f64>() / runtimes.len().max(1) as f64,
            "max_job_procs": trace.jobs.iter().map(|j| j.requested_procs).max().unwrap_or(0),
        })
    };
    print!("{}", pretty(&value));
    Ok(())
}
