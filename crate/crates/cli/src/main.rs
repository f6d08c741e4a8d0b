//! `mars`: simulate, train, evaluate and compare batch scheduling policies.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use mars_core::agent::UpdateMode;

use config::{Overrides, RunConfig};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "mars", version, about = "HPC batch scheduling simulator with heuristic and learned policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one policy over a workload and write per-job and summary reports.
    Simulate(Common),
    /// Train the actor-critic agent and write the model and training curve.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue training from a saved model.
        #[arg(long, value_name = "FILE")]
        resume: Option<PathBuf>,
    },
    /// Score a trained model greedily, optionally against a random baseline.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Random-policy episodes to average for the baseline.
        #[arg(long, default_value_t = 0, value_name = "N")]
        baseline: usize,
    },
    /// Run several policies over the same workload and tabulate the results.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Policies to compare, in addition to --policies.
        #[arg(value_name = "POLICY")]
        names: Vec<String>,
    },
    /// Generate a synthetic SWF trace.
    Gen(Common),
    /// Summarize a trace, workflow or model file, or print the resolved
    /// configuration when no file is given.
    Inspect {
        #[command(flatten)]
        common: Common,
        path: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Batch,
    Online,
    Ppo,
}

impl From<ModeArg> for UpdateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Batch => UpdateMode::Batch,
            ModeArg::Online => UpdateMode::Online,
            ModeArg::Ppo => UpdateMode::Ppo,
        }
    }
}

fn on_off(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected on or off, got {s:?}")),
    }
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file. Flags override its values.
    #[arg(long, env = "MARS_CONFIG", value_name = "FILE")]
    config: Option<PathBuf>,
    /// SWF trace, or workflow description (`.wf`).
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// Generate N synthetic jobs instead of reading a trace.
    #[arg(long, value_name = "N")]
    synthetic: Option<usize>,
    #[arg(long)]
    policy: Option<String>,
    /// Comma-separated policy list for compare.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bounded-slowdown threshold in seconds.
    #[arg(long)]
    tau: Option<f64>,
    /// Override the machine size.
    #[arg(long)]
    procs: Option<u32>,
    #[arg(long, value_parser = on_off, value_name = "on|off")]
    backfill: Option<bool>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Index of the first job to use.
    #[arg(long)]
    start: Option<usize>,
    /// Number of jobs to use (for gen: to generate).
    #[arg(long)]
    count: Option<usize>,
    /// Trained model for rl and mars.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Cut the workload into consecutive pieces of N jobs before planning.
    #[arg(long, value_name = "N")]
    workload_size: Option<usize>,
    /// Print the routing plan.
    #[arg(long)]
    explain: bool,
    /// Train a model on the head of the workload when none is given.
    #[arg(long)]
    train_on_demand: bool,
    /// Keep training on chunks the plan routes to heuristics.
    #[arg(long)]
    train_from_heuristic: bool,
    /// Record real elapsed times instead of zeros.
    #[arg(long)]
    wall_clock: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        cfg.apply(&Overrides {
            trace: self.trace.clone(),
            synthetic: self.synthetic,
            policy: self.policy.clone(),
            policies: self.policies.clone(),
            epochs: self.epochs,
            seed: self.seed,
            tau: self.tau,
            procs: self.procs,
            backfill: self.backfill,
            out: self.out.clone(),
            start: self.start,
            count: self.count,
            model: self.model.clone(),
            mode: self.mode.map(Into::into),
            workload_size: self.workload_size,
            explain: self.explain,
            train_on_demand: self.train_on_demand,
            train_from_heuristic: self.train_from_heuristic,
            wall_clock: self.wall_clock,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(c) => commands::simulate(&c.resolve()?),
        Command::Train { common, resume } => commands::train_cmd(&common.resolve()?, resume.as_deref()),
        Command::Evaluate { common, baseline } => commands::evaluate(&common.resolve()?, baseline),
        Command::Compare { common, names } => {
            let mut cfg = common.resolve()?;
            cfg.run.policies.extend(names);
            cfg.validate()?;
            commands::compare(&cfg).map(|_| ())
        }
        Command::Gen(c) => commands::gen(&c.resolve()?).map(|_| ()),
        Command::Inspect { common, path } => commands::inspect(&common.resolve()?, path.as_deref()),
    }
}

fn subcommand_name(command: &Command) -> &'static str {
    match command {
        Command::Simulate(_) => "simulate",
        Command::Train { .. } => "train",
        Command::Evaluate { .. } => "evaluate",
        Command::Compare { .. } => "compare",
        Command::Gen(_) => "gen",
        Command::Inspect { .. } => "inspect",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = subcommand_name(&cli.command);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                let mut cmd = Cli::command();
                cmd.build();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    eprintln!("\n{}", sub.render_usage());
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
