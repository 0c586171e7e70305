use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hybridopt::harness::{evaluate_design, run_experiment, ExperimentConfig, TaskSpec, OUTPUT_ROOT_ENV};
use hybridopt::tasks::symreg::benchmark_manifest;

/// Risk-seeking search over hybrid discrete-continuous designs.
#[derive(Parser)]
#[command(name = "hybridopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config and write its outputs.
    Run {
        /// Path to the experiment TOML.
        config: PathBuf,
        /// Output directory; replaces `[output].dir` from the config.
        #[arg(long, env = OUTPUT_ROOT_ENV)]
        output_root: Option<PathBuf>,
    },
    /// Score one design string.
    Eval {
        /// Design in the text format, e.g. `add,x1,const(2.5)`.
        design: String,
        /// Task name (`bitstring`, an environment such as `cartpole`, or a
        /// benchmark such as `Constant-5`) or a path to an experiment TOML
        /// whose `[task]` block is used.
        #[arg(long)]
        task: String,
        /// Seed for the evaluation (episode resets, dataset sampling).
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Shipped regression benchmarks.
    Benchmarks {
        #[command(subcommand)]
        action: BenchmarkAction,
    },
}

#[derive(Subcommand)]
enum BenchmarkAction {
    /// Print name, formula, variable count and domain of each benchmark.
    List,
}

fn resolve_task(arg: &str) -> Result<TaskSpec> {
    if arg.ends_with(".toml") {
        let cfg = ExperimentConfig::load(arg.as_ref()).with_context(|| format!("loading {arg}"))?;
        return Ok(cfg.task);
    }
    Ok(TaskSpec::from_name(arg)?)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        // Output piped into `head` and friends.
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    let mut out = io::stdout().lock();
    match Cli::parse().command {
        Command::Run { config, output_root } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let dir = output_root.unwrap_or_else(|| cfg.output.dir.clone());
            let summary = run_experiment(&cfg, &dir)?;
            for r in &summary.runs {
                let held = r.held_out.map(|h| format!(" held_out={h}")).unwrap_or_default();
                writeln!(
                    out,
                    "seed {}: best={}{} evals={} episodes={} design={}",
                    r.seed, r.best_reward, held, r.evaluations, r.episodes, r.best_design
                )?;
            }
            writeln!(out, "wrote {}", dir.display())?;
        }
        Command::Eval { design, task, seed } => {
            let spec = resolve_task(&task)?;
            let report = evaluate_design(&spec, &design, seed)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
        }
        Command::Benchmarks { action: BenchmarkAction::List } => {
            let list = benchmark_manifest();
            if list.is_empty() {
                bail!("no benchmarks shipped");
            }
            for b in list {
                writeln!(out, "{:<12} d={} U[{}, {}, {}]  {}", b.name, b.n_vars, b.domain.lo, b.domain.hi, b.domain.n, b.formula)?;
            }
        }
    }
    Ok(())
}
