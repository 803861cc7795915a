//! `spo-lab`: train, benchmark, verify, evaluate, and export configs.
//!
//! Exit codes: 0 on success, 1 when a run or property check fails, 2 for
//! usage and configuration errors (clap reports its own parse errors as 2).

mod config;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use spo_core::bench::{run_ratio_bench, write_bench_csv, SyntheticBatch};
use spo_core::trainer::{Trainer, TrainerCheckpoint};
use spo_core::verify::{run_suite, SuiteReport, SUITE_NAMES};
use spo_core::ObjectiveKind;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "spo-lab",
    about = "Policy-optimization laboratory: ratio-bounded surrogate objectives on small environments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write metrics, checkpoints, and a config echo.
    Train(TrainArgs),
    /// Run the synthetic ratio-ascent benchmark and write one CSV per run.
    Bench(BenchArgs),
    /// Run the property suites and print a pass/fail table.
    Verify(VerifyArgs),
    /// Evaluate a checkpoint's greedy policy.
    Eval(EvalArgs),
    /// Print the resolved default config for an environment.
    Export(ExportArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Config file (TOML); optional if --set provides env_id.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config field, e.g. --set seed=3 --set objective=ppo_clip.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output root; defaults to $SPO_LAB_OUT or ./runs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a progress line every N phases (0 silences progress).
    #[arg(long, default_value_t = 10)]
    log_every: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated objective kinds (spo, ppo_clip, simple_aligned).
    #[arg(long, default_value = "spo,ppo_clip,simple_aligned", value_delimiter = ',')]
    kinds: Vec<String>,
    /// Comma-separated seeds.
    #[arg(long, default_value = "0", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Samples per synthetic batch.
    #[arg(long)]
    samples: Option<usize>,
    /// Ascent steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Ratio-deviation scale epsilon.
    #[arg(long)]
    eps: Option<f64>,
    /// Ascent learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Output root; defaults to $SPO_LAB_OUT or ./runs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing CSVs.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run only this suite.
    #[arg(long)]
    filter: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Path to a checkpoint.json written by train.
    checkpoint: PathBuf,
    /// Number of greedy episodes.
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    /// Base seed for the evaluation episodes.
    #[arg(long, default_value_t = 1000)]
    seed: u64,
}

#[derive(Args)]
struct ExportArgs {
    /// Environment id (cartpole, pointmass, gridmdp).
    env: String,
    /// Objective to bake into the exported config.
    #[arg(long)]
    objective: Option<String>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Errors that should exit 2 (bad usage or config) instead of 1.
#[derive(Debug)]
struct UsageError(anyhow::Error);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage_err(e: anyhow::Error) -> anyhow::Error {
    anyhow!(UsageError(e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Export(args) => cmd_export(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|cause| cause.is::<UsageError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// Output root: flag, then $SPO_LAB_OUT, then ./runs.
fn output_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("SPO_LAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode> {
    let config = config::resolve_config(args.config.as_deref(), &args.sets).map_err(usage_err)?;
    config.validate().map_err(|e| usage_err(anyhow!("{e}")))?;

    let run_dir = output_root(args.out).join(format!(
        "{}_{}_s{}",
        config.env_id,
        config.objective.name(),
        config.seed
    ));
    std::fs::create_dir_all(&run_dir)
        .with_context(|| format!("creating run directory {}", run_dir.display()))?;
    std::fs::write(run_dir.join("resolved.toml"), config::to_toml(&config)?)
        .context("writing resolved.toml")?;

    println!(
        "training {} with {} for {} env steps -> {}",
        config.env_id,
        config.objective.name(),
        config.total_steps,
        run_dir.display()
    );
    let mut trainer = Trainer::new(config.clone()).map_err(|e| anyhow!("{e}"))?;
    let log_every = args.log_every;
    let mut phase = 0usize;
    let report = trainer
        .train_with(Some(&run_dir), |m| {
            phase += 1;
            if log_every > 0 && phase % log_every == 0 {
                println!(
                    "phase {phase}: step {} return {:.1} policy loss {:.4} value loss {:.4} \
                     mean |r-1| {:.4} lr {:.2e} wall {:.1}s",
                    m.global_step,
                    m.mean_episode_return,
                    m.policy_loss,
                    m.value_loss,
                    m.mean_ratio_deviation,
                    m.learning_rate,
                    m.wall_time
                );
            }
        })
        .map_err(|e| anyhow!("{e}"))?;

    let wall = report.metrics.last().map(|m| m.wall_time).unwrap_or(0.0);
    let tail = report.tail_mean_return(0.1);
    let tail = if tail.is_finite() { format!("{tail:.1}") } else { "n/a".to_string() };
    println!(
        "done: {} phases, {} env steps, tail return {tail}, max mean |r-1| {:.4}, wall {:.1}s",
        report.phases, report.total_env_steps, report.max_ratio_deviation, wall
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode> {
    let mut kinds = Vec::new();
    for name in &args.kinds {
        let kind = ObjectiveKind::from_str(name)
            .map_err(|e| usage_err(anyhow!("{e}")))
            .with_context(|| format!("in --kinds entry '{name}'"))?;
        kinds.push(kind);
    }
    if kinds.is_empty() || args.seeds.is_empty() {
        return Err(usage_err(anyhow!("--kinds and --seeds must each name at least one entry")));
    }

    let out_dir = output_root(args.out);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let mut paths = Vec::new();
    for &seed in &args.seeds {
        for &kind in &kinds {
            paths.push((kind, seed, out_dir.join(format!("bench_{}_s{seed}.csv", kind.name()))));
        }
    }
    if !args.force {
        let existing: Vec<&Path> =
            paths.iter().map(|(_, _, p)| p.as_path()).filter(|p| p.exists()).collect();
        if !existing.is_empty() {
            return Err(usage_err(anyhow!(
                "output files already exist (pass --force to overwrite): {}",
                existing.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
            )));
        }
    }

    for (kind, seed, path) in &paths {
        let mut batch = match args.samples {
            Some(samples) => SyntheticBatch::standard_normal_with_size(*seed, samples),
            None => SyntheticBatch::standard_normal(*seed),
        };
        if let Some(eps) = args.eps {
            batch.eps = eps;
        }
        if let Some(lr) = args.learning_rate {
            batch.learning_rate = lr;
        }
        if let Some(steps) = args.steps {
            batch.num_steps = steps;
        }
        let run = run_ratio_bench(&batch, *kind).map_err(|e| anyhow!("{e}"))?;
        write_bench_csv(path, &run.records).map_err(|e| anyhow!("{e}"))?;
        let last = run.records.last().expect("bench always records step 0");
        println!(
            "{} seed {seed}: final mean |r-1| {:.4}, max {:.4} -> {}",
            kind.name(),
            last.mean_ratio_dev,
            last.max_ratio_dev,
            path.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn print_suite_row(r: &SuiteReport) {
    println!(
        "{:<24} {:>7} {:>12.3e} {:>12.3e}  {}",
        r.name,
        r.cases,
        r.max_error,
        r.tolerance,
        if r.passed { "pass" } else { "FAIL" }
    );
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    let names: Vec<&str> = match &args.filter {
        Some(name) => {
            if !SUITE_NAMES.contains(&name.as_str()) {
                return Err(usage_err(anyhow!(
                    "unknown suite '{name}'; known: {}",
                    SUITE_NAMES.join(", ")
                )));
            }
            vec![name.as_str()]
        }
        None => SUITE_NAMES.to_vec(),
    };

    println!("{:<24} {:>7} {:>12} {:>12}  result", "suite", "cases", "max error", "tolerance");
    let mut all_passed = true;
    for name in names {
        let report = run_suite(name).map_err(|e| anyhow!("{e}"))?;
        print_suite_row(&report);
        all_passed &= report.passed;
    }
    if all_passed {
        Ok(ExitCode::SUCCESS)
    } else {
        bail!("at least one verification suite failed");
    }
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode> {
    let checkpoint = TrainerCheckpoint::load(&args.checkpoint)
        .map_err(|e| usage_err(anyhow!("{e}")))
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let trainer = Trainer::from_checkpoint(&checkpoint).map_err(|e| usage_err(anyhow!("{e}")))?;
    let eval = trainer
        .evaluate(args.episodes, args.seed)
        .map_err(|e| anyhow!("{e}"))?;
    println!(
        "{} after {} env steps: return {:.2} +- {:.2} over {} greedy episodes (mean length {:.1})",
        checkpoint.config.env_id,
        checkpoint.global_step,
        eval.mean_return,
        eval.std_return,
        eval.episodes,
        eval.mean_length
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_export(args: ExportArgs) -> Result<ExitCode> {
    let mut config = spo_core::TrainConfig::for_env(&args.env)
        .map_err(|e| usage_err(anyhow!("{e}")))
        .with_context(|| format!("resolving defaults for env '{}'", args.env))?;
    if let Some(objective) = &args.objective {
        config.objective = ObjectiveKind::from_str(objective).map_err(|e| usage_err(anyhow!("{e}")))?;
    }
    let text = config::to_toml(&config)?;
    match args.out {
        Some(path) => {
            std::fs::write(&path, text)
                .with_context(|| format!("writing config to {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}
