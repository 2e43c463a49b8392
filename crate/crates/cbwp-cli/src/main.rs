//! Command-line front end: runs experiments from JSON configs, sweeps the
//! probe budget or the arm count, and validates emitted artifacts.

use anyhow::{bail, Context as _};
use cbwp::harness::{
    audit_artifacts, emit_outputs, emit_sweep_outputs, run_experiment, run_sweep,
    ExperimentConfig, MetricsTable, SweepAxis, SweepResult,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "cbwp", version, about = "Probe-and-play bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (policy, seed) cell of a config and write artifacts.
    Run(RunArgs),
    /// Rerun the experiment along a swept parameter and write a summary.
    Sweep(SweepArgs),
    /// Validate the artifacts in a previously written run directory.
    Audit(AuditArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run only this master seed instead of the config's list.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Suppress the summary printed to stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment configuration (JSON) with a sweep section.
    #[arg(long)]
    config: PathBuf,
    /// Swept parameter: the probe budget or the arm count.
    #[arg(long, value_enum, ignore_case = true)]
    over: Axis,
    /// Output directory; overrides the config's out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Suppress the summary printed to stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct AuditArgs {
    /// Directory previously written by `run` or `sweep`.
    #[arg(long)]
    run_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    K,
    N,
}

impl From<Axis> for SweepAxis {
    fn from(axis: Axis) -> Self {
        match axis {
            Axis::K => SweepAxis::ProbeBudget,
            Axis::N => SweepAxis::ArmCount,
        }
    }
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Audit(args) => audit(args),
    }
}

fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn resolve_out(explicit: Option<PathBuf>, cfg: &ExperimentConfig) -> anyhow::Result<PathBuf> {
    match explicit.or_else(|| cfg.out_dir.as_ref().map(PathBuf::from)) {
        Some(dir) => Ok(dir),
        None => bail!("no output directory: pass --out or set out_dir in the config"),
    }
}

fn with_jobs<T: Send>(
    jobs: Option<usize>,
    work: impl FnOnce() -> anyhow::Result<T> + Send,
) -> anyhow::Result<T> {
    match jobs {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .context("building worker pool")?
            .install(work),
        None => work(),
    }
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    let out = resolve_out(args.out, &cfg)?;
    let table = with_jobs(args.jobs, || Ok(run_experiment(&cfg)?))?;
    emit_outputs(&table, &cfg, &out)?;
    if !args.quiet {
        print_run_summary(&table, &out);
    }
    Ok(())
}

fn print_run_summary(table: &MetricsTable, out: &Path) {
    for policy in table.policies() {
        let avg = table
            .averaged_final_regret(policy)
            .expect("listed policies have cells");
        println!("{policy}: avg final cumulative regret {avg:.4}");
    }
    let audited: Vec<_> = table.cells().filter_map(|c| c.audit.as_ref()).collect();
    if !audited.is_empty() {
        let clean = audited.iter().filter(|r| r.clean_run).count();
        println!("audits: {clean}/{} clean runs", audited.len());
    }
    println!("artifacts written to {}", out.display());
}

fn sweep(args: SweepArgs) -> anyhow::Result<()> {
    let cfg = load_config(&args.config)?;
    let out = resolve_out(args.out, &cfg)?;
    let axis = SweepAxis::from(args.over);
    let result = with_jobs(args.jobs, || Ok(run_sweep(&cfg, axis)?))?;
    emit_sweep_outputs(&result, &cfg, &out)?;
    if !args.quiet {
        print_sweep_summary(&result, &out);
    }
    Ok(())
}

fn print_sweep_summary(result: &SweepResult, out: &Path) {
    let mut policies = Vec::new();
    for point in &result.points {
        for policy in point.table.policies() {
            if !policies.contains(&policy) {
                policies.push(policy);
            }
        }
    }
    policies.sort_unstable();
    for value in result.values() {
        for &policy in &policies {
            if let Some(avg) = result.averaged_final_regret(policy, value) {
                println!(
                    "{policy} @ {}={value}: avg final cumulative regret {avg:.4}",
                    result.axis.label()
                );
            }
        }
    }
    println!("artifacts written to {}", out.display());
}

fn audit(args: AuditArgs) -> anyhow::Result<()> {
    let problems = audit_artifacts(&args.run_dir)?;
    if problems.is_empty() {
        println!("{}: artifacts are consistent", args.run_dir.display());
        return Ok(());
    }
    for problem in &problems {
        eprintln!("{problem}");
    }
    bail!("{} problem(s) found in {}", problems.len(), args.run_dir.display());
}
