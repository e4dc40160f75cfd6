use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maxent_ig::runner::{self, RunConfig};
use maxent_ig::{Error, ErrorKind};

/// Integrated gradients with maximum-entropy baselines: seeded experiment runner.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
#[derive(Parser, Debug)]
#[command(name = "maxent-ig", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train (or load) the model and write it with its accuracy report.
    Train(Common),
    /// Materialize the configured baselines for one test instance.
    Baseline(Common),
    /// Loss-vs-baseline sweeps, the entropy curve and the argmin histogram.
    Sweep(Common),
    /// Linear input-shift invariance checks and the entropy phase identity.
    Invariance(Common),
    /// Ablation matrix over methods and baselines.
    Evaluate(Common),
    /// Descent trajectories on the logit, softmax and entropy targets.
    Nonconservation(Common),
    /// Attribution maps of every configured method for one test instance.
    Explain(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config file. Without either it is 0.
    #[arg(long)]
    seed: Option<u64>,

    /// Output root; each subcommand writes into `<out>/<subcommand>/`.
    /// Falls back to the config's `output_dir`, then `$MAXENT_IG_OUT`, then `runs`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads for parallel evaluation (default: all cores).
    #[arg(short, long)]
    jobs: Option<usize>,

    /// Override a config value, e.g. `--set model.kind=cnn`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let (common, cmd): (&Common, fn(&RunConfig) -> maxent_ig::Result<runner::CommandSummary>) = match &cli.command {
        Command::Train(c) => (c, runner::cmd_train),
        Command::Baseline(c) => (c, runner::cmd_baseline),
        Command::Sweep(c) => (c, runner::cmd_sweep),
        Command::Invariance(c) => (c, runner::cmd_invariance),
        Command::Evaluate(c) => (c, runner::cmd_evaluate),
        Command::Nonconservation(c) => (c, runner::cmd_nonconservation),
        Command::Explain(c) => (c, runner::cmd_explain),
    };
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the worker pool: {e}")))?;
    }
    let mut cfg = RunConfig::load(common.config.as_deref(), &common.overrides)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    let summary = cmd(&cfg)?;
    for line in &summary.lines {
        println!("{line}");
    }
    println!("outputs: {}", summary.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
