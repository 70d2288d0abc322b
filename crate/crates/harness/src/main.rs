use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use trotter_harness::config::{ExperimentConfig, ExperimentKind};
use trotter_harness::experiments::{run, RunEnv};
use trotter_harness::suite::{run_suite, write_run, Status};

#[derive(Parser)]
#[command(name = "trotter", version, about = "Trotter error experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed replacing the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; runs write to `<out>/<id>` unless the config sets `output_dir`.
    #[arg(long, global = true, env = "TROTTER_OUT", default_value = "trotter-out")]
    out: PathBuf,
    /// Allow dense spectral norms above 10 qubits.
    #[arg(long, global = true)]
    big_dense: bool,
    /// Worker threads for `suite`.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Progress on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Qubit count when no config is given.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Hamiltonian parts and nested commutator norms.
    Model(RunArgs),
    /// State-dependent and baseline step-error bounds.
    Bound(RunArgs),
    /// Exact and product-formula trajectories.
    Evolve(RunArgs),
    /// Worst-case product states and size scaling.
    Worstcase(RunArgs),
    /// Shadow estimates of the step error.
    Shadows(RunArgs),
    /// Adaptive step scheduling sweep.
    Adaptive(RunArgs),
    /// Step error and entanglement along the trajectory.
    Fig1(RunArgs),
    /// Theoretical per-step curves and step counts.
    Fig4(RunArgs),
    /// Minimum step counts by method.
    Fig5(RunArgs),
    /// Every config in a directory, with golden comparisons.
    Suite {
        dir: PathBuf,
    },
}

fn single(kind: ExperimentKind, args: &RunArgs, cli: &Cli, env: &RunEnv) -> Result<Status> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default_for(kind),
    };
    if cfg.experiment != kind {
        anyhow::bail!("config is a '{}' experiment, not '{}'", cfg.experiment.name(), kind.name());
    }
    if let Some(n) = args.n {
        cfg.n_qubits = Some(n);
        cfg.n_range = None;
    }
    cfg.validate()?;
    let out = run(&cfg, env)?;
    let dir = cfg.output_path(&cli.out);
    write_run(&cfg, env, &out, &dir)?;
    println!("{} -> {}", cfg.id, dir.display());
    for f in &out.flags {
        eprintln!("flag: {f}");
    }
    Ok(if out.flags.is_empty() { Status::Ok } else { Status::Regression })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env = RunEnv {
        seed: cli.seed,
        big_dense: cli.big_dense,
        verbose: cli.verbose,
    };
    let result = match &cli.command {
        Command::Model(a) => single(ExperimentKind::Model, a, &cli, &env),
        Command::Bound(a) => single(ExperimentKind::Bound, a, &cli, &env),
        Command::Evolve(a) => single(ExperimentKind::Evolve, a, &cli, &env),
        Command::Worstcase(a) => single(ExperimentKind::Worstcase, a, &cli, &env),
        Command::Shadows(a) => single(ExperimentKind::Shadows, a, &cli, &env),
        Command::Adaptive(a) => single(ExperimentKind::Adaptive, a, &cli, &env),
        Command::Fig1(a) => single(ExperimentKind::Fig1, a, &cli, &env),
        Command::Fig4(a) => single(ExperimentKind::Fig4, a, &cli, &env),
        Command::Fig5(a) => single(ExperimentKind::Fig5, a, &cli, &env),
        Command::Suite { dir } => run_suite(dir, &cli.out, &env, cli.threads).map(|r| {
            print!("{}", r.summary());
            r.status()
        }),
    };
    match result {
        Ok(s) => ExitCode::from(s.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Status::Error.exit_code() as u8)
        }
    }
}
