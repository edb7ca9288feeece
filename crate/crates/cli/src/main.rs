use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gmrf_cli::commands::{cmd_bench, cmd_build, cmd_compare, cmd_infer, cmd_sample};
use gmrf_cli::config::ExperimentConfig;
use gmrf_cli::CliError;

#[derive(Parser)]
#[command(name = "gmrf", version, about = "Selected inversion and RBMC variance experiments for sparse GMRFs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Worker threads for the partition loop and sampling.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Estimator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write a model directory.
    Build,
    /// Posterior mean and marginal standard deviations.
    Infer,
    /// Draw samples from the posterior precision.
    Sample,
    /// Per-node errors against the dense oracle.
    Compare,
    /// Phase timings across worker counts.
    Bench,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.set.clone();
    if let Some(w) = cli.workers {
        overrides.push(format!("workers={w}"));
    }
    if let Some(s) = cli.seed {
        overrides.push(format!("estimator.seed={s}"));
    }
    if let Some(o) = &cli.out {
        overrides.push(format!("out={}", o.display()));
    }
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    if let Some(w) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {w} workers: {e}")))?;
    }
    match cli.command {
        Command::Build => cmd_build(&cfg),
        Command::Infer => cmd_infer(&cfg),
        Command::Sample => cmd_sample(&cfg),
        Command::Compare => cmd_compare(&cfg),
        Command::Bench => cmd_bench(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
