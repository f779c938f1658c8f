use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rlab::error::exit;
use rlab::{commands, pool, Error, ExperimentConfig, Pool};

#[derive(Parser)]
#[command(name = "rlab", version, about = "Robust model selection experiments on a toy calorimeter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file.
    GenData(Args),
    /// Train one instance of a model.
    Train(Args),
    /// Train k instances and summarize their test losses.
    Robustness(Args),
    /// Run a selection campaign.
    Select(Args),
    /// Repeat robustness runs across training-sample sizes.
    Sweep(Args),
    /// Criterion curves and boxplots from stored records.
    Report(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; falls back to RLAB_WORKERS, then to the core count.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(name: &str, args: &Args) -> Result<commands::Outcome, Error> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("rlab-out"));
    let pool = Pool::new(pool::resolve_workers(args.workers)?)?;
    commands::run(name, &cfg, &out, &pool)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::GenData(a) => ("gen-data", a),
        Command::Train(a) => ("train", a),
        Command::Robustness(a) => ("robustness", a),
        Command::Select(a) => ("select", a),
        Command::Sweep(a) => ("sweep", a),
        Command::Report(a) => ("report", a),
    };
    let code = match run(name, args) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if outcome.diverged_only {
                eprintln!("rlab {name}: every result diverged");
                exit::DIVERGED
            } else {
                exit::OK
            }
        }
        Err(e) => {
            eprintln!("rlab {name}: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
