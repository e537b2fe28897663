use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wickwz_cli::{run, CliError, Context, Experiment, RunConfig};

#[derive(Parser)]
#[command(
    name = "wickwz",
    version,
    about = "Wick-type Wong-Zakai SDE experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ensemble and write run.json + trajectories.csv.
    Simulate(Common),
    /// Compare closed-form and finite-difference Malliavin derivatives.
    CheckDerivative(Common),
    /// Kernel density estimate of X_t.
    Density(Common),
    /// Weak Fokker-Planck residuals and the conditional coefficient g.
    Fp(Common),
    /// Polygonal approximation error against mesh size.
    Convergence(Common),
    /// Tabulate xi against the constant coefficient 1/2.
    GbmDemo(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "WICKWZ_THREADS")]
    threads: Option<usize>,
    /// Overrides `master_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(experiment: Experiment, args: Common) -> Result<(), CliError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    run(experiment, &Context::new(config, args.out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::CheckDerivative(a) => (Experiment::CheckDerivative, a),
        Command::Density(a) => (Experiment::Density, a),
        Command::Fp(a) => (Experiment::Fp, a),
        Command::Convergence(a) => (Experiment::Convergence, a),
        Command::GbmDemo(a) => (Experiment::GbmDemo, a),
    };
    match execute(experiment, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wickwz {}: {e}", experiment.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
