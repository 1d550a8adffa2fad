use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hoplab::config::{ExperimentKind, RunConfig};
use hoplab::experiments;

/// Numerical laboratory for random walks and exclusion dynamics on marked
/// point processes.
#[derive(Parser)]
#[command(name = "hoplab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSVs and summary.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (overrides HOPLAB_THREADS; default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample environments and persist them as text tables.
    Sample(RunArgs),
    /// Run the assumption diagnostic suite.
    Diagnostics(RunArgs),
    /// Estimate the effective diffusion matrix by corrector solves.
    #[command(name = "effective-d")]
    EffectiveD(RunArgs),
    /// Resolvent-convergence metrics across an eps ladder.
    Homogenize(RunArgs),
    /// Semigroup-convergence gaps across an eps ladder.
    Semigroup(RunArgs),
    /// Mean-square displacement of the random walk.
    Msd(RunArgs),
    /// Exclusion-process hydrodynamics against the heat semigroup.
    Exclusion(RunArgs),
    /// Pathwise-representation check on a small graph.
    Duality(RunArgs),
    /// Parse a config and list every derived default without running.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

impl Command {
    fn expected_experiment(&self) -> Option<ExperimentKind> {
        match self {
            Command::Sample(_) => Some(ExperimentKind::Sample),
            Command::Diagnostics(_) => Some(ExperimentKind::Diagnostics),
            Command::EffectiveD(_) => Some(ExperimentKind::EffectiveD),
            Command::Homogenize(_) => Some(ExperimentKind::Homogenize),
            Command::Semigroup(_) => Some(ExperimentKind::Semigroup),
            Command::Msd(_) => Some(ExperimentKind::Msd),
            Command::Exclusion(_) => Some(ExperimentKind::Exclusion),
            Command::Duality(_) => Some(ExperimentKind::Duality),
            Command::Validate { .. } => None,
        }
    }

    fn run_args(&self) -> Option<&RunArgs> {
        match self {
            Command::Sample(a)
            | Command::Diagnostics(a)
            | Command::EffectiveD(a)
            | Command::Homogenize(a)
            | Command::Semigroup(a)
            | Command::Msd(a)
            | Command::Exclusion(a)
            | Command::Duality(a) => Some(a),
            Command::Validate { .. } => None,
        }
    }
}

fn threads_from_env() -> Option<usize> {
    std::env::var("HOPLAB_THREADS").ok()?.parse().ok()
}

fn fail(err: &hoplab::Error) -> ExitCode {
    let record = serde_json::json!({
        "error": err.to_string(),
        "exit_code": err.exit_code(),
    });
    eprintln!("{record}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Command::Validate { config } = &cli.command {
        return match RunConfig::load(config).and_then(|c| c.defaults_report()) {
            Ok(report) => {
                println!("{}", serde_json::to_string_pretty(&report).expect("json"));
                ExitCode::SUCCESS
            }
            Err(err) => fail(&err),
        };
    }

    let args = cli.command.run_args().expect("run command");
    let config = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(err) => return fail(&err),
    };
    let expected = cli.command.expected_experiment().expect("run command");
    if config.experiment != expected {
        return fail(&hoplab::Error::Config(format!(
            "config names experiment `{}` but the `{}` subcommand was invoked",
            config.experiment.name(),
            expected.name()
        )));
    }
    if let Some(threads) = args.threads.or_else(threads_from_env) {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("thread pool setup failed: {e}");
        }
    }
    match experiments::run(&config, &args.out) {
        Ok(output) => {
            for file in &output.files {
                println!("wrote {}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => fail(&err),
    }
}
