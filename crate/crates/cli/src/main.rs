use clap::{Parser, Subcommand};
use powerprior_cli::commands;
use powerprior_cli::config::RunConfig;
use powerprior_cli::{exit_code_for, presets};
use std::path::PathBuf;
use std::process::ExitCode;

/// Normalised power priors: estimate c(a0), build grids and dictionaries,
/// and sample joint posteriors of the parameters and the discounting factor.
#[derive(Parser)]
#[command(name = "powerprior", version, about)]
struct Cli {
    /// Cap on worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Seed override; replaces the seed in the config or preset.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form and bridge estimates of l(a0) over the configured list.
    Constants {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build the budgeted estimation grid.
    Grid {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit the smoother and emit the prediction dictionary with metrics.
    Fit {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sample the joint posterior of (θ, a0).
    Sample {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fixed-a0 prior/posterior sensitivity analysis.
    Sensitivity {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a named preset end to end (see --list for names).
    Scenario {
        /// Preset name, e.g. bernoulli-1 or gaussian-m10.
        name: Option<String>,
        /// List available scenario names and exit.
        #[arg(long)]
        list: bool,
    },
}

fn load_resolved(
    path: &PathBuf,
    seed: Option<u64>,
) -> powerprior::Result<powerprior_cli::config::Resolved> {
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let base = path.parent().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    cfg.resolve(&base)
}

fn run(cli: Cli) -> powerprior::Result<()> {
    if let Some(threads) = cli.threads {
        // Ignore the error when a pool already exists (e.g. repeat calls in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match &cli.command {
        Command::Constants { config } => {
            commands::cmd_constants(&load_resolved(config, cli.seed)?, &cli.out)
        }
        Command::Grid { config } => commands::cmd_grid(&load_resolved(config, cli.seed)?, &cli.out),
        Command::Fit { config } => commands::cmd_fit(&load_resolved(config, cli.seed)?, &cli.out),
        Command::Sample { config } => {
            commands::cmd_sample(&load_resolved(config, cli.seed)?, &cli.out)
        }
        Command::Sensitivity { config } => {
            commands::cmd_sensitivity(&load_resolved(config, cli.seed)?, &cli.out)
        }
        Command::Scenario { name, list } => {
            if *list {
                for n in presets::SCENARIO_NAMES {
                    println!("{n}");
                }
                return Ok(());
            }
            let name = name.as_deref().ok_or_else(|| {
                powerprior::Error::InvalidArgument(
                    "scenario needs a name; try --list".into(),
                )
            })?;
            presets::run_scenario(name, cli.seed.unwrap_or(20240811), &cli.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
