use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use emcomm_cli::config::parse_assignment;
use emcomm_cli::run::run_config_of;
use emcomm_cli::{cmd_dump, cmd_eval, cmd_train, run_grid, CliError, GridSpec, RunConfig};

/// Train and analyse Sender/Receiver games over a discrete channel.
#[derive(Parser)]
#[command(name = "emcomm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML file of configuration keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a key, e.g. `--set lr=0.01`. Repeatable; wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a game and write logs, checkpoints and a summary.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Shorthand for `--set out_dir=DIR`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint with greedy decoding and print the metrics.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Feed every possible message to a trained Receiver and save the outputs as images.
    Dump {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory for the images.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run a hyperparameter grid.
    Grid {
        /// Grid file (base configuration, swept keys, workers).
        #[arg(long)]
        grid: PathBuf,
        /// Number of concurrent runs; overrides the file.
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn load(args: &ConfigArgs, out_dir: Option<&Path>, checkpoint: Option<&Path>) -> Result<RunConfig, CliError> {
    let mut overrides = args.set.iter().map(|s| parse_assignment(s)).collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = args.seed {
        let seed = i64::try_from(seed).map_err(|_| CliError::Validation(format!("seed {seed} is too large")))?;
        overrides.push(("seed".into(), toml::Value::Integer(seed)));
    }
    if let Some(dir) = out_dir {
        overrides.push(("out_dir".into(), toml::Value::String(dir.display().to_string())));
    }
    let file = args.config.clone().or_else(|| checkpoint.and_then(run_config_of));
    RunConfig::load(file.as_deref(), &overrides)
}

fn json(value: &impl serde::Serialize) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            config,
            out_dir,
            resume,
        } => {
            let c = load(&config, out_dir.as_deref(), None)?;
            let summary = cmd_train(&c, resume.as_deref())?;
            println!("{}", json(&summary)?);
        }
        Command::Eval { config, checkpoint } => {
            let c = load(&config, None, Some(&checkpoint))?;
            println!("{}", json(&cmd_eval(&c, &checkpoint)?)?);
        }
        Command::Dump {
            config,
            checkpoint,
            out_dir,
        } => {
            let c = load(&config, None, Some(&checkpoint))?;
            let codebook = cmd_dump(&c, &checkpoint, &out_dir)?;
            println!(
                "wrote {} message images and grid.pgm to {}",
                codebook.entries.len(),
                out_dir.display()
            );
        }
        Command::Grid { grid, workers } => {
            let mut spec = GridSpec::load(&grid)?;
            if let Some(w) = workers {
                if w == 0 {
                    return Err(CliError::Validation("workers must be at least 1".into()));
                }
                spec.workers = w;
            }
            let outcome = run_grid(&spec)?;
            print!("{}", outcome.table);
            if outcome.failures() > 0 {
                return Err(CliError::Runtime(format!("{} of {} runs failed", outcome.failures(), outcome.rows.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
