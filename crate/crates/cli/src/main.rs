use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graphflow_cli::config::{load, IdentityConfig, RunConfig};
use graphflow_cli::{
    cmd_experiment, cmd_run, cmd_verify_identities, configure_threads, CliResult, ExperimentName,
    Outcome,
};

/// Mean curvature flow runs, identity refinement studies and experiments.
#[derive(Debug, Parser)]
#[command(name = "graphflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Flow the configured data and evaluate its monitors.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit convergence orders of the evolution identities over grid levels.
    VerifyIdentities {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a canned experiment; without a config its defaults are used.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(cli: Option<PathBuf>, config: Option<PathBuf>) -> PathBuf {
    cli.or(config)
        .unwrap_or_else(|| PathBuf::from("graphflow-out"))
}

fn dispatch(command: Command) -> CliResult<Outcome> {
    match command {
        Command::Run { config, out } => {
            let cfg: RunConfig = load(&config)?;
            let dir = out_dir(out, cfg.output_dir.clone());
            cmd_run(&cfg, &dir)
        }
        Command::VerifyIdentities { config, out } => {
            let cfg: IdentityConfig = load(&config)?;
            let dir = out_dir(out, cfg.output_dir.clone());
            cmd_verify_identities(&cfg, &dir)
        }
        Command::Experiment { name, config, out } => {
            cmd_experiment(name, config.as_deref(), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage {
                Outcome::Usage.code() as u8
            } else {
                0
            });
        }
    };
    let threads = std::env::var("GRAPHFLOW_THREADS").ok();
    let outcome = configure_threads(threads.as_deref()).and_then(|()| dispatch(cli.command));
    let outcome = match outcome {
        Ok(outcome) => outcome,
        Err(e) => {
            eprintln!("graphflow: {e}");
            e.outcome()
        }
    };
    if outcome != Outcome::Pass {
        eprintln!("graphflow: exit {}", outcome.code());
    }
    ExitCode::from(outcome.code() as u8)
}
