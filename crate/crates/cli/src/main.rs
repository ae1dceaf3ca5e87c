//! `rsgslm` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure (including a failed gradient check).

mod commands;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rsgslm::experiment::Method;
use rsgslm::trainer::GradCheckSpec;
use rsgslm::Error;

use commands::{DataArgs, UsageError};

#[derive(Parser, Debug)]
#[command(name = "rsgslm", version, about = "Multi-view semi-supervised node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Dataset directory (views/view_*.csv, labels.csv). Never modified.
    #[arg(long)]
    data: PathBuf,
    /// `key = value` configuration file; defaults apply to unset keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where graph artifacts and runs are written.
    #[arg(long, env = "RSGSLM_ARTIFACT_ROOT", default_value = "artifacts")]
    artifacts: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic multi-view dataset from a spec file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn per-view graphs, fuse them and compute node weights for each split.
    Graphs {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        /// Rebuild even when the manifest says the artifacts are current.
        #[arg(long)]
        force: bool,
    },
    /// Train one method on each split and aggregate test accuracy.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "rsgslm", value_parser = parse_method)]
        method: Method,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        /// Run directory name under <artifacts>/runs; derived from the config by default.
        #[arg(long)]
        id: Option<String>,
    },
    /// Run the eight loss-term combinations plus ground-truth pseudo labels.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        runs: usize,
    },
    /// Sweep lambda1 x lambda2 and the re-weighting range on one split.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        split: usize,
    },
    /// Write Z, F_* and X_* with labels for external visualization.
    ExportEmbeddings {
        /// A run directory produced by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 0)]
        split: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients for every loss combination.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 1,
        Some(e) if e.is_numeric() => 3,
        _ => 2,
    }
}

fn data_args(common: Common, command: &str) -> DataArgs {
    DataArgs {
        data: common.data,
        config_path: common.config,
        root: common.artifacts,
        command: command.to_string(),
    }
}

fn run(cli: Cli, command_line: &str) -> anyhow::Result<bool> {
    match cli.command {
        Command::Synth { spec, out } => commands::synth(&spec, &out)?,
        Command::Graphs { common, runs, force } => {
            commands::check_runs(runs)?;
            commands::graphs(&data_args(common, command_line), runs, force)?;
        }
        Command::Train {
            common,
            method,
            runs,
            id,
        } => {
            commands::check_runs(runs)?;
            commands::train(&data_args(common, command_line), method, runs, id)?;
        }
        Command::Ablate { common, runs } => {
            commands::check_runs(runs)?;
            commands::ablate(&data_args(common, command_line), runs)?;
        }
        Command::Sweep { common, split } => {
            commands::sweep(&data_args(common, command_line), split)?;
        }
        Command::ExportEmbeddings { run, split, out } => {
            commands::export_embeddings(&run, split, out)?;
        }
        Command::Gradcheck { config, tol, seed } => {
            let spec = GradCheckSpec {
                seed,
                ..GradCheckSpec::default()
            };
            return commands::gradcheck(config.as_deref(), tol, spec);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let command_line = std::env::args().collect::<Vec<_>>().join(" ");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, &command_line) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
