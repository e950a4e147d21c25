//! `stockout`: simulate supply networks, build datasets, train classifiers
//! and benchmark them against the naive baselines.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use stockout::nnet::NnetError;

use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(
    name = "stockout",
    version,
    about = "Stock-out prediction for multi-echelon inventory networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file with experiment settings; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: ExperimentConfig,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        Ok(match &self.config {
            Some(path) => self.settings.over(&ExperimentConfig::load(path)?),
            None => self.settings.clone(),
        })
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a network and write its trace.
    Simulate {
        /// Trace CSV to write; metadata goes to <out>.meta.json.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Cut a trace into labelled windows.
    #[command(alias = "build-dataset")]
    Dataset {
        /// Trace written by `simulate`.
        #[arg(long)]
        trace: PathBuf,
        /// Dataset CSV to write; metadata goes to <out>.meta.json.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train one network on the training share of a dataset.
    Train {
        /// Dataset written by `dataset`.
        #[arg(long)]
        data: PathBuf,
        /// Model JSON to write.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Predict with a trained model.
    Predict {
        /// Model written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Dataset to predict on.
        #[arg(long)]
        data: PathBuf,
        /// Predictions CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Predict every sample instead of the test share only.
        #[arg(long)]
        all: bool,
    },
    /// Run the naive baselines over the alpha grid and the network over a
    /// class-weight grid.
    Sweep {
        /// Trace the dataset was built from.
        #[arg(long)]
        trace: PathBuf,
        /// Dataset written by `dataset`.
        #[arg(long)]
        data: PathBuf,
        /// Report CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write false positives against false negatives here.
        #[arg(long)]
        tradeoff: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize a sweep report: best row per algorithm.
    Report {
        /// Report CSV written by `sweep`.
        #[arg(long)]
        input: PathBuf,
        /// Write false positives against false negatives here.
        #[arg(long)]
        tradeoff: Option<PathBuf>,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Simulate { out, common } => commands::simulate(&common.resolve()?, &out),
        Command::Dataset { trace, out, common } => {
            commands::build_dataset(&common.resolve()?, &trace, &out)
        }
        Command::Train { data, out, common } => commands::train(&common.resolve()?, &data, &out),
        Command::Predict {
            model,
            data,
            out,
            all,
        } => commands::predict(&model, &data, &out, all),
        Command::Sweep {
            trace,
            data,
            out,
            tradeoff,
            common,
        } => commands::sweep(&common.resolve()?, &trace, &data, &out, tradeoff.as_deref()),
        Command::Report { input, tradeoff } => commands::report(&input, tradeoff.as_deref()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let diverged = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<NnetError>(),
            Some(NnetError::Diverged { .. })
        ) || matches!(
            e.downcast_ref::<stockout::eval::EvalError>(),
            Some(stockout::eval::EvalError::Nnet(NnetError::Diverged { .. }))
        )
    });
    if diverged {
        EXIT_DIVERGED
    } else {
        EXIT_DATA
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
