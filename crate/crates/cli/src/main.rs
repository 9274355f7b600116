//! `subalg`: generate data, identify observer models, predict and inspect.
//!
//! On failure the binary prints a single line `error[CODE]: message` to
//! standard error and exits with status 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use subalgebraic::toolkit::{
    describe_model, emit, format_evaluation, format_predictions, format_report, generate, ingest, load_config,
    load_model, predict_series, save_model, GeneratorSpec,
};
use subalgebraic::{identify, Error, Result};

#[derive(Parser)]
#[command(name = "subalg", version, about = "Subalgebraic identification of polynomial observer systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a ground-truth system and write its outputs as a series file.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Identify an observer model from a series file.
    Identify {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "out-model")]
        out_model: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Write one-step predictions and residuals.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print per-dimension RMSE and relative RMSE.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Print the dimensions, monomial bases and coefficients of a model.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { spec, seed, out } => {
            let spec = GeneratorSpec::load(spec)?;
            emit(&generate(&spec, seed)?, out)
        }
        Command::Identify {
            data,
            config,
            out_model,
            report,
        } => {
            let ts = ingest(data)?;
            let cfg = load_config(config)?;
            let (model, diag) = identify(&ts, &cfg)?;
            save_model(&model, out_model)?;
            write(&report, &format_report(&diag))
        }
        Command::Predict { model, data, out } => {
            let model = load_model(model)?;
            let ts = ingest(data)?;
            let report = predict_series(&model, &ts)?;
            write(&out, &format_predictions(&ts, &report))
        }
        Command::Evaluate { model, data } => {
            let model = load_model(model)?;
            let ts = ingest(data)?;
            print!("{}", format_evaluation(&predict_series(&model, &ts)?));
            Ok(())
        }
        Command::Inspect { model } => {
            print!("{}", describe_model(&load_model(model)?));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " | ");
            eprintln!("error[{}]: {message}", e.code());
            ExitCode::FAILURE
        }
    }
}
