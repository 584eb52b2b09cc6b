//! Command-line front end: scene generation, CKM training, planning and sweeps.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod manifest;
mod pipeline;
mod svg;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{gen, plan, sweep, train};
use error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "diffckm", version, about = "Differentiable channel knowledge maps and CKM-driven UAV planning")]
struct Cli {
    /// Directory for every artifact and manifest.
    #[arg(long, global = true, env = "DIFFCKM_OUT", default_value = "diffckm-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a city scene and its ground-truth channel map.
    Gen(gen::GenArgs),
    /// Train a channel map from sparse samples of the ground truth.
    Train(train::TrainArgs),
    /// Jointly plan trajectories, bandwidth and power.
    Plan(plan::PlanArgs),
    /// Repeat planning over a grid of one resource parameter.
    Sweep(sweep::SweepArgs),
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Gen(a) => gen::run(a, &cli.out),
        Command::Train(a) => train::run(a, &cli.out),
        Command::Plan(a) => plan::run(a, &cli.out),
        Command::Sweep(a) => sweep::run(a, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
