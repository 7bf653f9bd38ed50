//! `anchordepth` — command-line frontend for the sliding-anchor depth
//! toolkit: dataset generation, training, evaluation, representation
//! transforms, and point-cloud export.
//!
//! Exit codes: 0 on success (including `--help` / `--version`), 1 on usage
//! or runtime errors, 2 when training diverges.

mod config;
mod eval;
mod generate;
mod reconstruct;
mod train;
mod transform;
mod util;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "anchordepth",
    version,
    about = "Sliding-anchor metric depth: datasets, training, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene dataset with a manifest
    Generate(generate::GenerateArgs),
    /// Train a model and write a checkpoint
    Train(train::TrainArgs),
    /// Evaluate a checkpoint against a dataset
    Eval(eval::EvalArgs),
    /// Apply the anchor representation to a depth file
    Transform(transform::TransformArgs),
    /// Back-project a depth file to an ASCII PLY point cloud
    Reconstruct(reconstruct::ReconstructArgs),
}

const EXIT_ERROR: u8 = 1;
const EXIT_DIVERGED: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_ERROR,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(args) => generate::run(args),
        Command::Train(args) => train::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Transform(args) => transform::run(args),
        Command::Reconstruct(args) => reconstruct::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_divergence(&e) {
                ExitCode::from(EXIT_DIVERGED)
            } else {
                ExitCode::from(EXIT_ERROR)
            }
        }
    }
}

fn is_divergence(e: &anyhow::Error) -> bool {
    e.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<anchordepth::error::Error>(),
            Some(anchordepth::error::Error::Diverged { .. })
        )
    })
}
