//! `tiltkit`: simulate camera pitch/roll disturbances on KITTI-style data,
//! evaluate and rectify detections, score extrinsic estimates, and run the
//! perceptual-loss kernels.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O error.

mod cmd;
mod config;
mod error;
mod io;
mod report;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use config::ConfigFile;
use error::{CliError, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "tiltkit", version, about)]
struct Cli {
    /// Flat `key = value` file; keys are long flag names, flags win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads [default: one per core]
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    Simulate(cmd::simulate::SimulateArgs),
    Evaluate(cmd::evaluate::EvaluateArgs),
    Rectify(cmd::rectify::RectifyArgs),
    PoseError(cmd::pose_error::PoseErrorArgs),
    Loss(cmd::loss::LossArgs),
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let jobs = file.pick_or(cli.jobs, "jobs", 0)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("--jobs {jobs}: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => cmd::simulate::run(a, &file),
        Command::Evaluate(a) => cmd::evaluate::run(a, &file),
        Command::Rectify(a) => cmd::rectify::run(a, &file),
        Command::PoseError(a) => cmd::pose_error::run(a, &file),
        Command::Loss(a) => cmd::loss::run(a, &file),
    })
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
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
