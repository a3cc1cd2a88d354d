//! Command-line front end for the GPS phase-retrieval toolkit: synthetic
//! data generation, single reconstructions, seeded batches and image export.
//!
//! Every command is also callable as a library function taking a resolved
//! [`ExperimentConfig`].

pub mod commands;
pub mod config;
pub mod error;
pub mod export;
pub mod raw;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{batch, load_dataset, metrics, reconstruct, simulate, BatchOutcome, Dataset, RunMetrics};
pub use config::{ExperimentConfig, Options};
pub use error::{CliError, CliResult};
pub use export::{export_image, to_pgm, Scale};
pub use raw::{read_array, write_raw, RawArray, RawData};

#[derive(Debug, Parser)]
#[command(name = "gps", version, about = "Phase retrieval by generalized proximal smoothing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a noisy diffraction pattern from a synthetic object.
    Simulate(Options),
    /// Run one seeded reconstruction.
    Reconstruct(Options),
    /// Run many seeds and summarise them.
    Batch(Options),
    /// Score a stored reconstruction.
    Metrics(MetricsArgs),
    /// Write a raw array as a 16-bit PGM image.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Real-space reconstruction to score.
    #[arg(long)]
    recon: PathBuf,
    #[command(flatten)]
    options: Options,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Raw array (or CSV) to export.
    #[arg(long)]
    input: PathBuf,
    /// PGM file to write.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Scale::Linear)]
    scale: Scale,
    /// Move the zero frequency to the image center.
    #[arg(long)]
    shift: bool,
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate(o) => {
            let ds = simulate(&o.resolve()?)?;
            if let Some(n) = ds.noise {
                println!("r_noise = {}", n.r_noise);
            }
        }
        Command::Reconstruct(o) => {
            let r = reconstruct(&o.resolve()?)?;
            println!("{}", serde_json::to_string(&r.metrics).expect("serializable"));
        }
        Command::Batch(o) => {
            let b = batch(&o.resolve()?)?;
            if let Some(r) = b.report {
                println!("{}", serde_json::to_string(&r).expect("serializable"));
            }
        }
        Command::Metrics(a) => {
            let m = metrics(&a.options.resolve()?, &a.recon)?;
            println!("{}", serde_json::to_string(&m).expect("serializable"));
        }
        Command::Export(a) => export_image(&read_array(&a.input)?, &a.output, a.scale, a.shift)?,
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code: 0 success, 1 usage, 2 data error, 3 solver
/// divergence, 4 partial batch failure.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
