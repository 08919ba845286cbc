//! `holoquant`: train, compress, run, benchmark, analyze and inspect spline
//! networks from the command line.

mod cmd;
mod config;
mod error;
mod io;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::cmd::analyze::Mode;
use crate::error::{CliError, CliResult};

/// Worker threads for the parallel analyses. Unset uses every core.
const THREADS_ENV: &str = "HOLOQUANT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "holoquant", version, about = "Spline-network compression toolkit")]
struct Cli {
    /// Directory receiving every output file and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a dense network on the configured synthetic task.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides every seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compress a dense model into per-layer codebooks.
    Compress {
        model: PathBuf,
        /// Codebook rows per layer.
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        /// Quantize codebook, gains and biases to 8 bits.
        #[arg(long)]
        int8: bool,
    },
    /// Evaluate a model on every row of a headerless CSV.
    Run { model: PathBuf, input: PathBuf },
    /// Time models that differ only in grid size.
    Bench {
        #[arg(required = true, num_args = 2..)]
        models: Vec<PathBuf>,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 20)]
        warmup: usize,
        #[arg(long, default_value_t = 200)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Spectrum, pruning and codebook studies of a model.
    Analyze {
        model: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Task config; required by every mode except `spectrum`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Codebook sizes for `ablation`, comma separated.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Print the header, memory plan and sizes of a model file.
    Inspect { model: PathBuf },
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    io::ensure_dir(&cli.out_dir)?;
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::Train { config, seed } => cmd::train::run(&config, seed, out),
        Command::Compress { model, k, restarts, seed, iterations, int8 } => {
            cmd::compress::run(&model, cmd::compress::Options { k, restarts, seed, iterations, int8 }, out)
        }
        Command::Run { model, input } => cmd::run::run(&model, &input, out),
        Command::Bench { models, batch, warmup, repeats, seed } => {
            cmd::bench::run(&models, holoquant_core::lutham::BenchConfig { batch, warmup, repeats, seed }, out)
        }
        Command::Analyze { model, mode, config, seed, k, restarts } => {
            cmd::analyze::run(&model, mode, config.as_deref(), cmd::analyze::Overrides { seed, k, restarts }, out)
        }
        Command::Inspect { model } => cmd::inspect::run(&model, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
