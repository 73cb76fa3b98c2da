//! `gsdcheck` — consistency checking for subjective quality experiments.
//!
//! Subcommands: `grid build|verify` manages the precomputed parameter-grid
//! cache, `analyze` runs the full pipeline over a tidy score CSV, and
//! `simulate` generates synthetic experiments (optionally self-analyzing
//! them). Exit codes: 0 success, 1 usage error, 2 data or grid integrity
//! error. Verdicts are data, not errors: an inconsistent experiment still
//! exits 0.

mod manifest;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "gsdcheck", version, about = "Classify subjective experiments as consistent or inconsistent by GSD goodness-of-fit")]
pub struct Cli {
    /// Path of the parameter-grid cache file.
    #[arg(long, global = true, env = "GSDCHECK_GRID_PATH", default_value = "gsd_grid.bin")]
    pub grid_path: PathBuf,

    /// Bootstrap replicates per stimulus.
    #[arg(long, global = true, env = "GSDCHECK_BOOTSTRAP_ITERS", default_value_t = 10_000)]
    pub bootstrap_iters: u32,

    /// Master seed; every per-stimulus stream derives from it.
    #[arg(long, global = true, env = "GSDCHECK_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Significance level behind the threshold line.
    #[arg(long, global = true, env = "GSDCHECK_BETA", default_value_t = 0.05)]
    pub beta: f64,

    /// Right-most alpha that can flag an experiment.
    #[arg(long, global = true, env = "GSDCHECK_ALPHA_CAP", default_value_t = 0.2)]
    pub alpha_cap: f64,

    /// Column remap for input CSVs, e.g. "experiment=exp,score=opinion".
    #[arg(long, global = true, env = "GSDCHECK_COLUMNS")]
    pub columns: Option<String>,

    /// Worker threads (0 = one per core). Changes wall time only, never
    /// results.
    #[arg(long, global = true, env = "GSDCHECK_WORKERS", default_value_t = 0)]
    pub workers: usize,

    /// Output directory.
    #[arg(long, global = true, env = "GSDCHECK_OUT", default_value = "gsd_out")]
    pub out: PathBuf,

    /// Plot formats to write, comma separated ("svg,csv").
    #[arg(long, global = true, env = "GSDCHECK_FORMAT", default_value = "svg,csv")]
    pub format: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or verify the parameter-grid cache.
    Grid {
        #[command(subcommand)]
        action: GridAction,
    },
    /// Analyze a tidy score CSV (experiment, stimulus, subject, score rows).
    Analyze {
        /// Input CSV path.
        csv: PathBuf,
        /// Abort on the first malformed row instead of collecting errors.
        #[arg(long)]
        strict: bool,
    },
    /// Generate a synthetic experiment; optionally analyze it in place.
    Simulate {
        /// Number of stimuli.
        #[arg(long, default_value_t = 160)]
        n_stimuli: usize,
        /// Scores per stimulus.
        #[arg(long, default_value_t = 24)]
        n_scores: u32,
        /// True-quality sampling interval, "lo:hi".
        #[arg(long, default_value = "1.2:4.8")]
        psi_range: String,
        /// Spread sampling interval, "lo:hi".
        #[arg(long, default_value = "0.5:0.95")]
        rho_range: String,
        /// Contamination spec, e.g. "bimodal=0.1,sudden_cutoff=0.05".
        /// Classes: bimodal, random_answers, sudden_cutoff, hate_or_love.
        #[arg(long)]
        contaminate: Option<String>,
        /// Experiment id used in the output tree.
        #[arg(long, default_value = "sim")]
        experiment_id: String,
        /// Run the analysis pipeline on the generated experiment.
        #[arg(long)]
        analyze: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum GridAction {
    /// Build the grid and write the cache file.
    Build,
    /// Load the cache, check its checksum and re-derive 100 random cells.
    Verify,
}

/// Errors mapped onto exit codes: usage errors exit 1, data and grid
/// integrity errors exit 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(1),
            CliError::Data(_) => ExitCode::from(2),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match pipeline::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = match &e {
                CliError::Usage(m) | CliError::Data(m) => m,
            };
            eprintln!("error: {message}");
            e.exit_code()
        }
    }
}
