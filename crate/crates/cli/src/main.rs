//! `slideprov`: batch front end for slide provenance corpora.

mod commands;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rust_decimal::Decimal;
use thiserror::Error;

use output::Format;

/// Exit 1: an integrity or registration check failed. Exit 2: bad usage or
/// configuration. Exit 3: I/O or corpus loading failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Failure(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failure(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "slideprov", version, about = "Hash, register, verify and analyze slide provenance records")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Corpus root containing `by_slide/Lecture <n>/Slide<m>.json`
    #[arg(long, global = true, env = "SLIDEPROV_CORPUS")]
    pub corpus: Option<PathBuf>,

    /// Ledger file [default: <out>/ledger.json]
    #[arg(long, global = true, env = "SLIDEPROV_LEDGER")]
    pub ledger: Option<PathBuf>,

    /// Directory for reports
    #[arg(long, global = true, env = "SLIDEPROV_OUT", default_value = "slideprov-out")]
    pub out: PathBuf,

    #[arg(long, global = true, env = "SLIDEPROV_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long, global = true, env = "SLIDEPROV_FORMAT", value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    #[command(flatten)]
    pub chain: ChainOpts,
}

#[derive(Debug, Args)]
pub struct ChainOpts {
    /// USD per ETH
    #[arg(long, global = true, env = "SLIDEPROV_ETH_USD")]
    pub eth_usd: Option<Decimal>,

    /// Fixed execution gas per registration
    #[arg(long, global = true, env = "SLIDEPROV_GAS_EXEC_BASE")]
    pub gas_exec_base: Option<u64>,

    /// Base fee of the first block, in gwei
    #[arg(long, global = true, env = "SLIDEPROV_BASE_FEE_GWEI")]
    pub base_fee_gwei: Option<Decimal>,

    /// Priority tip, in gwei
    #[arg(long, global = true, env = "SLIDEPROV_TIP_GWEI")]
    pub tip_gwei: Option<Decimal>,

    /// Seconds between blocks
    #[arg(long, global = true, env = "SLIDEPROV_BLOCK_INTERVAL")]
    pub block_interval: Option<u64>,

    /// Unix timestamp of the genesis block
    #[arg(long, global = true, env = "SLIDEPROV_GENESIS_TIMESTAMP")]
    pub genesis_timestamp: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmptyJaccard {
    One,
    Zero,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize, hash and register every slide in key order
    Register {
        /// Skip slides that are already registered instead of failing
        #[arg(long, env = "SLIDEPROV_SKIP_EXISTING")]
        skip_existing: bool,

        /// Index of the development account that signs registrations
        #[arg(long, default_value_t = 0)]
        registrant: usize,
    },
    /// Recompute commitments and compare them with the ledger
    Verify,
    /// Disagreement, Jaccard, lecture, stability and coverage reports
    Analyze {
        /// Reference model for coverage loss [default: densest model]
        #[arg(long, env = "SLIDEPROV_BASELINE_MODEL")]
        baseline_model: Option<String>,

        /// Jaccard value when both sets are empty
        #[arg(long, value_enum, default_value_t = EmptyJaccard::One)]
        empty_jaccard: EmptyJaccard,
    },
    /// Tamper with randomly chosen slides and check that verification catches it
    Tamper {
        /// Number of slides to tamper with
        #[arg(short = 'n', long, default_value_t = 20)]
        count: usize,

        /// Also overwrite the tampered files in the corpus
        #[arg(long, env = "SLIDEPROV_WRITE")]
        write: bool,
    },
    /// Compare two extraction runs of the same slides
    CompareRuns { run_a: PathBuf, run_b: PathBuf },
    /// Registration delay relative to local file times
    TimeGaps {
        /// CSV with lecture_id,slide_id,local_timestamp [default: file mtimes]
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Extrapolate gas, cost and time to larger corpora
    Project {
        /// Slide counts (repeatable)
        #[arg(short = 'n', long = "slides", default_values_t = [1_000_000u64])]
        slides: Vec<u64>,

        /// TOML file with [[network]] name / gas_price_gwei entries
        #[arg(long)]
        profiles: Option<PathBuf>,

        /// Gas per registration
        #[arg(long)]
        mean_gas: Option<u64>,

        /// Registrations per second
        #[arg(long)]
        throughput: Option<Decimal>,
    },
    /// Print the commitment of slide files
    Hash {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Write a seeded synthetic corpus
    Synth {
        #[arg(long, default_value_t = 3)]
        lectures: u64,

        #[arg(long, default_value_t = 8)]
        slides: u64,

        /// Comma-separated model names
        #[arg(long, value_delimiter = ',', default_value = "model_a,model_b,model_c,model_d")]
        models: Vec<String>,

        /// Add casing, whitespace and structural noise
        #[arg(long)]
        messy: bool,

        /// Also write a local-timestamp manifest this many seconds before
        /// each slide's expected registration time
        #[arg(long)]
        manifest_lead: Option<i64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
