//! `spdg` — corpus generation for translation bootstrapping: word-by-word
//! pseudo-translations, denoiser training pairs, MLM baselines, and the full
//! multilingual pipeline, driven by one JSON config.
//!
//! Progress and summaries go to stderr; generated data goes to files. Exit
//! codes: 0 on success, 2 for configuration errors, 3 for data errors.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand};

use crate::config::{PipelineConfig, Runtime};

/// An error carrying the process exit code: 2 for configuration problems
/// (bad flags, bad config file, missing referenced files), 3 for data
/// problems (unreadable corpora, empty lexicons, I/O failures mid-run).
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 2,
            error: error.into(),
        }
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 3,
            error: error.into(),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

#[derive(Parser)]
#[command(
    name = "spdg",
    version,
    about = "Generate pseudo-parallel, denoising and MLM training corpora"
)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-document work (0 = one per core).
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Output file (directory for `calibrate`).
    #[arg(long, global = true, value_name = "PATH")]
    output: Option<PathBuf>,

    /// Only generate these ordered pairs, e.g. "en-fr,fr-en".
    #[arg(long, global = true, value_name = "LIST")]
    pairs: Option<String>,

    /// Process at most this many documents per corpus.
    #[arg(long, global = true, value_name = "N")]
    limit: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure missing-word rates per target language and write
    /// calibration_<lang>.json reports.
    Calibrate,
    /// Word-by-word translate one corpus; one JSON line per document with
    /// keys id, input, wbw, missing_rate.
    Wbw {
        /// Source language (its corpus is translated).
        #[arg(long)]
        src: String,
        /// Target language.
        #[arg(long)]
        tgt: String,
    },
    /// Corrupted/original pairs for denoiser training in one language.
    DenoiseData {
        #[arg(long)]
        lang: String,
    },
    /// The full pipeline: pseudo-parallel pairs for every configured
    /// direction, optionally mixed with MLM blocks.
    SpdgData,
    /// Masking baseline pairs (span corruption, or sentence reordering
    /// with --reorder).
    MlmData {
        /// Restrict to one language (default: all configured).
        #[arg(long)]
        lang: Option<String>,
        /// Emit the reordering variant instead of span corruption.
        #[arg(long)]
        reorder: bool,
    },
    /// Summarize an existing JSONL pair file (counts per objective and
    /// direction, printed to stdout).
    Stats { file: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPDG_LOG", "info"))
        .format_timestamp(None)
        .init();

    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build_global()
        .map_err(Failure::config)?;

    // `stats` only reads an existing output file; everything else needs the
    // full run configuration.
    if let Command::Stats { file } = &cli.command {
        return commands::stats(file);
    }

    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::config(anyhow!("--config is required for this command")))?;
    let config = PipelineConfig::load(config_path)?;
    let rt = Runtime::build(config, cli.seed, cli.pairs.as_deref())?;

    match cli.command {
        Command::Calibrate => {
            let dir = cli
                .output
                .or_else(|| rt.config.output.clone())
                .unwrap_or_else(|| PathBuf::from("."));
            commands::calibrate(&rt, &dir, cli.limit)
        }
        Command::Wbw { src, tgt } => {
            let output = commands::resolve_output(cli.output, rt.config.output.as_deref())?;
            commands::wbw(&rt, &src, &tgt, &output, cli.limit)
        }
        Command::DenoiseData { lang } => {
            let output = commands::resolve_output(cli.output, rt.config.output.as_deref())?;
            commands::denoise_data(&rt, &lang, &output, cli.limit)
        }
        Command::SpdgData => {
            let output = commands::resolve_output(cli.output, rt.config.output.as_deref())?;
            commands::spdg_data(&rt, &output, cli.limit)
        }
        Command::MlmData { lang, reorder } => {
            let output = commands::resolve_output(cli.output, rt.config.output.as_deref())?;
            commands::mlm_data(&rt, lang.as_deref(), reorder, &output, cli.limit)
        }
        Command::Stats { .. } => unreachable!("handled above"),
    }
}
