//! `lpr`: licence-plate reading from the command line.
//!
//! Machine-readable output goes to stdout (or the file named by `--out`);
//! progress and errors go to stderr. Exit status is 0 on success, 1 when a
//! result fails an internal consistency check, 2 on I/O or configuration
//! errors.

mod commands;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum Failure {
    /// Bad input, unreadable file, invalid configuration.
    Io(String),
    /// The run completed but produced an inconsistent result.
    Invariant(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invariant(_) => 1,
            Failure::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Io(m) => write!(f, "error: {m}"),
            Failure::Invariant(m) => write!(f, "invariant violated: {m}"),
        }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

pub fn io_err(e: impl std::fmt::Display) -> Failure {
    Failure::Io(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "lpr", version, about = "Licence-plate reading pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read the plate in one image and print the reading as JSON.
    Run(commands::RunArgs),
    /// Read every frame of a manifest or directory; writes a JSONL trace.
    Batch(commands::BatchArgs),
    /// Generate a synthetic plate corpus.
    Synth(commands::SynthArgs),
    /// Score the pipeline against a manifest.
    Eval(commands::EvalArgs),
    /// Run the standard stage ablation over a manifest.
    Ablate(commands::AblateArgs),
    /// Run geometric rectification on a plate crop.
    Rectify(commands::StageArgs),
    /// Run photometric correction on a plate crop.
    Enhance(commands::StageArgs),
    /// Run the fast character reader on a plate crop.
    Ocr(commands::StageArgs),
}

/// Options that map onto [`lpr_core::PipelineConfig`]. Precedence, lowest
/// first: defaults, `--config`, environment, dedicated flags, `--set`.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one dotted key, e.g. `--set rectify.severe_fr=1.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// stages.rectify = false
    #[arg(long)]
    pub no_rectify: bool,
    /// stages.photometric = false
    #[arg(long)]
    pub no_photometric: bool,
    /// stages.fast_ocr = false
    #[arg(long)]
    pub no_fast_ocr: bool,
    /// stages.vlm = false
    #[arg(long)]
    pub no_vlm: bool,
    /// detection.all_plates = true
    #[arg(long)]
    pub all_plates: bool,
    /// detection.conf_threshold
    #[arg(long, value_name = "P")]
    pub conf_threshold: Option<f64>,
    /// vlm.endpoint (also settable through LPR_VLM_ENDPOINT)
    #[arg(long, value_name = "URL")]
    pub vlm_endpoint: Option<String>,
    /// vlm.timeout_ms
    #[arg(long, value_name = "MS")]
    pub vlm_timeout_ms: Option<u64>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    pub print_config: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Batch(a) => commands::batch(a),
        Command::Synth(a) => commands::synth(a),
        Command::Eval(a) => commands::eval(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Rectify(a) => commands::stage(commands::Stage::Rectify, a),
        Command::Enhance(a) => commands::stage(commands::Stage::Enhance, a),
        Command::Ocr(a) => commands::stage(commands::Stage::Ocr, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}
