//! `wisp`: transcription, evaluation and text normalisation from the shell.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use output::OutputFormat;

const EXIT_INPUT: u8 = 1;
const EXIT_INTERNAL: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad files, flags or data supplied by the user.
    Input(anyhow::Error),
    /// A fault inside the pipeline.
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Input(_) => EXIT_INPUT,
            Self::Internal(_) => EXIT_INTERNAL,
        }
    }

    pub fn error_ref(&self) -> &anyhow::Error {
        match self {
            Self::Input(e) | Self::Internal(e) => e,
        }
    }
}

pub type CmdResult = Result<(), Failure>;

/// Converts any error into an input failure.
pub trait InputContext<T> {
    fn input(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> InputContext<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "wisp", version, about = "Speech recognition with an encoder-decoder transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Transcribe (or translate) audio files.
    Transcribe(TranscribeArgs),
    /// Print the most likely spoken languages of each file.
    DetectLanguage(DetectArgs),
    /// Score a manifest and write per-item and summary reports.
    Evaluate(EvaluateArgs),
    /// Score a manifest at several signal-to-noise ratios.
    NoiseSweep(NoiseSweepArgs),
    /// Score a manifest under the cumulative decoding heuristic stack.
    Ablate(AblateArgs),
    /// Normalise text read from arguments or stdin, one line at a time.
    Normalize(NormalizeArgs),
    /// Write a config and randomly initialised weights.
    RandomWeights(RandomWeightsArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Weight file.
    #[arg(long)]
    pub model: PathBuf,
    /// Model config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Token rank file; the byte-level vocabulary when absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Transcribe,
    Translate,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long, value_enum, default_value = "transcribe")]
    pub task: TaskArg,
    /// Language code, or `auto` to detect it.
    #[arg(long, default_value = "auto")]
    pub language: String,
    #[arg(long, default_value_t = 5)]
    pub beam_size: usize,
    /// Decode at this single temperature instead of the fallback schedule.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Cap on tokens decoded per window.
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long)]
    pub no_timestamps: bool,
    #[arg(long)]
    pub no_condition_on_previous: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TranscribeArgs {
    /// Audio files (WAV).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[arg(long, value_enum, default_value = "txt")]
    pub output_format: OutputFormat,
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
    /// Files transcribed in parallel; all logical cores by default.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Languages listed per file.
    #[arg(long, default_value_t = 3)]
    pub top: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizerArg {
    /// English rules for English items, basic rules otherwise.
    Auto,
    English,
    Basic,
    None,
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    /// TSV manifest: audio_path, reference, tag, language.
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[arg(long, value_enum, default_value = "auto")]
    pub normalizer: NormalizerArg,
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: ManifestArgs,
}

#[derive(Debug, Args)]
pub struct NoiseSweepArgs {
    #[command(flatten)]
    pub common: ManifestArgs,
    /// Signal-to-noise ratios in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "40,30,20,10,5,0,-5,-10")]
    pub snr: Vec<f64>,
    /// `white`, or a WAV file of noise to mix in.
    #[arg(long, default_value = "white")]
    pub noise: String,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: ManifestArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    English,
    Basic,
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    /// Text to normalise; stdin is read when empty.
    pub text: Vec<String>,
    #[arg(long, value_enum, default_value = "english")]
    pub mode: ModeArg,
    /// Language for basic mode (letter spacing for zh, ja, th, lo, my).
    #[arg(long)]
    pub language: Option<String>,
}

#[derive(Debug, Args)]
pub struct RandomWeightsArgs {
    /// One of the standard sizes (tiny, base, small, medium, large).
    #[arg(long, conflicts_with_all = ["layers", "width", "heads"])]
    pub preset: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    /// Token rank file fixing the vocabulary size; byte-level when absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
    /// Base name of the written `.toml` and `.bin` files.
    #[arg(long, default_value = "model")]
    pub name: String,
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Transcribe(a) => commands::transcribe(a),
        Command::DetectLanguage(a) => commands::detect_language(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::NoiseSweep(a) => commands::noise_sweep(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Normalize(a) => commands::normalize(a),
        Command::RandomWeights(a) => commands::random_weights(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error_ref());
            ExitCode::from(f.code())
        }
    }
}
