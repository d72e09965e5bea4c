mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "horouf", version, about = "Arabic letter classification on speech embeddings, with PGD robustness tooling")]
struct Cli {
    /// Settings file with a section per subcommand and an optional [global] section.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Emit progress and errors as JSON lines.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads for parallel sections (default: logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Assign train/val/test splits to a manifest.
    Split(commands::SplitArgs),
    /// Trim leading and trailing silence from every clip in a manifest.
    Trim(commands::TrimArgs),
    /// Add augmented copies of every training clip.
    Augment(commands::AugmentArgs),
    /// Mean-pool frame embeddings into train/val/test datasets.
    Pool(commands::PoolArgs),
    /// Generate a synthetic Gaussian-cluster embedding corpus.
    Synth(commands::SynthArgs),
    /// Train the MLP classifier, optionally with PGD adversarial training.
    Train(commands::TrainArgs),
    /// Perturb a dataset with PGD against a trained model.
    Attack(commands::AttackArgs),
    /// Clean accuracy, per-class accuracy and confusions.
    Eval(commands::EvalArgs),
    /// Robust accuracy of a standard and an adversarial model over an epsilon grid.
    Sweep(commands::SweepArgs),
    /// Markdown summary of eval and sweep outputs next to the reference figures.
    Report(commands::ReportArgs),
    /// Audio subcommands (aliases of trim and augment).
    Audio(AudioCmd),
    /// Embedding subcommands (alias of pool).
    Embed(EmbedCmd),
}

#[derive(Debug, Args)]
struct AudioCmd {
    #[command(subcommand)]
    command: AudioSub,
}

#[derive(Debug, Subcommand)]
enum AudioSub {
    Trim(commands::TrimArgs),
    Augment(commands::AugmentArgs),
}

#[derive(Debug, Args)]
struct EmbedCmd {
    #[command(subcommand)]
    command: EmbedSub,
}

#[derive(Debug, Subcommand)]
enum EmbedSub {
    Pool(commands::PoolArgs),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<horouf::Error> for CliError {
    fn from(e: horouf::Error) -> Self {
        use horouf::neural::NeuralError;
        if e.is_numeric() {
            return CliError::Numeric(e.to_string());
        }
        match &e {
            horouf::Error::Neural(NeuralError::InvalidConfig(_))
            | horouf::Error::Eval(horouf::eval::EvalError::BadEpsilons(_))
            | horouf::Error::Eval(horouf::eval::EvalError::Neural(NeuralError::InvalidConfig(_)))
            | horouf::Error::Oracle(horouf::oracle::OracleError::InvalidSpec(_)) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

macro_rules! from_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                horouf::Error::from(e).into()
            }
        }
    )*};
}

from_core!(
    horouf::corpus::CorpusError,
    horouf::audio::AudioError,
    horouf::embedding::EmbeddingError,
    horouf::neural::NeuralError,
    horouf::eval::EvalError,
    horouf::oracle::OracleError
);

/// Progress sink: plain text, or one JSON object per line.
pub struct Output {
    json: bool,
}

impl Output {
    pub fn event(&self, kind: &str, text: impl AsRef<str>, fields: serde_json::Value) {
        if self.json {
            let mut obj = json!({ "event": kind });
            if let (Some(o), serde_json::Value::Object(f)) = (obj.as_object_mut(), fields) {
                o.extend(f);
            }
            println!("{obj}");
        } else {
            println!("{}", text.as_ref());
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let out = Output { json: cli.json };
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Split(a) => commands::split(a, cfg, &out),
        Command::Trim(a) | Command::Audio(AudioCmd { command: AudioSub::Trim(a) }) => commands::trim(a, cfg, &out),
        Command::Augment(a) | Command::Audio(AudioCmd { command: AudioSub::Augment(a) }) => {
            commands::augment(a, cfg, &out)
        }
        Command::Pool(a) | Command::Embed(EmbedCmd { command: EmbedSub::Pool(a) }) => commands::pool(a, cfg, &out),
        Command::Synth(a) => commands::synth(a, cfg, &out),
        Command::Train(a) => commands::train(a, cfg, &out),
        Command::Attack(a) => commands::attack(a, cfg, &out),
        Command::Eval(a) => commands::eval(a, cfg, &out),
        Command::Sweep(a) => commands::sweep(a, cfg, &out),
        Command::Report(a) => commands::report(a, cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json {
                eprintln!("{}", json!({ "event": "error", "code": e.code(), "message": e.to_string() }));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.code())
        }
    }
}
