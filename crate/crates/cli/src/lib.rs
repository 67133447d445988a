//! Batch driver for the lrpae pipeline: data generation, training,
//! explanation, corruption validation, image evaluation and timing.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<lrpae_core::Error> for CliError {
    fn from(e: lrpae_core::Error) -> Self {
        use lrpae_core::Error as E;
        match e {
            E::Divergence { .. }
            | E::Degenerate(_)
            | E::Corruption(_)
            | E::Generation { .. }
            | E::UnfittedCalibration => CliError::Numeric(e.to_string()),
            E::Io(io) => CliError::Io(io),
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    GenData,
    Train,
    Explain,
    Validate,
    EvalImages,
    Bench,
}

#[derive(Debug, Parser)]
#[command(name = "lrpae", version, about = "Explain autoencoder reconstruction errors with LRP")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(&cli.config)?.with_overrides(cli.seed, cli.out.as_deref())?;
    match cli.command {
        Command::GenData => commands::gen_data(&cfg),
        Command::Train => commands::train_model(&cfg).map(drop),
        Command::Explain => commands::explain_sample(&cfg).map(drop),
        Command::Validate => commands::validate(&cfg).map(drop),
        Command::EvalImages => commands::eval_images(&cfg).map(drop),
        Command::Bench => commands::bench(&cfg).map(drop),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("lrpae: {e}");
            e.exit_code()
        }
    }
}
