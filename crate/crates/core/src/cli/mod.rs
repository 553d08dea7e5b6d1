//! Command-line front end: `synth`, `train`, `verify` and `report`.
//!
//! Exit codes: 0 success, 1 invalid input, 2 unrealizable specification or
//! failed verification, 3 I/O error.

mod commands;
mod experiment;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use experiment::{EnvChoice, ExperimentConfig, ResolvedExperiment, Variant};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("specification is unrealizable; losing play: {}", .0.join(" "))]
    Unrealizable(Vec<String>),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Unrealizable(_) | CliError::VerificationFailed(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CliError::Validation(vec![msg.into()])
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }
}

#[derive(Debug, Parser)]
#[command(name = "shieldrl", version, about = "Shield synthesis and shielded tabular reinforcement learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a shield and write it with a synthesis report.
    Synth(SynthArgs),
    /// Train learners over a seed sweep and write run logs.
    Train(TrainArgs),
    /// Check a shield against its specification and abstraction.
    Verify(VerifyArgs),
    /// Summarize the run logs in a training output directory.
    Report(ReportArgs),
}

/// Selects a built-in environment.
#[derive(Debug, Default, Clone, Args)]
pub struct EnvArgs {
    /// tank, grid9x9, grid15x9, or grid (with --map)
    #[arg(long)]
    pub env: Option<String>,
    /// Grid map file; an `.cycle` file next to it gives the opponent loop.
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Tank energy table (CSV with level,energy rows).
    #[arg(long)]
    pub energy: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    /// Specification automaton (JSON); defaults to the environment's.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Abstraction automaton (JSON); defaults to the environment's.
    #[arg(long)]
    pub abstraction: Option<PathBuf>,
    /// preemptive or postposed
    #[arg(long, default_value = "preemptive")]
    pub placement: String,
    /// Output directory for shield.json and synth_report.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the game as Graphviz (small games only).
    #[arg(long)]
    pub dot: bool,
}

#[derive(Debug, Default, Clone, Args)]
pub struct TrainArgs {
    /// Flat TOML experiment file; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub abstraction: Option<PathBuf>,
    /// none, preemptive or postposed; comma-separated for several.
    #[arg(long)]
    pub placement: Option<String>,
    /// q or sarsa; comma-separated for several.
    #[arg(long)]
    pub algorithm: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, visible_alias = "seed")]
    pub seeds: Option<String>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub shield: PathBuf,
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub abstraction: Option<PathBuf>,
    /// exhaustive or randomized
    #[arg(long, default_value = "exhaustive")]
    pub mode: String,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_states: usize,
    #[arg(long, default_value_t = 1000)]
    pub walks: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// A directory written by `train` or `synth`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Report(a) => commands::report(&a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ =
        env_logger::Builder::from_env(env_logger::Env::default().filter_or("SHIELD_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
