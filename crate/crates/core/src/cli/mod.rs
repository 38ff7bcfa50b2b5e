//! `viref` command line: synthesize a corpus, train, generate, comprehend,
//! evaluate and gradient-check.
//!
//! Failures print one JSON object on stderr,
//! `{"error":{"kind":…,"code":…,"message":…}}`, and exit with the code.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::run_command;
pub use config::{ModelSettings, PathSettings, RunConfig};

use crate::error::Error;
use crate::models::ModelVariant;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_MISSING_FILE: i32 = 4;
pub const EXIT_DATA: i32 = 5;
pub const EXIT_RUNTIME: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "viref", version, about = "Relational referring expressions for object pairs in video")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub variant: Option<ModelVariant>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory of the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 3)]
    pub beam: usize,
    #[arg(long = "max-len", global = true, default_value_t = crate::data::MAX_RE_LEN)]
    pub max_len: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train a variant; writes the checkpoint and loss history.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Beam-search expressions for pairs (default: the test split).
    Generate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated pair ids.
        #[arg(long, value_delimiter = ',')]
        pairs: Vec<String>,
    },
    /// Rank the pairs of a video for query expressions.
    Comprehend {
        #[command(flatten)]
        common: Common,
        /// Lines of `pair_id<TAB>expression`; default: one query per test pair.
        #[arg(long)]
        queries: Option<PathBuf>,
    },
    /// Generation and comprehension over the test split, with reports.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference gradient check of every variant at a tiny size.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// LSTM depth of the checked models.
        #[arg(long, default_value_t = 2)]
        layers: usize,
    },
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::MissingFile(_) => EXIT_MISSING_FILE,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING_FILE,
        Error::Load { .. }
        | Error::Parse { .. }
        | Error::Json(_)
        | Error::KeyMismatch(_)
        | Error::MalformedSequence(_)
        | Error::InvalidToken { .. } => EXIT_DATA,
        _ => EXIT_RUNTIME,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::ShapeMismatch { .. } => "shape_mismatch",
        Error::Config(_) => "config",
        Error::DegenerateBatch(_) => "degenerate_batch",
        Error::Contract(_) => "contract",
        Error::NonFinite(_) => "non_finite",
        Error::Diverged { .. } => "diverged",
        Error::UnsupportedVariant { .. } => "unsupported_variant",
        Error::InvalidToken { .. } => "invalid_token",
        Error::MalformedSequence(_) => "malformed_sequence",
        Error::Empty(_) => "empty",
        Error::Load { .. } => "load",
        Error::Parse { .. } => "parse",
        Error::MissingFile(_) => "missing_file",
        Error::KeyMismatch(_) => "key_mismatch",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

pub fn error_line(kind: &str, code: i32, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "code": code, "message": message } }).to_string()
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code. Results go to `stdout`, error lines to `stderr`.
pub fn run<I, S>(argv: I, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            let _ = writeln!(stderr, "{}", error_line("usage", EXIT_USAGE, first));
            return EXIT_USAGE;
        }
    };
    match run_command(&cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            let _ = writeln!(stderr, "{}", error_line(error_kind(&e), code, &e.to_string()));
            code
        }
    }
}
