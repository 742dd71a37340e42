//! The `innpar` command line: `train`, `eval`, `audit`, `reconstruct`,
//! `synth`.
//!
//! Exit codes: 0 success, 1 audit failure, 2 input or config error,
//! 3 numeric abort. `INNPAR_PRECISION=f32|f64` picks the element type
//! (default `f32`; gradient audits always run in `f64`).

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};

pub use config::{extract_overrides, CliConfig, DataConfig, Overrides};

pub const EXIT_OK: i32 = 0;
pub const EXIT_AUDIT_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "innpar",
    version,
    about = "Invertible PPG to ABP waveform reconstruction",
    after_help = "Any config field can be overridden with a dotted flag, e.g. \
                  --model.num_blocks 2 or --train.lr=1e-3. Flags win over --config."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write checkpoint, run log and merged config.
    Train(TrainArgs),
    /// Score a checkpoint on a segment file.
    Eval(EvalArgs),
    /// Invertibility, gradient or cost audit.
    Audit(AuditArgs),
    /// Map PPG rows to ABP rows or back.
    Reconstruct(ReconstructArgs),
    /// Write a synthetic segment file.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON config with optional `model`, `train` and `data` sections.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Segment file (`.bin`) or paired CSV (`.csv`, ABP in mmHg).
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    data: Option<PathBuf>,
    /// Train on this many synthetic segments instead of a file.
    #[arg(long)]
    synth: Option<usize>,
    /// Seed for synthetic data, initialisation and shuffling.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Where to write the JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Defaults to `config.json` next to the checkpoint when present.
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AuditMode {
    Roundtrip,
    Gradcheck,
    Flops,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long, value_enum)]
    mode: AuditMode,
    /// Audit this checkpoint instead of a fresh model.
    #[arg(long, conflicts_with = "seed")]
    checkpoint: Option<PathBuf>,
    /// Seed of the fresh model.
    #[arg(long)]
    seed: Option<u64>,
    /// Round-trip inputs.
    #[arg(long, default_value_t = 100)]
    inputs: usize,
    /// Pass threshold; defaults to 1e-3 / 1e-8 (roundtrip, f32 / f64) and
    /// 1e-4 (gradcheck).
    #[arg(long)]
    tolerance: Option<f64>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input CSV: `L` values per row (PPG for forward, ABP mmHg for
    /// inverse), or the `3L`-wide output of a forward run for inverse.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Direction::Forward)]
    direction: Direction,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 625)]
    length: usize,
    #[arg(long, default_value_t = 125.0)]
    rate: f32,
    /// Segment file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write a paired CSV (PPG then ABP in mmHg) here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    /// Reads `INNPAR_PRECISION`; unset means `f32`.
    pub fn from_env() -> Result<Self> {
        match std::env::var("INNPAR_PRECISION") {
            Err(_) => Ok(Precision::F32),
            Ok(v) => match v.trim().to_ascii_lowercase().as_str() {
                "f32" | "" => Ok(Precision::F32),
                "f64" => Ok(Precision::F64),
                other => Err(Error::config(
                    "INNPAR_PRECISION",
                    format!("{other:?} is not f32 or f64"),
                )),
            },
        }
    }
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NumericAbort(_) | Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}

/// Outcome of a command that ran to completion.
#[derive(Debug)]
pub(crate) enum Outcome {
    Ok,
    AuditFailed(String),
}

/// Parses `args` (without the program name) and runs the command, writing
/// to stdout and stderr. Returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    let args: Vec<String> = args
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let (rest, overrides) = match extract_overrides(args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let cli = match Cli::try_parse_from(std::iter::once("innpar".to_string()).chain(rest)) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = Precision::from_env().and_then(|precision| dispatch(cli.command, &overrides, precision));
    match result {
        Ok(Outcome::Ok) => EXIT_OK,
        Ok(Outcome::AuditFailed(detail)) => {
            eprintln!("audit failed: {detail}");
            EXIT_AUDIT_FAILED
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, overrides: &[(String, String)], precision: Precision) -> Result<Outcome> {
    use commands::*;
    macro_rules! typed {
        ($f:ident, $args:expr) => {
            match precision {
                Precision::F32 => $f::<f32>($args, overrides),
                Precision::F64 => $f::<f64>($args, overrides),
            }
        };
    }
    match command {
        Command::Train(a) => typed!(cmd_train, a),
        Command::Eval(a) => typed!(cmd_eval, a),
        Command::Audit(a) => match precision {
            Precision::F32 => cmd_audit::<f32>(a, overrides, 1e-3),
            Precision::F64 => cmd_audit::<f64>(a, overrides, 1e-8),
        },
        Command::Reconstruct(a) => typed!(cmd_reconstruct, a),
        Command::Synth(a) => cmd_synth(a),
    }
}
