//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

mod commands;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::evaluation::GmmSource;
use crate::learning::{InitMethod, TrainingConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hmmgmr", version, about = "HMM and HMM-GMR for merge interaction internal states")]
pub struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus and write its ground-truth model.
    Synth(SynthArgs),
    /// Build a corpus from track and label files.
    Ingest(IngestArgs),
    /// Fit an HMM (or a GMM) on the training split.
    Train(TrainArgs),
    /// Scan the number of states by BIC.
    SelectK(SelectKArgs),
    /// Write the belief timeline of one event.
    Decode(DecodeArgs),
    /// Write HMM-GMR or GMM-GMR predictions for events.
    Predict(PredictArgs),
    /// Run the feature-set sweep and/or the approach comparison.
    Evaluate(EvaluateArgs),
    /// Per-state ranges of the input features over dominant-state frames.
    StateRanges(StateRangesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Three merge phases over dv_lead, dx_lag, vx_ego, vy_ego.
    Merge,
    /// Merge phases plus noise channels dv_lag and dx_lead.
    MergeNoise,
    /// Two-feature corpus with three well-separated states.
    Separated,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "merge")]
    pub preset: Preset,
    /// Generator spec (JSON); replaces the preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub events: Option<usize>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub tracks: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Comma-separated features to extract (vy_ego is always included).
    #[arg(long, default_value = "dv_lead,dx_lag,vx_ego,vy_ego,dv_lag,dx_lead")]
    pub features: String,
    /// Frames per event after alignment; 0 keeps the native frames.
    #[arg(long, default_value_t = crate::data::DEFAULT_ALIGN_LEN)]
    pub align: usize,
    #[arg(long, default_value_t = crate::data::DEFAULT_TRAIN_FRACTION)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training options shared by several commands. Unset flags fall back to the
/// config file and then to the defaults.
#[derive(Debug, Args, Clone, Default)]
pub struct TrainOpts {
    /// JSON file with any of: k, init, max_iters, rel_tol, seed, reg_scale, inputs.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated input features; the corpus outputs stay outputs.
    #[arg(long)]
    pub inputs: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub init: Option<InitMethod>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub reg_scale: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    k: Option<usize>,
    init: Option<InitMethod>,
    max_iters: Option<usize>,
    rel_tol: Option<f64>,
    seed: Option<u64>,
    reg_scale: Option<f64>,
    inputs: Option<Vec<String>>,
}

impl TrainOpts {
    /// Resolves flags over the config file over the defaults.
    pub fn resolve(&self) -> Result<(TrainingConfig, Option<Vec<String>>)> {
        let file = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str::<ConfigFile>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => ConfigFile::default(),
        };
        let d = TrainingConfig::default();
        let cfg = TrainingConfig {
            k: self.k.or(file.k).unwrap_or(d.k),
            init: self.init.or(file.init).unwrap_or(d.init),
            max_iters: self.max_iters.or(file.max_iters).unwrap_or(d.max_iters),
            rel_tol: self.rel_tol.or(file.rel_tol).unwrap_or(d.rel_tol),
            seed: self.seed.or(file.seed).unwrap_or(d.seed),
            reg_scale: self.reg_scale.or(file.reg_scale).unwrap_or(d.reg_scale),
        };
        cfg.validate()?;
        let inputs = self.inputs.as_deref().map(split_list).or(file.inputs);
        Ok((cfg, inputs))
    }
}

pub(crate) fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Hmm,
    Gmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub opts: TrainOpts,
    #[arg(long, value_enum, default_value = "hmm")]
    pub kind: ModelKind,
    /// Events to train on.
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitChoice,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectKArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Candidate K values: a range `1-8` or a list `1,2,4`.
    #[arg(long, default_value = "1-8")]
    pub k_range: String,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitChoice,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub event: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// A single event; otherwise every event of `--split`.
    #[arg(long)]
    pub event: Option<String>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitChoice,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Input feature set for the sweep (comma-separated); repeat per set.
    #[arg(long = "feature-set")]
    pub feature_sets: Vec<String>,
    /// Run the four-way approach comparison on `--inputs`.
    #[arg(long)]
    pub compare: bool,
    /// Mixture used by GMM-GMR.
    #[arg(long, value_enum, default_value = "trained")]
    pub gmm_source: GmmSourceArg,
    /// Split manifest replacing the corpus's own.
    #[arg(long)]
    pub split_file: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GmmSourceArg {
    Trained,
    FromHmm,
}

impl From<GmmSourceArg> for GmmSource {
    fn from(g: GmmSourceArg) -> Self {
        match g {
            GmmSourceArg::Trained => GmmSource::Trained,
            GmmSourceArg::FromHmm => GmmSource::FromHmm,
        }
    }
}

#[derive(Debug, Args)]
pub struct StateRangesArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitChoice,
    #[arg(long)]
    pub out: PathBuf,
}

impl clap::builder::ValueParserFactory for InitMethod {
    type Parser = clap::builder::ValueParser;
    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| s.parse::<InitMethod>().map_err(|e| e.to_string()))
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        e if e.is_numeric() => EXIT_NUMERIC,
        Error::Init(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to standard error.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match commands::run(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
