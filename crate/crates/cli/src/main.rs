//! `cardiowatch`: every pipeline stage from the command line.
//!
//! Exit status is 0 on success, 1 on a usage error (bad flag, bad config
//! file) and 2 on a data error (unreadable or malformed input).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cardiowatch",
    version,
    about = "ECG beat classification with boxplot false-alarm screening"
)]
pub struct Cli {
    /// Seed for every random choice (synthesis, balancing, splits).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// TOML file of flag values; top-level keys apply to every subcommand,
    /// `[name]` tables to one. Command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic single-lead record with ground truth.
    Synth(SynthArgs),
    /// High-pass and denoise one lead; writes `sample_index,mv`.
    Preprocess(PreprocessArgs),
    /// Locate P, QRS and T fiducials of one lead.
    Delineate(DelineateArgs),
    /// Nine-parameter feature CSV from records.
    Features(FeaturesArgs),
    /// Fit the beat classifier on a feature CSV.
    Train(TrainArgs),
    /// Posterior class probabilities for every beat of a feature CSV.
    Classify(ClassifyArgs),
    /// Full pipeline over one record: classify, screen, count, alarm.
    Run(RunArgs),
    /// Train/test experiment per lead with metrics and ROC output.
    Evaluate(EvaluateArgs),
    /// Boxplot statistics of a reference window, and per-beat flags.
    TukeyDebug(TukeyDebugArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PreprocessOpts {
    /// High-pass cutoff in Hz.
    #[arg(long, default_value_t = 0.5)]
    pub cutoff_hz: f64,
    /// FIR length (odd); defaults to about 1.6 s of taps.
    #[arg(long)]
    pub taps: Option<usize>,
    /// Denoising wavelet: haar, db2, db3 or db4.
    #[arg(long, default_value = "db4")]
    pub wavelet: String,
    /// Detail levels thresholded by the denoiser.
    #[arg(long, default_value_t = 2)]
    pub denoise_levels: usize,
}

#[derive(Debug, Clone, Args)]
pub struct DelineationOpts {
    /// Levels of the undecimated transform used for R detection.
    #[arg(long, default_value_t = 8)]
    pub uwt_levels: usize,
    /// R candidates below this fraction of the local band RMS are rejected.
    #[arg(long, default_value_t = 0.7)]
    pub peak_threshold: f64,
    /// Minimum spacing of two beats, in ms.
    #[arg(long, default_value_t = 200.0)]
    pub refractory_ms: f64,
    /// Waves smaller than this fraction of the R deflection count as absent.
    #[arg(long, default_value_t = 0.05)]
    pub wave_presence: f64,
}

#[derive(Debug, Clone, Args)]
pub struct RecordOpts {
    /// Record path without extension (a trailing `.hea` is accepted).
    #[arg(long, value_name = "PATH")]
    pub record: PathBuf,
    /// Annotation file extension.
    #[arg(long, default_value = "atr")]
    pub annotator: String,
    /// Lead name, matched case-insensitively.
    #[arg(long, default_value = "III")]
    pub lead: String,
}

#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    /// Equal-frequency bins per feature.
    #[arg(long, default_value_t = 8)]
    pub bins: usize,
    /// Laplace smoothing constant.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// `naive`, or extra edges such as `QRS_dur->QRS_amp,T_amp->ST_amp`.
    #[arg(long, default_value = "naive")]
    pub structure: String,
}

#[derive(Debug, Clone, Args)]
pub struct TukeyOpts {
    /// Reference window length in beats.
    #[arg(long, default_value_t = 200)]
    pub tukey_window: usize,
    /// Fence multiplier on the interquartile range.
    #[arg(long, default_value_t = 1.5)]
    pub k: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub beats: usize,
    #[arg(long, default_value_t = 75.0)]
    pub bpm: f64,
    /// normal, pvc, pac or mi. PVC and PAC records are bigeminal.
    #[arg(long, default_value = "normal")]
    pub morphology: String,
    /// White noise standard deviation in mV.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    /// Baseline drift amplitude in mV.
    #[arg(long, default_value_t = 0.0)]
    pub drift: f64,
    #[arg(long, default_value_t = 0.3)]
    pub drift_hz: f64,
    /// Sampling rate in Hz.
    #[arg(long, default_value_t = 250.0)]
    pub fs: f64,
    /// Relative per-beat jitter of amplitudes and widths.
    #[arg(long, default_value_t = 0.05)]
    pub jitter: f64,
    #[arg(long, default_value = "III")]
    pub lead: String,
    #[arg(long, default_value = "synth")]
    pub name: String,
    /// Directory for the record files and the ground-truth CSVs.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub input: RecordOpts,
    #[command(flatten)]
    pub pre: PreprocessOpts,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also dump the denoiser's wavelet coefficients as `level,index,value`.
    #[arg(long, value_name = "FILE")]
    pub coefficients: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DelineateArgs {
    #[command(flatten)]
    pub input: RecordOpts,
    #[command(flatten)]
    pub pre: PreprocessOpts,
    #[command(flatten)]
    pub del: DelineationOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Record paths (repeatable).
    #[arg(long, value_name = "PATH", action = clap::ArgAction::Append)]
    pub record: Vec<PathBuf>,
    /// Directories whose every `.hea` record is read (repeatable).
    #[arg(long, value_name = "DIR", action = clap::ArgAction::Append)]
    pub dir: Vec<PathBuf>,
    #[arg(long, default_value = "atr")]
    pub annotator: String,
    /// Leads to extract (repeatable or comma separated); default I, III, V1-V5.
    #[arg(long, value_delimiter = ',', action = clap::ArgAction::Append)]
    pub lead: Vec<String>,
    #[command(flatten)]
    pub pre: PreprocessOpts,
    #[command(flatten)]
    pub del: DelineationOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature CSV with a class column.
    #[arg(long)]
    pub features: PathBuf,
    /// Keep only this lead.
    #[arg(long)]
    pub lead: Option<String>,
    /// Undersample the majority class first (uses --seed).
    #[arg(long)]
    pub balance: bool,
    #[command(flatten)]
    pub train: TrainOpts,
    /// Model JSON; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    Frozen,
    Windowed,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: RecordOpts,
    #[arg(long)]
    pub model: PathBuf,
    /// Feature CSV whose Normal beats fill the boxplot window before the run;
    /// without it the window starts from the record's own predicted-Normal beats.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Beats per analysis window.
    #[arg(long, default_value_t = 20)]
    pub win: usize,
    /// An alarm fires when a class count exceeds this.
    #[arg(long, default_value_t = 3)]
    pub r: usize,
    #[arg(long, value_enum, default_value_t = Policy::Frozen)]
    pub policy: Policy,
    #[command(flatten)]
    pub tukey: TukeyOpts,
    #[command(flatten)]
    pub pre: PreprocessOpts,
    #[command(flatten)]
    pub del: DelineationOpts,
    /// Write verdicts.csv, alarms.jsonl, summary.json (and model.json for the
    /// windowed policy) here; without it alarms go to standard output.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Feature CSVs (repeatable).
    #[arg(long, action = clap::ArgAction::Append)]
    pub corpus: Vec<PathBuf>,
    /// Build a synthetic corpus of this many beats per class instead.
    #[arg(long, value_name = "N")]
    pub synthetic: Option<usize>,
    /// Noise of the synthetic corpus in mV.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    /// Leads to evaluate (repeatable or comma separated); default all shared leads present.
    #[arg(long, value_delimiter = ',', action = clap::ArgAction::Append)]
    pub lead: Vec<String>,
    /// Label for the corpus: edb, incart or synthetic.
    #[arg(long, default_value = "synthetic")]
    pub database: String,
    /// Undersample each lead's majority class (uses --seed).
    #[arg(long)]
    pub balance: bool,
    /// Training share of each class.
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub tukey: TukeyOpts,
    #[command(flatten)]
    pub pre: PreprocessOpts,
    #[command(flatten)]
    pub del: DelineationOpts,
    /// Metrics CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for `roc_<lead>_<class>.csv` files.
    #[arg(long)]
    pub roc_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TukeyDebugArgs {
    /// Reference feature CSV; its Normal-labelled beats fill the window.
    #[arg(long)]
    pub features: PathBuf,
    /// Use every beat of the reference, labelled or not.
    #[arg(long)]
    pub all_beats: bool,
    #[arg(long)]
    pub lead: Option<String>,
    #[command(flatten)]
    pub tukey: TukeyOpts,
    /// Statistics CSV (`param,Q1,Q3,lo,hi`); standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Feature CSV whose beats are checked against the fences.
    #[arg(long, value_name = "FILE")]
    pub check: Option<PathBuf>,
    /// Where the per-beat flags go; standard output when absent.
    #[arg(long, value_name = "FILE")]
    pub check_out: Option<PathBuf>,
}

/// A bad combination of flags that clap cannot express; exits 1 like a
/// parse error. Every other failure is a data error.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn parse_args(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    let cmd = Cli::command();
    let (config, sub) = config::locate(&args, &cmd);
    let args = match (config, sub) {
        (Some(path), Some((at, name))) => {
            let entries = config::load(path.as_ref())
                .map_err(|e| Cli::command().error(clap::error::ErrorKind::ValueValidation, e))?;
            config::merge(&args, &entries, &cmd, at, &name)
                .map_err(|e| Cli::command().error(clap::error::ErrorKind::ValueValidation, format!("config: {e}")))?
        }
        _ => args,
    };
    Cli::try_parse_from(args)
}

fn main() -> ExitCode {
    let cli = match parse_args(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        // a closed downstream pipe (`| head`) is not a failure
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<std::io::Error>()
                    .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            }) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            eprintln!("\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
