//! `fmp` — the command-line pipeline around the scoring library.
//!
//! Subcommands cover the full chain: simulate → ingest → enrich → dataset →
//! train → score → blacklist / gwol → eval / eval-blacklist. Every command
//! writes a manifest with the resolved arguments and input checksums next to
//! its primary output. Failures print one JSON object to stderr:
//!
//! ```text
//! {"error":{"kind":"config","message":"..."}}
//! ```
//!
//! Exit codes: 0 success, 1 configuration error, 2 command-line usage error
//! (plain text from the argument parser), 3 I/O error, 4 data or file-format
//! error, 5 internal error.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

mod commands;
mod io;
mod manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Data,
    Internal,
}

impl ErrorKind {
    fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Io => "io",
            ErrorKind::Data => "data",
            ErrorKind::Internal => "internal",
        }
    }

    fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 1,
            ErrorKind::Io => 3,
            ErrorKind::Data => 4,
            ErrorKind::Internal => 5,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> CliError {
        CliError { kind: ErrorKind::Config, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> CliError {
        CliError { kind: ErrorKind::Io, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> CliError {
        CliError { kind: ErrorKind::Data, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> CliError {
        CliError { kind: ErrorKind::Internal, message: message.into() }
    }
}

impl From<fmp::alerts::ParseError> for CliError {
    fn from(e: fmp::alerts::ParseError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<fmp::alerts::LineError> for CliError {
    fn from(e: fmp::alerts::LineError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<fmp::store::SnapshotError> for CliError {
    fn from(e: fmp::store::SnapshotError) -> Self {
        match e {
            fmp::store::SnapshotError::Io(_) => CliError::io(e.to_string()),
            fmp::store::SnapshotError::Corrupt(_) => CliError::data(e.to_string()),
        }
    }
}

impl From<fmp::store::ContextError> for CliError {
    fn from(e: fmp::store::ContextError) -> Self {
        match e {
            fmp::store::ContextError::Io(_) => CliError::io(e.to_string()),
            fmp::store::ContextError::BadLine { .. } => CliError::data(e.to_string()),
        }
    }
}

impl From<fmp::dataset::DatasetError> for CliError {
    fn from(e: fmp::dataset::DatasetError) -> Self {
        use fmp::dataset::DatasetError::*;
        match e {
            Io(_) => CliError::io(e.to_string()),
            BadFile(_) | EmptyDataset => CliError::data(e.to_string()),
            InvalidRatio(_) | AlreadySubsampled | InvalidFraction(_) => {
                CliError::config(e.to_string())
            }
        }
    }
}

impl From<fmp::model::ModelError> for CliError {
    fn from(e: fmp::model::ModelError) -> Self {
        use fmp::model::ModelError::*;
        match e {
            Io(_) => CliError::io(e.to_string()),
            VersionMismatch { .. } | CorruptModel(_) | SchemaMismatch { .. }
            | DegenerateData(_) => CliError::data(e.to_string()),
            Config(_) | Domain(_) | NonFinite => CliError::config(e.to_string()),
        }
    }
}

impl From<fmp::blacklist::BlacklistError> for CliError {
    fn from(e: fmp::blacklist::BlacklistError) -> Self {
        use fmp::blacklist::BlacklistError::*;
        match e {
            Io(_) => CliError::io(e.to_string()),
            MalformedList { .. } => CliError::data(e.to_string()),
            Config(_) | CategoryMismatch => CliError::config(e.to_string()),
        }
    }
}

impl From<fmp::simgen::SimgenError> for CliError {
    fn from(e: fmp::simgen::SimgenError) -> Self {
        use fmp::simgen::SimgenError::*;
        match e {
            Io(_) => CliError::io(e.to_string()),
            BadFile(_) => CliError::data(e.to_string()),
            Config(_) | OutOfRange { .. } => CliError::config(e.to_string()),
        }
    }
}

fn parse_category(s: &str) -> Result<fmp::alerts::Category, String> {
    s.parse().map_err(|_| format!("unknown category {s:?} (expected scan or access)"))
}

#[derive(Parser)]
#[command(
    name = "fmp",
    version,
    about = "Future Maliciousness Probability scoring and predictive blacklists"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic alert stream and its ground truth.
    Simulate {
        /// Scenario JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; receives alerts.jsonl and truth.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Ingest line-delimited alerts into a store snapshot (created or
    /// merged into when it already exists).
    Ingest {
        #[arg(long)]
        alerts: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Attach enrichment records and/or context maps to a snapshot.
    Enrich {
        #[arg(long)]
        snapshot: PathBuf,
        /// Line-delimited enrichment JSON.
        #[arg(long)]
        enrichment: Option<PathBuf>,
        /// Directory with asn_map.csv, cc_map.csv, asn_sizes.csv, cc_sizes.csv.
        #[arg(long)]
        maps: Option<PathBuf>,
    },
    /// Build a labeled dataset over a list of prediction times.
    Dataset {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, value_parser = parse_category)]
        category: fmp::alerts::Category,
        /// File of RFC 3339 prediction times, one per line.
        #[arg(long = "t0-list")]
        t0_list: PathBuf,
        /// Output directory; receives features.csv and dataset.json.
        #[arg(long)]
        out: PathBuf,
        /// History window length in days.
        #[arg(long, default_value_t = 7)]
        w_h: u32,
        /// Prediction window length in days.
        #[arg(long, default_value_t = 1)]
        w_p: u32,
        /// EWMA smoothing factor.
        #[arg(long, default_value_t = 0.25)]
        alpha: f64,
    },
    /// Split, subsample and train a class-probability estimator.
    Train {
        /// Dataset directory written by `dataset`.
        #[arg(long)]
        dataset: PathBuf,
        /// Estimator kind: logreg or gbdt.
        #[arg(long, default_value = "gbdt")]
        model: String,
        #[arg(long)]
        out: PathBuf,
        /// Held-out fraction (0 disables the split).
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        /// Where the held-out split is written (default: <dataset>/test).
        #[arg(long)]
        test_out: Option<PathBuf>,
        /// Negatives kept per positive when subsampling.
        #[arg(long, default_value_t = 1.0)]
        subsample_ratio: f64,
        /// Train on the split as-is, without balancing.
        #[arg(long)]
        no_subsample: bool,
        /// Base seed; the split uses seed, subsampling seed+1, training seed+2.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Boosting rounds (gbdt).
        #[arg(long, default_value_t = 200)]
        trees: usize,
        /// Maximum tree depth (gbdt).
        #[arg(long, default_value_t = 7)]
        depth: usize,
        /// Step size; defaults to 0.1 for gbdt and 0.3 for logreg.
        #[arg(long)]
        learning_rate: Option<f64>,
        /// L2 regularization of leaf values (gbdt).
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Minimum samples per leaf (gbdt).
        #[arg(long, default_value_t = 20)]
        min_leaf: usize,
        /// Gradient-descent epochs (logreg).
        #[arg(long, default_value_t = 1500)]
        epochs: usize,
    },
    /// Score IPs with a trained model.
    Score {
        #[arg(long)]
        model: PathBuf,
        /// Score every IP of this snapshot that is eligible at --t0.
        #[arg(long, requires = "t0", conflicts_with = "dataset")]
        snapshot: Option<PathBuf>,
        /// Prediction time (RFC 3339).
        #[arg(long)]
        t0: Option<String>,
        /// Score the samples of a dataset directory instead.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a blacklist from a score file.
    Blacklist {
        /// Score CSV written by `score`.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, conflicts_with = "threshold")]
        topn: Option<usize>,
        /// Keep every IP with score >= this value.
        #[arg(long)]
        threshold: Option<f64>,
        /// Overrides the generation time recorded in the score file.
        #[arg(long)]
        t0: Option<String>,
        /// Overrides the category recorded in the score file.
        #[arg(long, value_parser = parse_category)]
        category: Option<fmp::alerts::Category>,
        /// Output text file (one IPv4 per line); a JSON sidecar is written
        /// next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a global worst offender list from recent activity.
    Gwol {
        #[arg(long)]
        snapshot: PathBuf,
        /// Prediction time (RFC 3339).
        #[arg(long)]
        t0: String,
        /// History window in days (1 and 7 are the usual baselines).
        #[arg(long, default_value_t = 1)]
        window: u32,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, value_parser = parse_category)]
        category: fmp::alerts::Category,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against labeled samples: Brier, calibration, ROC.
    Eval {
        /// Prediction CSV from `score` (either form).
        #[arg(long)]
        pred: PathBuf,
        /// Dataset directory with the labeled samples.
        #[arg(long)]
        labels: PathBuf,
        /// Report JSON path; ROC and calibration CSVs are written next to it.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 10)]
        n_bins: usize,
        /// Bins smaller than this are ignored by the max-gap statistic.
        #[arg(long, default_value_t = 50)]
        min_count: u64,
    },
    /// Evaluate a blacklist's hits against a prediction day.
    EvalBlacklist {
        /// Blacklist text file (IPs or /24-or-longer CIDRs, one per line).
        #[arg(long)]
        list: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
        /// Generation time (RFC 3339); defaults to the list's JSON sidecar.
        #[arg(long)]
        t0: Option<String>,
        /// Category; defaults to the list's JSON sidecar.
        #[arg(long, value_parser = parse_category)]
        category: Option<fmp::alerts::Category>,
        /// Optional report path; the hit report always prints to stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = commands::run(cli.command) {
        let body =
            serde_json::json!({"error": {"kind": e.kind.as_str(), "message": e.message}});
        eprintln!("{body}");
        std::process::exit(e.kind.exit_code());
    }
}
