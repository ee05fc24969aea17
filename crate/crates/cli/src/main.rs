//! `fhcure`: fit, simulate and evaluate finite-horizon mixture cure models.
//!
//! Every command prints a JSON result document (`command`, `config`,
//! `estimates`, `intervals`, `diagnostics`, `seed`) on stdout, or to `--out`
//! for the commands whose only product is that document. Tables go to CSV.
//! Failures print `{"error": {...}}` on stderr and exit with 1 (usage or
//! configuration), 2 (data) or 3 (numerical failure).

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fhcure::CureError;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "fhcure", version, about = "Finite-horizon mixture cure models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the finite-horizon model by EM (MAP) with Laplace intervals.
    Fit(FitArgs),
    /// Fit the conventional semiparametric mixture cure model.
    FitConventional(ConventionalArgs),
    /// Generate a Scenario A or B dataset as CSV.
    Simulate(SimulateArgs),
    /// Monte Carlo study of a Scenario A design; writes bias/SD/CP/width.
    Replicate(ReplicateArgs),
    /// Refit over a grid of horizons; writes a long coefficient table.
    Sweep(SweepArgs),
    /// Kaplan-Meier curve, RMISE of fitted baselines, or holdout AUC.
    Evaluate(EvaluateArgs),
    /// Find the intercept and censoring rate hitting target fractions.
    Calibrate(CalibrateArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct InputArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "event")]
    pub event_col: String,
    /// Feature columns; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Columns to one-hot encode (most frequent level is the reference).
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SplitArgs {
    /// Fit on this fraction of rows; the rest is held out for `evaluate`.
    #[arg(long)]
    pub split: Option<f64>,
    /// Seed for the split. Drawn from entropy and echoed when absent.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PenaltyArgs {
    /// Fixed precision of the spline-weight prior.
    #[arg(long, conflicts_with = "empirical_bayes")]
    pub lambda: Option<f64>,
    /// Choose the precision by maximizing the Laplace evidence.
    #[arg(long)]
    pub empirical_bayes: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Horizon c.
    #[arg(long, allow_negative_numbers = true)]
    pub c: f64,
    /// Number of spline basis functions.
    #[arg(long = "K", default_value_t = 7)]
    pub k: usize,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Floor the precision matrix spectrum instead of failing when it is
    /// not positive definite.
    #[arg(long)]
    pub force_intervals: bool,
    /// Write the result document here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ConventionalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    A1,
    A2,
    B,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    /// Sample size; overrides the preset or config file.
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON scenario configuration replacing the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replication index; selects an independent stream for Scenario A.
    #[arg(long, default_value_t = 0)]
    pub replication: u64,
    /// Dataset CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the latent truth (Scenario A: z, T, C; Scenario B: T).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ReplicateArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    #[arg(long = "M")]
    pub m: usize,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "K", default_value_t = 7)]
    pub k: usize,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Summary table CSV (parameter, truth, bias, sd, cp, width).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-replication estimates CSV.
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Horizons, as a list `0.5,1,2` or a range `start:stop:step`.
    #[arg(long)]
    pub grid: String,
    #[arg(long = "K", default_value_t = 7)]
    pub k: usize,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Long-format CSV (c, coefficient, estimate, low, high).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Km,
    Rmise,
    Auc,
}

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Data CSV (km, auc).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "event")]
    pub event_col: String,
    /// Result documents from `fit` or `fit-conventional` (rmise, auc).
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    /// Shape of the true baseline `1 - (t/c)^eta` (rmise).
    #[arg(long, default_value_t = 1.5)]
    pub eta: f64,
    /// Grid points for the integrated squared error (rmise).
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    /// AUC window; `tau2` defaults to the first model's horizon.
    #[arg(long)]
    pub tau1: Option<f64>,
    #[arg(long)]
    pub tau2: Option<f64>,
    /// Table CSV (km curve or AUC by time).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct CalibrateArgs {
    #[arg(long, value_enum, default_value = "a1")]
    pub scenario: Scenario,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0.70)]
    pub target_event: f64,
    #[arg(long, default_value_t = 0.30)]
    pub target_censor: f64,
    #[arg(long, default_value_t = 100_000)]
    pub pilot_n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            kind: "usage".into(),
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "data".into(),
            message: message.into(),
        }
    }
}

impl From<CureError> for Failure {
    fn from(e: CureError) -> Self {
        let code = if e.is_numeric() {
            3
        } else {
            match e {
                CureError::InvalidParameter(_) | CureError::Domain { .. } | CureError::InvalidBasisSize(_) => 1,
                _ => 2,
            }
        };
        Self {
            code,
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        CureError::from(e).into()
    }
}

fn report(f: &Failure) -> ExitCode {
    let body = serde_json::json!({
        "error": { "kind": f.kind, "message": f.message, "exit_code": f.code }
    });
    eprintln!("{body}");
    ExitCode::from(f.code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.render().to_string();
            return report(&Failure::usage(msg.trim()));
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::FitConventional(a) => commands::fit_conventional(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Replicate(a) => commands::replicate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Calibrate(a) => commands::calibrate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(&f),
    }
}
