//! `pfpca`: fit smoothed principal components, run the method-comparison
//! simulation study, and evaluate fitted weight functions.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
//! failure during fitting.

mod commands;
mod files;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pfpca_core::Error;

#[derive(Parser)]
#[command(
    name = "pfpca",
    about = "Functional PCA by penalized rank-one approximation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit smoothed principal components to a CSV data matrix.
    Fit(FitArgs),
    /// Run the MPDC vs SPDR Monte-Carlo comparison study.
    Simulate(SimulateArgs),
    /// Evaluate fitted weight functions at arbitrary points.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct FitArgs {
    /// CSV matrix, one row per curve.
    #[arg(long)]
    input: std::path::PathBuf,

    /// Treat the first CSV row as the observation times.
    #[arg(long, conflicts_with = "grid_file")]
    header_grid: bool,

    /// One-column CSV file of observation times.
    #[arg(long)]
    grid_file: Option<std::path::PathBuf>,

    /// Number of components to extract.
    #[arg(long, short = 'k')]
    components: usize,

    /// Smoothing-parameter criterion for MPDC.
    #[arg(long, default_value = "cv", value_parser = ["cv", "gcv"])]
    criterion: String,

    /// Extraction method.
    #[arg(long, default_value = "mpdc", value_parser = ["mpdc", "spdr"])]
    method: String,

    /// Input transform applied before centering.
    #[arg(long, default_value = "none", value_parser = ["none", "sqrt-count"])]
    transform: String,

    /// Skip column centering (data already centered).
    #[arg(long)]
    no_center: bool,

    /// Explicit comma-separated candidate alphas.
    #[arg(long, conflicts_with = "alpha_powers")]
    alphas: Option<String>,

    /// Candidate grid {0} plus 1.5^i for i in MIN:MAX.
    #[arg(long, value_name = "MIN:MAX")]
    alpha_powers: Option<String>,

    /// Directory for result.json, loading/trace CSVs and the mean curve.
    #[arg(long)]
    out_dir: std::path::PathBuf,

    /// Also dump the penalty matrix and its eigendecomposition as CSV.
    #[arg(long)]
    dump_penalty: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 101)]
    n: usize,
    #[arg(long, default_value_t = 101)]
    m: usize,
    #[arg(long, default_value_t = 20.0)]
    sigma1: f64,
    #[arg(long, default_value_t = 10.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 4.0)]
    sigma: f64,
    #[arg(long, default_value_t = -1.0)]
    t_min: f64,
    #[arg(long, default_value_t = 1.0)]
    t_max: f64,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    #[arg(long, default_value_t = 5)]
    seed: u64,

    /// Add the built-in mean curve 5 sin(2 pi t) to every generated row
    /// (the study then estimates it by column centering).
    #[arg(long, conflicts_with = "mean_file")]
    with_mean: bool,

    /// Add a mean curve read from a one-column CSV file.
    #[arg(long)]
    mean_file: Option<std::path::PathBuf>,

    /// Directory for report.json and the summary tables.
    #[arg(long)]
    out_dir: std::path::PathBuf,

    /// Also write this replicate's raw matrix (with the grid as header).
    #[arg(long, value_name = "INDEX")]
    dump_replicate: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// result.json produced by `pfpca fit`.
    #[arg(long)]
    result: std::path::PathBuf,

    /// 1-based component indices, comma separated (default: all).
    #[arg(long)]
    components: Option<String>,

    /// Explicit comma-separated evaluation points.
    #[arg(long, conflicts_with_all = ["range", "num"])]
    points: Option<String>,

    /// Uniform evaluation interval MIN:MAX (with --num).
    #[arg(long, requires = "num")]
    range: Option<String>,

    /// Number of uniform evaluation points (with --range).
    #[arg(long, requires = "range")]
    num: Option<usize>,

    /// Output CSV path.
    #[arg(long)]
    output: std::path::PathBuf,
}

/// Input and configuration problems exit with 2; numerical failures
/// inside the fit exit with 3.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::EigenFailure
        | Error::ZeroMatrix
        | Error::DegenerateInitialization
        | Error::ZeroScores
        | Error::DegenerateLeverage { .. }
        | Error::SingularReducedSystem { .. }
        | Error::AllScoresFailed
        | Error::AllZeroDiffs
        | Error::TooManyFailures { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("PFPCA_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global()
                .ok();
        }
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => commands::fit(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("pfpca: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
