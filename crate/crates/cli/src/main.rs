use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(
    name = "hnbm",
    version,
    about = "Heterogeneous Newton boosting with tree and random Fourier feature learners"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an ensemble and write the model file.
    Train(TrainArgs),
    /// Score a feature CSV with a saved model.
    Predict(PredictArgs),
    /// Successive-halving search over a hyper-parameter space.
    Tune(TuneArgs),
    /// Check the convergence statements on a finite hypothesis matrix.
    Verify(VerifyArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Label column: header name or zero-based index.
    #[arg(long, default_value = "0")]
    label: String,
    /// Optional sample-weight column.
    #[arg(long)]
    weight: Option<String>,
    /// Treat the first line as data rather than a header.
    #[arg(long)]
    no_header: bool,
}

#[derive(Debug, Args)]
struct ObjectiveArgs {
    /// mse or logloss.
    #[arg(long, default_value = "mse")]
    objective: String,
    /// L2 term added to the logistic loss.
    #[arg(long = "logloss_lambda", default_value_t = 0.0)]
    logloss_lambda: f64,
}

#[derive(Debug, Args)]
struct BoostArgs {
    #[arg(long = "num_round", default_value_t = 100)]
    num_round: usize,
    #[arg(long = "learning_rate", default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long = "tree_probability", default_value_t = 0.9)]
    tree_probability: f64,
    #[arg(long = "min_max_depth", default_value_t = 1)]
    min_max_depth: usize,
    #[arg(long = "max_max_depth", default_value_t = 6)]
    max_max_depth: usize,
    #[arg(long = "lambda_l2", default_value_t = 0.01)]
    lambda_l2: f64,
    #[arg(long, default_value_t = 1.0)]
    subsample: f64,
    #[arg(long, default_value_t = 1.0)]
    colsample: f64,
    #[arg(long, default_value_t = 1e-3)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long = "n_components", default_value_t = 10)]
    n_components: usize,
    #[arg(long = "fit_intercept", default_value_t = false, action = clap::ArgAction::Set)]
    fit_intercept: bool,
    #[arg(long = "hist_nbins", default_value_t = 256)]
    hist_nbins: usize,
    #[arg(long = "early_stopping_rounds")]
    early_stopping_rounds: Option<usize>,
    #[arg(long = "random_state", default_value_t = 0)]
    random_state: u64,
    #[arg(long = "base_score")]
    base_score: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training CSV.
    #[arg(long)]
    train: PathBuf,
    /// Validation CSV, used for the loss trace and early stopping.
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    model: PathBuf,
    /// Output per-round loss trace (CSV).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    objective: ObjectiveArgs,
    #[command(flatten)]
    boost: BoostArgs,
    /// Compute threads.
    #[arg(long = "num-cores")]
    num_cores: Option<usize>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV; every column is a feature unless --drop is given.
    #[arg(long)]
    data: PathBuf,
    /// Column to ignore, such as a label column.
    #[arg(long)]
    drop: Option<String>,
    #[arg(long)]
    no_header: bool,
    /// Output CSV.
    #[arg(long)]
    output: PathBuf,
    /// Add a probability column (logloss models only).
    #[arg(long)]
    probability: bool,
    #[arg(long = "num-cores")]
    num_cores: Option<usize>,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[arg(long)]
    train: PathBuf,
    /// Validation CSV; required unless --cv-folds is set.
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Cross-validate on the training data with this many folds.
    #[arg(long = "cv-folds")]
    cv_folds: Option<usize>,
    /// Search-space JSON; the built-in booster ranges when omitted.
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    n0: usize,
    #[arg(long, default_value_t = 4.0)]
    eta: f64,
    #[arg(long = "r-min", default_value_t = 0.25)]
    r_min: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "num-cores", default_value_t = 1)]
    num_cores: usize,
    /// Output JSON with the winning configuration.
    #[arg(long)]
    best: PathBuf,
    /// Output trial log (CSV).
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    objective: ObjectiveArgs,
    #[command(flatten)]
    boost: BoostArgs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Instance JSON file.
    #[arg(long, conflicts_with = "builtin")]
    instance: Option<PathBuf>,
    /// Built-in instance name.
    #[arg(long)]
    builtin: Option<String>,
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// auto, grid or analytic.
    #[arg(long, default_value = "auto")]
    angle: String,
    #[arg(long = "num-cores")]
    num_cores: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// linear, axis-aligned or rbf.
    #[arg(long, default_value = "rbf")]
    generator: String,
    /// regression or classification.
    #[arg(long, default_value = "regression")]
    task: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

/// Failure of a subcommand, mapped to the process exit code.
enum Failure {
    User(String),
    Internal(String),
    Check,
}

impl From<hnbm::Error> for Failure {
    fn from(e: hnbm::Error) -> Self {
        if e.is_internal() {
            Failure::Internal(e.to_string())
        } else {
            Failure::User(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Tune(a) => commands::tune(a),
        Command::Verify(a) => commands::verify(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check) => ExitCode::from(2),
    }
}
