//! Command-line surface for the adjustment library: fit a model from a CSV
//! archive, apply it, run simulation benchmarks, and evaluate windowed
//! empirical excess certainty.

mod data;
mod model_file;

use clap::{Args, Parser, Subcommand};
use ecap::error::EcapError;
use ecap::estimator;
use ecap::evaluation::{self, Window};
use ecap::model::Probability;
use ecap::simulation::{self, ExperimentSpec};
use std::path::PathBuf;
use std::process::ExitCode;

use data::{read_forecasts, read_samples, OutputFormat};
use model_file::ModelFile;

// exit codes: 0 success, 2 input/config error, 3 empty result, 4 numeric
// failure
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn empty(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }

    fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }

    fn io(context: &str, err: std::io::Error) -> Self {
        Self::config(format!("{context}: {err}"))
    }
}

// Library errors map to input/config problems except genuine numeric
// failures; commands that treat thin data as an empty result handle
// InsufficientData themselves before reaching this.
impl From<EcapError> for CliError {
    fn from(e: EcapError) -> Self {
        match e {
            EcapError::Numeric(_) => CliError::numeric(e.to_string()),
            _ => CliError::config(e.to_string()),
        }
    }
}

type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(
    name = "ecap",
    about = "Selection-bias adjustment for large collections of probability estimates",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an adjustment model from a CSV of probability estimates
    Fit(FitArgs),
    /// Apply a fitted model to a CSV of probability estimates
    Adjust(AdjustArgs),
    /// Run a simulation benchmark described by a JSON experiment file
    Simulate(SimulateArgs),
    /// Windowed empirical excess certainty of a forecast archive
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV with a p_tilde column and optionally z, group, weight
    #[arg(long)]
    input: PathBuf,
    /// Output model file (JSON)
    #[arg(long)]
    output: PathBuf,
    /// Optional JSON file overriding fitting settings
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the cross-validation fold shuffle
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AdjustArgs {
    #[arg(long)]
    input: PathBuf,
    /// Fitted model file produced by `ecap fit`
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment description (JSON)
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Master seed for all replicate streams (required for reproducibility)
    #[arg(long)]
    seed: u64,
    /// Optional per-replicate detail table
    #[arg(long)]
    replicate_detail: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Fitted model used to adjust the archive before evaluation
    #[arg(long, conflicts_with = "unadjusted")]
    model: Option<PathBuf>,
    /// Evaluate the raw estimates without any adjustment
    #[arg(long)]
    unadjusted: bool,
    /// Selection window on the flipped scale, as `lo,hi` with hi <= 0.5
    #[arg(long)]
    window: String,
    /// Column carrying the group key for a per-group curve
    #[arg(long)]
    group_by: Option<String>,
    /// Confidence level of the bootstrap interval
    #[arg(long, default_value_t = 0.9)]
    level: f64,
    /// Number of bootstrap resamples
    #[arg(long, default_value_t = 2000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Adjust(args) => cmd_adjust(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn cmd_fit(args: FitArgs) -> CliResult {
    let config = model_file::load_fit_config(args.config.as_deref(), args.seed)?;
    let samples = read_samples(&args.input)?;
    let model = estimator::fit(&samples, &config)?;
    model_file::save(&args.output, &model)?;
    Ok(())
}

fn cmd_adjust(args: AdjustArgs) -> CliResult {
    let model = ModelFile::load(&args.model)?.into_model()?;
    let samples = read_samples(&args.input)?;
    let rows: Vec<estimator::AdjustedProbability> = samples
        .iter()
        .map(|s| estimator::adjust(&model, s.p_tilde))
        .collect();
    data::write_adjusted(&args.output, &rows, args.format)
}

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::io("reading experiment config", e))?;
    let mut spec: ExperimentSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("parsing experiment config: {e}")))?;
    spec.rng_seed = args.seed;
    spec.validate()?;
    let result = simulation::run_experiment(&spec)?;
    data::write_summaries(&args.output, &result.summaries, args.format)?;
    if let Some(path) = &args.replicate_detail {
        data::write_records(path, &result.records, args.format)?;
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult {
    if args.model.is_none() && !args.unadjusted {
        return Err(CliError::config(
            "pass either --model <file> or --unadjusted",
        ));
    }
    let (lo, hi) = args
        .window
        .split_once(',')
        .and_then(|(a, b)| Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?)))
        .ok_or_else(|| CliError::config("window must look like `0,0.02`"))?;
    let window = Window::new(lo, hi)?;

    let records = read_forecasts(&args.input, args.group_by.as_deref())?;
    let adjusted: Vec<Probability> = match &args.model {
        Some(path) => {
            let model = ModelFile::load(path)?.into_model()?;
            records
                .iter()
                .map(|r| estimator::adjust(&model, r.p_tilde).p_hat)
                .collect()
        }
        None => records.iter().map(|r| r.p_tilde).collect(),
    };

    let curve = evaluation::grouped_ec_curve(
        &records, &adjusted, &window, args.level, args.draws, args.seed,
    )?;
    if curve.iter().all(|g| g.n_delta == 0) {
        return Err(CliError::empty(format!(
            "no records fall inside the window [{lo}, {hi}] on the flipped scale"
        )));
    }
    data::write_ec_curve(&args.output, &curve, args.format)
}
