mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "interbias", about = "Intersectional bias analysis for image classifiers")]
pub struct Cli {
    /// Cap on worker threads. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compute lighting and background attributes for every sample.
    ExtractAttrs(ExtractArgs),
    /// Tabulate the class x lighting x background intersections of a split.
    Stats(StatsArgs),
    /// Per-class augmentation weights N / (n_y * C).
    Weights(WeightsArgs),
    /// Bias-weighted augmentation of the training split.
    Augment(AugmentArgs),
    /// Fairness metrics for a predictions file.
    Evaluate(EvaluateArgs),
    /// Baseline versus treatment deltas with paired t-tests.
    Compare(CompareArgs),
    /// Aggregate saliency rasters and feature attributions.
    Attribution(AttributionArgs),
    /// Generate synthetic fixtures.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CannyArgs {
    #[arg(long, default_value_t = 1.4)]
    pub canny_sigma: f64,
    #[arg(long, default_value_t = 50.0)]
    pub canny_low: f64,
    #[arg(long, default_value_t = 150.0)]
    pub canny_high: f64,
    /// Resize to 224x224 before edge detection.
    #[arg(long)]
    pub resize_first: bool,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub canny: CannyArgs,
    /// Record undecodable images in the report instead of failing.
    #[arg(long)]
    pub skip_failures: bool,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Evaluation report whose per-intersection accuracy is correlated with representation.
    #[arg(long)]
    pub accuracy_report: Option<PathBuf>,
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct WeightsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Give every class this weight instead.
    #[arg(long)]
    pub uniform_w: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum PivotArg {
    Mean,
    Mid,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_flip: bool,
    #[arg(long, value_enum, default_value = "mean")]
    pub contrast_pivot: PivotArg,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 0.15)]
    pub threshold: f64,
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum PairArg {
    Runs,
    Conditions,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// `BASELINE TREATMENT` report pair (alternative to the repeated flags).
    #[arg(num_args = 0..=2)]
    pub pair: Vec<PathBuf>,
    #[arg(long)]
    pub baseline: Vec<PathBuf>,
    #[arg(long)]
    pub treatment: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "conditions")]
    pub pair_by: PairArg,
}

#[derive(Args, Debug)]
pub struct AttributionArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of `<id>.csv` saliency matrices.
    #[arg(long)]
    pub rasters: PathBuf,
    /// Directory of `<id>.csv` region masks (0 background, 1 object, 2 transition).
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// CSV `id,<feature>...` of per-sample feature attributions.
    #[arg(long)]
    pub attributions: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub corr_threshold: f64,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn version() -> &'static str {
    let v = format!(
        "{} (rng: {})",
        env!("CARGO_PKG_VERSION"),
        interbias_core::rng::GENERATOR_NAME
    );
    Box::leak(v.into_boxed_str())
}

fn main() -> ExitCode {
    let matches = Cli::command().version(version()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
