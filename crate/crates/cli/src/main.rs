//! `popadjust` — anchored population-adjusted indirect comparisons for
//! survival outcomes, plus the factorial simulation benchmark.

mod commands;
mod config;
mod svg;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const SEED_ENV_VAR: &str = "POPADJUST_SEED";

#[derive(Parser)]
#[command(
    name = "popadjust",
    version,
    about = "MAIC, STC and Bucher indirect comparisons for survival outcomes, \
             with a Monte Carlo benchmark engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation study and summarize it.
    Run(RunArgs),
    /// Summarize an existing replicate table.
    Summarize(SummarizeArgs),
    /// Emit nested-loop-plot data (CSV) and a static SVG for one metric.
    Plot(PlotArgs),
    /// Analyze a user-supplied IPD/ALD pair with one method.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Generate a fixed-seed example dataset and run all three analyses.
    Demo(DemoArgs),
    /// Calibrate the exponential censoring rate to a target proportion.
    CalibrateCensoring(CalibrateArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Scenario selection: `desk` (12-scenario subset), `all` (162), or id
    /// list/ranges such as `1,5,9-12`.
    #[arg(long)]
    scenarios: Option<String>,
    /// Monte Carlo replicates per scenario.
    #[arg(long)]
    reps: Option<u32>,
    /// Seed root for the counter-based streams (env POPADJUST_SEED overrides).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for replicates.csv, summary.csv and manifest.txt.
    #[arg(long)]
    out: Option<String>,
    /// Standard-error method for the MAIC effect.
    #[arg(long, value_enum)]
    variance: Option<VarianceArg>,
    /// Resamples when --variance bootstrap.
    #[arg(long)]
    bootstrap_reps: Option<usize>,
    /// Re-derive the censoring rate from a probe sample instead of using the
    /// calibrated default 0.96.
    #[arg(long)]
    recalibrate_censoring: bool,
    /// Target censoring proportion for --recalibrate-censoring.
    #[arg(long)]
    censoring_target: Option<f64>,
    /// Probe sample size for --recalibrate-censoring.
    #[arg(long)]
    probe_n: Option<usize>,
    /// Keep only scenarios with these AC sample sizes, e.g. `150,600`.
    #[arg(long)]
    n_ac: Option<String>,
    /// Keep only these prognostic hazard-ratio levels, e.g. `0.67,0.33`.
    #[arg(long)]
    prognostic: Option<String>,
    /// Keep only these interaction hazard-ratio levels, e.g. `0.33`.
    #[arg(long)]
    interaction: Option<String>,
    /// Keep only these correlation levels, e.g. `0,0.35`.
    #[arg(long)]
    correlation: Option<String>,
    /// Keep only these AC covariate means, e.g. `0.15`.
    #[arg(long)]
    ac_mean: Option<String>,
    /// Key-value config file; command-line flags win over file entries.
    #[arg(long)]
    config: Option<String>,
}

#[derive(Args)]
pub struct SummarizeArgs {
    /// Replicate table produced by `run`.
    #[arg(long)]
    replicates: String,
    /// Output summary CSV path (default: summary.csv next to the input).
    #[arg(long)]
    out: Option<String>,
    /// True effect value (the benchmark's A vs. B truth is 0).
    #[arg(long, default_value_t = 0.0)]
    truth: f64,
}

#[derive(Args)]
pub struct PlotArgs {
    /// Summary CSV produced by `run` or `summarize`.
    #[arg(long)]
    summary: String,
    /// Which performance measure to plot.
    #[arg(long, value_enum)]
    metric: MetricArg,
    /// Output path for the plot data CSV.
    #[arg(long)]
    out_csv: Option<String>,
    /// Output path for the SVG chart.
    #[arg(long)]
    out_svg: Option<String>,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Weighted marginal effect (method of moments + weighted Cox).
    Maic(AnalyzeMaicArgs),
    /// Centered outcome regression (conditional effect).
    Stc(AnalyzeStcArgs),
    /// Unadjusted indirect comparison.
    Bucher(AnalyzeCommonArgs),
}

#[derive(Args)]
pub struct AnalyzeCommonArgs {
    /// IPD CSV with header x1,...,xK,trt,time,event.
    #[arg(long)]
    ipd: String,
    /// ALD key-value file (mean.x1=..., logHR=..., se=...).
    #[arg(long)]
    ald: String,
    /// 1-based covariate columns acting as effect modifiers.
    #[arg(long, default_value = "3,4")]
    effect_modifiers: String,
}

#[derive(Args)]
pub struct AnalyzeMaicArgs {
    #[command(flatten)]
    common: AnalyzeCommonArgs,
    #[arg(long, value_enum, default_value_t = VarianceArg::Sandwich)]
    variance: VarianceArg,
    #[arg(long, default_value_t = 1000)]
    bootstrap_reps: usize,
    /// Seed for bootstrap resampling (env POPADJUST_SEED overrides).
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
pub struct AnalyzeStcArgs {
    #[command(flatten)]
    common: AnalyzeCommonArgs,
    /// Center the purely prognostic main effects as well (no effect on the
    /// treatment coefficient in a Cox model; provided for completeness).
    #[arg(long)]
    center_all: bool,
}

#[derive(Args)]
pub struct DemoArgs {
    /// Also write the demo dataset (ipd.csv, ald.txt) to this directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
pub struct CalibrateArgs {
    /// Target censoring proportion under active treatment at baseline.
    #[arg(long, default_value_t = 0.35)]
    target: f64,
    /// Probe sample size.
    #[arg(long, default_value_t = 1_000_000)]
    probe_n: usize,
    /// Seed for the probe sample (env POPADJUST_SEED overrides).
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarianceArg {
    Sandwich,
    Bootstrap,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Bias,
    Vr,
    Coverage,
    Ese,
    Mse,
}

/// Errors mapped to process exit codes: usage problems exit 2, runtime
/// failures exit 1.
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<popadjust::Error> for CliError {
    fn from(err: popadjust::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Seed precedence: the environment variable beats flags and config files.
pub fn env_seed_override() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV_VAR) {
        Ok(raw) => raw
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV_VAR} must be an unsigned integer, got '{raw}'"))),
        Err(_) => Ok(None),
    }
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => commands::run::execute(args),
        Command::Summarize(args) => commands::summarize::execute(args),
        Command::Plot(args) => commands::plot::execute(args),
        Command::Analyze(AnalyzeCommand::Maic(args)) => commands::analyze::execute_maic(args),
        Command::Analyze(AnalyzeCommand::Stc(args)) => commands::analyze::execute_stc(args),
        Command::Analyze(AnalyzeCommand::Bucher(args)) => commands::analyze::execute_bucher(args),
        Command::Demo(args) => commands::demo::execute(args),
        Command::CalibrateCensoring(args) => commands::calibrate::execute(args),
    };
    match outcome {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}
