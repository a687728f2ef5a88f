//! Command-line interface for the adaptive smoothing-spline toolkit.
//!
//! Exit codes: 0 success, 1 domain error (bad data, numerical failure),
//! 2 usage error (bad flags or flag values). `ADASPLINE_THREADS` caps the
//! worker-thread count; results are identical for any cap.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use adaspline_core::sim::Method;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "adaspline",
    version,
    about = "Spatially adaptive smoothing splines: fitting, adaptation, benchmarks",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Penalized spline fit with a fixed or criterion-selected lambda.
    Fit(FitArgs),
    /// Full adaptive pipeline: knots, variance, curvature, penalty, GAIC.
    AdaptFit(AdaptFitArgs),
    /// Monte Carlo benchmark of the SS / EQK / ADSS estimators.
    Simulate(SimulateArgs),
    /// Equivalent-kernel tables (t, L) and (t, s, J) for plotting.
    KernelTable(KernelTableArgs),
    /// Compare a hat-matrix row against the equivalent kernel.
    VerifyKernel(VerifyKernelArgs),
}

#[derive(Args)]
pub struct FitArgs {
    /// Input CSV with header t,y[,w].
    #[arg(long)]
    pub input: PathBuf,
    /// Penalty order (2 = cubic smoothing spline).
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Fixed positive lambda, or "auto" for criterion-based selection.
    #[arg(long, default_value = "auto")]
    pub lambda: String,
    /// Selection criterion, gcv or gml (requires --lambda auto).
    #[arg(long)]
    pub criterion: Option<String>,
    /// Piecewise penalty JSON: {"tau": [...], "values": [...], "gamma": 1.0}.
    #[arg(long)]
    pub penalty: Option<PathBuf>,
    /// Min-max rescale t onto [0, 1]; the original range is recorded.
    #[arg(long)]
    pub rescale: bool,
    /// Output JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Prediction-grid CSV path (default: <out stem>_grid.csv).
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
    /// Number of points in the prediction grid.
    #[arg(long, default_value_t = 201)]
    pub grid_points: usize,
}

#[derive(Args)]
pub struct AdaptFitArgs {
    /// Input CSV with header t,y[,w].
    #[arg(long)]
    pub input: PathBuf,
    /// Penalty order of the final fit.
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// Candidate interior-knot counts.
    #[arg(long = "s-grid", value_delimiter = ',', default_value = "0,2,4,8")]
    pub s_grid: Vec<usize>,
    /// Candidate power-up exponents (each >= 1).
    #[arg(long = "gamma-grid", value_delimiter = ',', default_value = "1,2,4")]
    pub gamma_grid: Vec<f64>,
    /// Cells in the knot-selection density grid.
    #[arg(long, default_value_t = 100)]
    pub density_grid: usize,
    /// Bandwidth for variance smoothing (default: rule of thumb).
    #[arg(long)]
    pub variance_bandwidth: Option<f64>,
    /// Min-max rescale t onto [0, 1]; the original range is recorded.
    #[arg(long)]
    pub rescale: bool,
    /// Output JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Curves CSV path (default: <out stem>_curves.csv).
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Benchmark scenario: heaviside or mexican_hat.
    #[arg(long)]
    pub scenario: String,
    /// Number of Monte Carlo replicates.
    #[arg(long)]
    pub replicates: usize,
    /// Root seed for the counter-based noise streams.
    #[arg(long)]
    pub seed: u64,
    /// Sample size per replicate (default 200).
    #[arg(long)]
    pub n: Option<usize>,
    /// Noise standard deviation (default: the scenario's value).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Comma-separated methods to compare: ss, eqk, adss.
    #[arg(long, value_delimiter = ',', default_value = "ss,eqk,adss")]
    pub methods: Vec<String>,
    /// Summary table CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional pointwise 0.025/0.5/0.975 quantile-band CSV.
    #[arg(long)]
    pub bands: Option<PathBuf>,
    /// Optional CSV with the median-ISE replicate's data (t,y).
    #[arg(long)]
    pub median: Option<PathBuf>,
    /// Optional per-replicate metrics CSV.
    #[arg(long)]
    pub replicate_out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("outputs").required(true).multiple(true).args(["out_l", "out_j"]))]
pub struct KernelTableArgs {
    /// Kernel order (1..4).
    #[arg(long)]
    pub m: usize,
    /// Inverse bandwidth beta for the J table.
    #[arg(long, default_value_t = 10.0)]
    pub beta: f64,
    /// Grid points per axis.
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
    /// Output CSV for the standardized kernel (t, l).
    #[arg(long)]
    pub out_l: Option<PathBuf>,
    /// Output CSV for the warped kernel (t, s, j).
    #[arg(long)]
    pub out_j: Option<PathBuf>,
    /// Piecewise penalty JSON for the J table (default: uniform).
    #[arg(long)]
    pub penalty: Option<PathBuf>,
}

#[derive(Args)]
pub struct VerifyKernelArgs {
    /// Penalty order.
    #[arg(long)]
    pub m: usize,
    /// Equispaced design size.
    #[arg(long)]
    pub n: usize,
    /// Smoothing parameter.
    #[arg(long)]
    pub lambda: f64,
    /// Interior point at which to take the hat row.
    #[arg(long, default_value_t = 0.5)]
    pub t0: f64,
    /// Piecewise penalty JSON (default: uniform).
    #[arg(long)]
    pub penalty: Option<PathBuf>,
    /// Output CSV path (t, hat_weight, kernel_weight).
    #[arg(long)]
    pub out: PathBuf,
}

enum DispatchError {
    Usage(String),
    Domain(anyhow::Error),
}

impl From<anyhow::Error> for DispatchError {
    fn from(e: anyhow::Error) -> Self {
        DispatchError::Domain(e)
    }
}

fn configure_threads() -> Result<(), String> {
    match std::env::var("ADASPLINE_THREADS") {
        Ok(raw) => {
            let k: usize = raw
                .trim()
                .parse()
                .map_err(|_| format!("ADASPLINE_THREADS must be a positive integer, got '{raw}'"))?;
            if k == 0 {
                return Err("ADASPLINE_THREADS must be at least 1".into());
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build_global()
                .map_err(|e| e.to_string())
        }
        Err(std::env::VarError::NotPresent) => Ok(()),
        Err(e) => Err(format!("ADASPLINE_THREADS: {e}")),
    }
}

fn dispatch(cli: Cli) -> Result<(), DispatchError> {
    match cli.command {
        Command::Fit(args) => {
            let fixed_lambda = match args.lambda.as_str() {
                "auto" => None,
                other => Some(other.parse::<f64>().map_err(|_| {
                    DispatchError::Usage(format!(
                        "--lambda must be 'auto' or a number, got '{other}'"
                    ))
                })?),
            };
            if fixed_lambda.is_some() && args.criterion.is_some() {
                return Err(DispatchError::Usage(
                    "--criterion requires --lambda auto".into(),
                ));
            }
            let criterion = args
                .criterion
                .as_deref()
                .map(commands::parse_criterion)
                .transpose()
                .map_err(|e| DispatchError::Usage(e.to_string()))?;
            commands::run_fit(&args, fixed_lambda, criterion)?;
        }
        Command::AdaptFit(args) => commands::run_adapt_fit(&args)?,
        Command::Simulate(args) => {
            if !["heaviside", "mexican_hat", "mexican-hat"].contains(&args.scenario.as_str()) {
                return Err(DispatchError::Usage(format!(
                    "unknown scenario '{}' (expected heaviside or mexican_hat)",
                    args.scenario
                )));
            }
            let methods = args
                .methods
                .iter()
                .map(|s| s.parse::<Method>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| DispatchError::Usage(e.to_string()))?;
            commands::run_simulate(&args, &methods)?;
        }
        Command::KernelTable(args) => commands::run_kernel_table(&args)?,
        Command::VerifyKernel(args) => commands::run_verify_kernel(&args)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Err(msg) = configure_threads() {
        eprintln!("adaspline: {msg}");
        return ExitCode::from(2);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Prints help/usage itself; exits 0 for --help/--version, 2 otherwise.
        Err(e) => e.exit(),
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(DispatchError::Usage(msg)) => {
            eprintln!("adaspline: {msg}");
            ExitCode::from(2)
        }
        Err(DispatchError::Domain(err)) => {
            eprintln!("adaspline: {err:#}");
            ExitCode::from(1)
        }
    }
}
