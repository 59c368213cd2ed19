//! `sirsi` - simulation, equilibrium analysis, parameter fitting, and
//! vaccination-strategy sweeps for the SIRSi / SIRSi-Vaccine models.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! failure, 4 I/O failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ParamOverrides;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ErrorKind {
    Config,
    Numeric,
    Io,
}

/// Error with the exit-code class it maps to.
#[derive(Debug)]
pub(crate) struct CliError {
    kind: ErrorKind,
    message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Io,
            message: message.into(),
        }
    }

    fn exit_code(&self) -> ExitCode {
        match self.kind {
            ErrorKind::Config => ExitCode::from(2),
            ErrorKind::Numeric => ExitCode::from(3),
            ErrorKind::Io => ExitCode::from(4),
        }
    }
}

impl From<sirsi_core::Error> for CliError {
    fn from(e: sirsi_core::Error) -> Self {
        use sirsi_core::Error as E;
        let kind = match &e {
            E::InvalidParams(_) | E::InvalidState(_) | E::InvalidConfig(_) | E::InvalidData(_) => {
                ErrorKind::Config
            }
            E::Degenerate(_)
            | E::StepLimitExceeded { .. }
            | E::StepSizeUnderflow { .. }
            | E::NonFiniteState { .. }
            | E::StateLeftDomain { .. }
            | E::ResidualEval { .. } => ErrorKind::Numeric,
            E::Io(_) => ErrorKind::Io,
            E::Csv(_) => ErrorKind::Config,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "sirsi",
    version,
    about = "SIRSi / SIRSi-Vaccine compartmental epidemic models"
)]
struct Cli {
    /// JSON configuration file; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $SIRSI_OUT_DIR or the working directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the model and write trajectory.csv plus summary.json.
    Simulate(SimulateArgs),
    /// Classify both equilibria and write equilibria.json.
    Equilibria(EquilibriaArgs),
    /// Fit free parameters to a confirmed-case series.
    Fit(FitArgs),
    /// Map steady states over the (theta, omega) plane.
    Sweep(SweepArgs),
    /// Inspect parameter presets.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    params: ParamOverrides,
    /// Initial sick fraction.
    #[arg(long)]
    sick0: Option<f64>,
    /// Simulation horizon in days.
    #[arg(long)]
    days: Option<f64>,
    /// Output sampling interval in days.
    #[arg(long)]
    sample_step: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Polynomial social-distancing schedule: comma-separated coefficients
    /// over days, lowest degree first (overrides the constant theta).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    theta_poly: Option<Vec<f64>>,
    /// Population used to scale fractions to counts in the summary.
    #[arg(long)]
    population: Option<f64>,
}

#[derive(Args)]
struct EquilibriaArgs {
    #[command(flatten)]
    params: ParamOverrides,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    params: ParamOverrides,
    /// Confirmed-case CSV (header: date,confirmed).
    #[arg(long)]
    cases: Option<PathBuf>,
    /// Population size for the case series.
    #[arg(long)]
    population: Option<f64>,
    /// Isolation-index CSV (header: date,index); enables the polynomial
    /// schedule path.
    #[arg(long)]
    isolation: Option<PathBuf>,
    /// Treat isolation values as percentages and divide by 100.
    #[arg(long)]
    isolation_percent: bool,
    /// Odd moving-average window applied to the isolation series.
    #[arg(long)]
    moving_average: Option<usize>,
    /// Replace the case series by clamped first differences.
    #[arg(long)]
    differencing: bool,
    /// Trailing rolling-sum window applied after differencing.
    #[arg(long)]
    rolling_window: Option<usize>,
    /// Degree of the isolation-index polynomial.
    #[arg(long)]
    theta_degree: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Relative projected-gradient stopping tolerance.
    #[arg(long)]
    gradient_tol: Option<f64>,
    /// Relative step-size stopping tolerance.
    #[arg(long)]
    step_tol: Option<f64>,
    /// Relative cost-decrease stopping tolerance.
    #[arg(long)]
    cost_tol: Option<f64>,
    /// Free parameters (default: gamma,alpha,beta1,beta2,beta3,s0).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    free: Option<Vec<String>>,
    /// Bound override, repeatable: name=lower:upper.
    #[arg(long = "bound")]
    bounds: Vec<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    params: ParamOverrides,
    /// Initial sick fraction.
    #[arg(long)]
    sick0: Option<f64>,
    #[arg(long)]
    theta_min: Option<f64>,
    #[arg(long)]
    theta_max: Option<f64>,
    #[arg(long)]
    theta_steps: Option<usize>,
    #[arg(long)]
    omega_min: Option<f64>,
    #[arg(long)]
    omega_max: Option<f64>,
    #[arg(long)]
    omega_steps: Option<usize>,
    /// Per-cell integration horizon in days.
    #[arg(long)]
    horizon: Option<f64>,
    /// Componentwise derivative magnitude that counts as settled.
    #[arg(long)]
    settle_tol: Option<f64>,
    /// Population used to scale the steady sick fraction to counts.
    #[arg(long)]
    population: Option<f64>,
}

#[derive(Subcommand)]
enum PresetAction {
    /// Print a preset digit-for-digit as calibrated.
    Dump { city: String },
    /// List available preset names.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.exit_code()
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let file = config::FileConfig::load(cli.config.as_deref())?;
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| file.out_dir.clone())
        .or_else(|| std::env::var_os("SIRSI_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    match &cli.command {
        Command::Simulate(args) => commands::simulate(args, &file, &out_dir),
        Command::Equilibria(args) => commands::equilibria(args, &file, &out_dir),
        Command::Fit(args) => commands::fit(args, &file, &out_dir),
        Command::Sweep(args) => commands::sweep(args, &file, &out_dir),
        Command::Preset { action } => commands::preset(action),
    }
}
