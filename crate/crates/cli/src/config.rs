//! JSON run configuration and flag merging.
//!
//! Every command-line flag has a config-file equivalent; explicit flags win
//! over file values, which win over built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sirsi_core::fitting::{FreeParam, ParamBounds};
use sirsi_core::model::Params;
use sirsi_core::presets;

use crate::CliError;

/// File-level mirror of the command-line flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<String>,
    pub mu: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub theta: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub beta3: Option<f64>,
    pub omega: Option<f64>,

    pub s0: Option<f64>,
    pub i0: Option<f64>,
    pub sick0: Option<f64>,
    pub days: Option<f64>,
    pub sample_step: Option<f64>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub theta_poly: Option<Vec<f64>>,
    pub population: Option<f64>,

    pub cases: Option<PathBuf>,
    pub isolation: Option<PathBuf>,
    pub isolation_percent: Option<bool>,
    pub moving_average: Option<usize>,
    pub differencing: Option<bool>,
    pub rolling_window: Option<usize>,
    pub theta_degree: Option<usize>,
    pub max_iterations: Option<usize>,
    pub gradient_tol: Option<f64>,
    pub step_tol: Option<f64>,
    pub cost_tol: Option<f64>,
    pub free: Option<Vec<String>>,
    pub bounds: Option<BTreeMap<String, [f64; 2]>>,

    pub theta_min: Option<f64>,
    pub theta_max: Option<f64>,
    pub theta_steps: Option<usize>,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub omega_steps: Option<usize>,
    pub horizon: Option<f64>,
    pub settle_tol: Option<f64>,

    pub out_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("bad config {}: {e}", path.display())))
    }
}

/// Assembles a parameter vector from preset, config file, and flags, in
/// ascending precedence.
pub fn resolve_params(
    preset_flag: Option<&str>,
    file: &FileConfig,
    overrides: &ParamOverrides,
) -> Result<(Params, f64, f64), CliError> {
    let preset_name = preset_flag.or(file.preset.as_deref());
    let preset = match preset_name {
        Some(name) => Some(
            presets::by_name(name)
                .ok_or_else(|| CliError::config(format!("unknown preset {name:?}")))?,
        ),
        None => None,
    };

    let base = preset.map(|p| p.params).unwrap_or(Params {
        mu: 0.0,
        gamma: 0.0,
        alpha: 0.0,
        theta: 0.0,
        beta1: 0.0,
        beta2: 0.0,
        beta3: 0.0,
        omega: 0.0,
    });
    let params = Params {
        mu: overrides.mu.or(file.mu).unwrap_or(base.mu),
        gamma: overrides.gamma.or(file.gamma).unwrap_or(base.gamma),
        alpha: overrides.alpha.or(file.alpha).unwrap_or(base.alpha),
        theta: overrides.theta.or(file.theta).unwrap_or(base.theta),
        beta1: overrides.beta1.or(file.beta1).unwrap_or(base.beta1),
        beta2: overrides.beta2.or(file.beta2).unwrap_or(base.beta2),
        beta3: overrides.beta3.or(file.beta3).unwrap_or(base.beta3),
        omega: overrides.omega.or(file.omega).unwrap_or(base.omega),
    };

    let s0_default = preset.map(|p| p.s0).unwrap_or(0.999);
    let s0 = overrides.s0.or(file.s0).unwrap_or(s0_default);
    let i0_default = preset
        .map(|p| p.i0)
        .filter(|_| overrides.s0.is_none() && file.s0.is_none())
        .unwrap_or(1.0 - s0);
    let i0 = overrides.i0.or(file.i0).unwrap_or(i0_default);
    Ok((params, s0, i0))
}

/// Parameter-override flags shared by the subcommands.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ParamOverrides {
    /// Parameter preset: santos, campinas, or saopaulo.
    #[arg(long)]
    pub preset: Option<String>,
    /// Birth/death rate per day.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Re-susceptibility rate per day.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Transmission rate per day.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Social-distancing index in [0, 1].
    #[arg(long)]
    pub theta: Option<f64>,
    /// Unreported-recovery rate per day.
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Symptomatic-progression rate per day.
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Sick-recovery rate per day.
    #[arg(long)]
    pub beta3: Option<f64>,
    /// Vaccination rate per day.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Initial susceptible fraction.
    #[arg(long)]
    pub s0: Option<f64>,
    /// Initial infected fraction.
    #[arg(long)]
    pub i0: Option<f64>,
}

/// Parses a free-parameter name as used in config files and flags.
pub fn parse_free_param(name: &str) -> Result<FreeParam, CliError> {
    match name {
        "gamma" => Ok(FreeParam::Gamma),
        "alpha" => Ok(FreeParam::Alpha),
        "beta1" => Ok(FreeParam::Beta1),
        "beta2" => Ok(FreeParam::Beta2),
        "beta3" => Ok(FreeParam::Beta3),
        "s0" => Ok(FreeParam::S0),
        other => Err(CliError::config(format!(
            "unknown free parameter {other:?}"
        ))),
    }
}

/// Parses a repeatable `name=lower:upper` bound flag.
pub fn parse_bound_flag(text: &str) -> Result<(FreeParam, ParamBounds), CliError> {
    let (name, range) = text
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("bound {text:?} must look like name=lo:hi")))?;
    let (lo, hi) = range
        .split_once(':')
        .ok_or_else(|| CliError::config(format!("bound {text:?} must look like name=lo:hi")))?;
    let lower: f64 = lo
        .parse()
        .map_err(|e| CliError::config(format!("bad lower bound in {text:?}: {e}")))?;
    let upper: f64 = hi
        .parse()
        .map_err(|e| CliError::config(format!("bad upper bound in {text:?}: {e}")))?;
    Ok((parse_free_param(name)?, ParamBounds::new(lower, upper)))
}
