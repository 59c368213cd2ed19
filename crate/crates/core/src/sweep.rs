//! Steady-state and stability maps over the social-distancing /
//! vaccination-rate plane.
//!
//! Each grid cell integrates to steady state independently; cells are
//! evaluated by a parallel map and assembled by position, so the grid is
//! identical regardless of evaluation order.

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibria::omega_threshold;
use crate::error::Error;
use crate::model::{Params, State3};
use crate::odeint::steady_state;

/// Per-cell integration failure, kept alongside the grid so one bad cell does
/// not abort the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepFailure {
    pub theta_index: usize,
    pub omega_index: usize,
    pub message: String,
}

/// Steady-state sick fractions and closed-form classification over a
/// `theta x omega` grid. Matrices are indexed `[theta_index][omega_index]`.
#[derive(Debug, Clone, Serialize)]
pub struct SweepGrid {
    pub theta_axis: Vec<f64>,
    pub omega_axis: Vec<f64>,
    /// Long-run sick fraction per cell (the horizon state when unsettled;
    /// NaN when the cell integration failed).
    pub steady_sick: Vec<Vec<f64>>,
    pub df_stable: Vec<Vec<bool>>,
    pub endemic_exists: Vec<Vec<bool>>,
    pub settled: Vec<Vec<bool>>,
    pub failures: Vec<SweepFailure>,
}

impl SweepGrid {
    /// Writes the grid in long format:
    /// `theta,omega,steady_sick,df_stable,endemic_exists,settled`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "theta,omega,steady_sick,df_stable,endemic_exists,settled"
        )?;
        for (i, &theta) in self.theta_axis.iter().enumerate() {
            for (j, &omega) in self.omega_axis.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    theta,
                    omega,
                    self.steady_sick[i][j],
                    self.df_stable[i][j],
                    self.endemic_exists[i][j],
                    self.settled[i][j]
                )?;
            }
        }
        Ok(())
    }
}

/// Evenly spaced axis of `points` values over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect()
}

/// Default 71x71 grid over `[0, 0.7]` in both directions.
pub fn default_axes() -> (Vec<f64>, Vec<f64>) {
    (linspace(0.0, 0.7, 71), linspace(0.0, 0.7, 71))
}

fn validate_axes(theta_axis: &[f64], omega_axis: &[f64]) -> Result<(), Error> {
    if theta_axis.is_empty() || omega_axis.is_empty() {
        return Err(Error::InvalidConfig("sweep axes must be non-empty".into()));
    }
    for pair in theta_axis.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(Error::InvalidConfig(
                "theta axis must be strictly increasing".into(),
            ));
        }
    }
    for &v in theta_axis {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidConfig(format!(
                "theta axis value {v} outside [0, 1]"
            )));
        }
    }
    for pair in omega_axis.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(Error::InvalidConfig(
                "omega axis must be strictly increasing".into(),
            ));
        }
    }
    for &v in omega_axis {
        if v < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "omega axis value {v} must be non-negative"
            )));
        }
    }
    Ok(())
}

/// Boolean matrices indexed `[theta_index][omega_index]`.
pub type BoolGrid = Vec<Vec<bool>>;

/// Closed-form stability and existence classification of every grid cell:
/// the disease-free point is stable strictly above the threshold rate, the
/// endemic point exists at or below it. No integration is involved.
pub fn classify_grid(
    base: &Params,
    theta_axis: &[f64],
    omega_axis: &[f64],
) -> Result<(BoolGrid, BoolGrid), Error> {
    base.validate()?;
    validate_axes(theta_axis, omega_axis)?;
    let mut df_stable = Vec::with_capacity(theta_axis.len());
    let mut endemic_exists = Vec::with_capacity(theta_axis.len());
    for &theta in theta_axis {
        let threshold = omega_threshold(&base.with_theta(theta))?;
        df_stable.push(omega_axis.iter().map(|&w| w > threshold).collect());
        endemic_exists.push(omega_axis.iter().map(|&w| w <= threshold).collect());
    }
    Ok((df_stable, endemic_exists))
}

/// Integrates every `(theta, omega)` cell from `x0` to steady state and
/// combines the dynamic outcome with the closed-form classification.
pub fn run_sweep(
    base: &Params,
    x0: &State3,
    theta_axis: &[f64],
    omega_axis: &[f64],
    horizon: f64,
    settle_tol: f64,
) -> Result<SweepGrid, Error> {
    base.validate()?;
    x0.validate()?;
    validate_axes(theta_axis, omega_axis)?;
    if !(horizon > 0.0) || !(settle_tol > 0.0) {
        return Err(Error::InvalidConfig(
            "horizon and settle tolerance must be positive".into(),
        ));
    }

    let (df_stable, endemic_exists) = classify_grid(base, theta_axis, omega_axis)?;

    let n_omega = omega_axis.len();
    let cells: Vec<(f64, bool, Option<String>)> = (0..theta_axis.len() * n_omega)
        .into_par_iter()
        .map(|flat| {
            let theta = theta_axis[flat / n_omega];
            let omega = omega_axis[flat % n_omega];
            let p = base.with_theta(theta).with_omega(omega);
            match steady_state(&p, x0, horizon, settle_tol) {
                Ok(out) => (out.state.sick.clamp(0.0, 1.0), out.settled, None),
                Err(e) => (f64::NAN, false, Some(e.to_string())),
            }
        })
        .collect();

    let mut steady_sick = vec![vec![0.0; n_omega]; theta_axis.len()];
    let mut settled = vec![vec![false; n_omega]; theta_axis.len()];
    let mut failures = Vec::new();
    for (flat, (sick, cell_settled, failure)) in cells.into_iter().enumerate() {
        let i = flat / n_omega;
        let j = flat % n_omega;
        steady_sick[i][j] = sick;
        settled[i][j] = cell_settled;
        if let Some(message) = failure {
            failures.push(SweepFailure {
                theta_index: i,
                omega_index: j,
                message,
            });
        }
    }

    Ok(SweepGrid {
        theta_axis: theta_axis.to_vec(),
        omega_axis: omega_axis.to_vec(),
        steady_sick,
        df_stable,
        endemic_exists,
        settled,
        failures,
    })
}
