//! Case-data preprocessing and bounded least-squares estimation of the model
//! parameters from confirmed-case series.
//!
//! The observation model maps the sick compartment to confirmed cases:
//! residuals are `population * sick(t) - confirmed(t)` at the data dates.
//! Vaccination is absent from the fitted window, so `omega` stays fixed at
//! zero during fitting.

mod solver;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{Params, State3};
use crate::odeint::{self, IntegratorConfig, ThetaSchedule, TimeSeries};

pub(crate) use solver::{minimize, SolverOptions};

/// Confirmed-case counts per calendar day for one city.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSeries {
    pub dates: Vec<NaiveDate>,
    /// Case counts in persons.
    pub confirmed: Vec<f64>,
    /// Population size used to scale fractions to counts.
    pub population: f64,
}

impl CaseSeries {
    pub fn new(dates: Vec<NaiveDate>, confirmed: Vec<f64>, population: f64) -> Result<Self, Error> {
        if dates.len() != confirmed.len() {
            return Err(Error::InvalidData(format!(
                "{} dates but {} counts",
                dates.len(),
                confirmed.len()
            )));
        }
        if dates.is_empty() {
            return Err(Error::InvalidData("empty case series".into()));
        }
        if !(population > 0.0) {
            return Err(Error::InvalidData(format!(
                "population must be positive, got {population}"
            )));
        }
        for pair in dates.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidData(format!(
                    "dates must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        for (&v, d) in confirmed.iter().zip(&dates) {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidData(format!(
                    "confirmed count on {d} must be non-negative, got {v}"
                )));
            }
        }
        Ok(Self {
            dates,
            confirmed,
            population,
        })
    }

    /// Reads a `date,confirmed` CSV with ISO-8601 dates.
    pub fn from_csv_reader<R: std::io::Read>(reader: R, population: f64) -> Result<Self, Error> {
        let (dates, values) = read_two_column_csv(reader, "confirmed")?;
        Self::new(dates, values, population)
    }

    pub fn from_csv_path<P: AsRef<std::path::Path>>(
        path: P,
        population: f64,
    ) -> Result<Self, Error> {
        Self::from_csv_reader(std::fs::File::open(path)?, population)
    }

    /// Days elapsed since the first date, one entry per sample.
    pub fn day_offsets(&self) -> Vec<f64> {
        let start = self.dates[0];
        self.dates
            .iter()
            .map(|d| (*d - start).num_days() as f64)
            .collect()
    }

    /// First differences, clamped at zero: turns a cumulative series into a
    /// daily-new series. The first sample is kept as-is.
    pub fn difference(&self) -> Self {
        let mut out = self.confirmed.clone();
        for k in (1..out.len()).rev() {
            out[k] = (out[k] - out[k - 1]).max(0.0);
        }
        Self {
            dates: self.dates.clone(),
            confirmed: out,
            population: self.population,
        }
    }

    /// Trailing rolling sum over `window` samples (shorter at the start):
    /// approximates an active-case series from daily-new counts.
    pub fn rolling_sum(&self, window: usize) -> Result<Self, Error> {
        if window == 0 {
            return Err(Error::InvalidConfig(
                "rolling window must be positive".into(),
            ));
        }
        let out: Vec<f64> = (0..self.confirmed.len())
            .map(|k| {
                let lo = (k + 1).saturating_sub(window);
                self.confirmed[lo..=k].iter().sum()
            })
            .collect();
        Ok(Self {
            dates: self.dates.clone(),
            confirmed: out,
            population: self.population,
        })
    }
}

/// Social-distancing index per calendar day, as a fraction in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationSeries {
    pub dates: Vec<NaiveDate>,
    pub index: Vec<f64>,
}

impl IsolationSeries {
    pub fn new(dates: Vec<NaiveDate>, index: Vec<f64>) -> Result<Self, Error> {
        if dates.len() != index.len() {
            return Err(Error::InvalidData(format!(
                "{} dates but {} index values",
                dates.len(),
                index.len()
            )));
        }
        if dates.is_empty() {
            return Err(Error::InvalidData("empty isolation series".into()));
        }
        for pair in dates.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidData(format!(
                    "dates must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        for (&v, d) in index.iter().zip(&dates) {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidData(format!(
                    "isolation index on {d} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(Self { dates, index })
    }

    /// Reads a `date,index` CSV with ISO-8601 dates. With `values_are_percent`
    /// the column is divided by 100 on ingest.
    pub fn from_csv_reader<R: std::io::Read>(
        reader: R,
        values_are_percent: bool,
    ) -> Result<Self, Error> {
        let (dates, mut values) = read_two_column_csv(reader, "index")?;
        if values_are_percent {
            for v in &mut values {
                *v /= 100.0;
            }
        }
        Self::new(dates, values)
    }

    pub fn from_csv_path<P: AsRef<std::path::Path>>(
        path: P,
        values_are_percent: bool,
    ) -> Result<Self, Error> {
        Self::from_csv_reader(std::fs::File::open(path)?, values_are_percent)
    }

    pub fn day_offsets(&self) -> Vec<f64> {
        let start = self.dates[0];
        self.dates
            .iter()
            .map(|d| (*d - start).num_days() as f64)
            .collect()
    }
}

fn read_two_column_csv<R: std::io::Read>(
    reader: R,
    value_column: &str,
) -> Result<(Vec<NaiveDate>, Vec<f64>), Error> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "date" || &headers[1] != value_column {
        return Err(Error::InvalidData(format!(
            "expected header date,{value_column}, got {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| Error::InvalidData(format!("bad date {:?}: {e}", &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|e| Error::InvalidData(format!("bad {value_column} {:?}: {e}", &record[1])))?;
        dates.push(date);
        values.push(value);
    }
    Ok((dates, values))
}

/// Centered moving mean with an odd window; near the edges the window shrinks
/// to the valid range instead of inventing padding values, so the series
/// keeps its length.
pub fn moving_average(x: &IsolationSeries, window: usize) -> Result<IsolationSeries, Error> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "moving-average window must be odd and positive, got {window}"
        )));
    }
    if window > x.index.len() {
        return Err(Error::InvalidConfig(format!(
            "window {window} longer than series of {} samples",
            x.index.len()
        )));
    }
    let n = x.index.len();
    let half = window / 2;
    let smoothed: Vec<f64> = (0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half).min(n - 1);
            let slice = &x.index[lo..=hi];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect();
    IsolationSeries::new(x.dates.clone(), smoothed)
}

/// Polynomial schedule fitted to an isolation series.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFit {
    /// Schedule in days since the first date of the fitted series.
    pub schedule: ThetaSchedule,
    /// Euclidean norm of the fit residuals.
    pub residual_norm: f64,
}

/// Ordinary least-squares polynomial fit of the isolation index over time.
///
/// The regression runs on time scaled to `[-1, 1]` for conditioning; the
/// returned coefficients are re-expanded in the raw day basis.
pub fn fit_isolation_polynomial(x: &IsolationSeries, degree: usize) -> Result<PolyFit, Error> {
    let n = x.index.len();
    if n < degree + 1 {
        return Err(Error::InvalidData(format!(
            "need at least {} samples for degree {degree}, got {n}",
            degree + 1
        )));
    }
    let days = x.day_offsets();
    let t_mid = (days[0] + days[n - 1]) / 2.0;
    let t_scale = ((days[n - 1] - days[0]) / 2.0).max(1.0);

    let mut vander = nalgebra::DMatrix::zeros(n, degree + 1);
    for (row, &t) in days.iter().enumerate() {
        let u = (t - t_mid) / t_scale;
        let mut pow = 1.0;
        for col in 0..=degree {
            vander[(row, col)] = pow;
            pow *= u;
        }
    }
    let y = nalgebra::DVector::from_vec(x.index.clone());

    let svd = vander.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    if !(min_sv > 1e-12 * max_sv) {
        return Err(Error::Degenerate(
            "rank-deficient polynomial design matrix (collinear time values)".into(),
        ));
    }
    let coeffs_scaled = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Degenerate(format!("polynomial solve failed: {e}")))?;
    let residual_norm = (&vander * &coeffs_scaled - &y).norm();

    // Expand sum_k c_k ((t - t_mid)/t_scale)^k into raw powers of t.
    let mut raw = vec![0.0; degree + 1];
    let mut basis = vec![0.0; degree + 1];
    basis[0] = 1.0;
    let mut basis_len = 1;
    for k in 0..=degree {
        for m in 0..basis_len {
            raw[m] += coeffs_scaled[k] * basis[m];
        }
        if k < degree {
            // Multiply the basis polynomial by (t - t_mid)/t_scale.
            let mut next = vec![0.0; degree + 1];
            for m in 0..basis_len {
                next[m + 1] += basis[m] / t_scale;
                next[m] -= basis[m] * t_mid / t_scale;
            }
            basis = next;
            basis_len += 1;
        }
    }

    Ok(PolyFit {
        schedule: ThetaSchedule::polynomial(raw),
        residual_norm,
    })
}

/// Parameters that may vary during a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParam {
    Gamma,
    Alpha,
    Beta1,
    Beta2,
    Beta3,
    S0,
}

impl FreeParam {
    pub const ALL: [FreeParam; 6] = [
        FreeParam::Gamma,
        FreeParam::Alpha,
        FreeParam::Beta1,
        FreeParam::Beta2,
        FreeParam::Beta3,
        FreeParam::S0,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FreeParam::Gamma => "gamma",
            FreeParam::Alpha => "alpha",
            FreeParam::Beta1 => "beta1",
            FreeParam::Beta2 => "beta2",
            FreeParam::Beta3 => "beta3",
            FreeParam::S0 => "s0",
        }
    }

    fn apply(&self, value: f64, params: &mut Params, s0: &mut f64) {
        match self {
            FreeParam::Gamma => params.gamma = value,
            FreeParam::Alpha => params.alpha = value,
            FreeParam::Beta1 => params.beta1 = value,
            FreeParam::Beta2 => params.beta2 = value,
            FreeParam::Beta3 => params.beta3 = value,
            FreeParam::S0 => *s0 = value,
        }
    }
}

/// Inclusive box bounds for one free parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lower: f64,
    pub upper: f64,
}

impl ParamBounds {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Documented default bounds, spanning the clinical ranges the calibrated
/// values fall in. The calibrated presets saturate `gamma`, `beta1` and
/// `beta2` at their upper bounds. The `s0` interval keeps the initial infected
/// fraction below one per thousand, matching the seeding scale of the fitted
/// window.
pub fn default_bounds(param: FreeParam) -> ParamBounds {
    match param {
        FreeParam::Gamma => ParamBounds::new(0.001, 0.1),
        FreeParam::Alpha => ParamBounds::new(0.1, 1.5),
        FreeParam::Beta1 => ParamBounds::new(0.02, 0.2),
        FreeParam::Beta2 => ParamBounds::new(0.02, 0.2),
        FreeParam::Beta3 => ParamBounds::new(0.02, 0.2),
        FreeParam::S0 => ParamBounds::new(0.999, 1.0),
    }
}

/// Free-parameter set, fixed values, and stopping tolerances for one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Free parameters with their bounds, in optimization order.
    pub free: Vec<(FreeParam, ParamBounds)>,
    /// Fixed parameter values (`mu`, `theta` in constant mode, and any rate
    /// not in the free set). `omega` must be zero.
    pub base: Params,
    /// Initial susceptible fraction used when `S0` is not free.
    pub s0: f64,
    pub max_iterations: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
    pub cost_tol: f64,
    /// Integration tolerances for the residual trajectories.
    pub ode_rel_tol: f64,
    pub ode_abs_tol: f64,
    pub ode_max_steps: usize,
}

impl FitConfig {
    /// All six parameters free with the documented default bounds.
    pub fn new(base: Params, s0: f64) -> Self {
        Self {
            free: FreeParam::ALL
                .iter()
                .map(|&p| (p, default_bounds(p)))
                .collect(),
            base,
            s0,
            max_iterations: 100,
            gradient_tol: 1e-6,
            step_tol: 1e-10,
            cost_tol: 1e-10,
            ode_rel_tol: 1e-10,
            ode_abs_tol: 1e-12,
            ode_max_steps: 10_000_000,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.base.validate()?;
        if self.base.omega != 0.0 {
            return Err(Error::InvalidConfig(
                "omega must stay zero during fitting (vaccination absent from the fitted window)"
                    .into(),
            ));
        }
        if self.free.is_empty() {
            return Err(Error::InvalidConfig("free parameter set is empty".into()));
        }
        for window in 0..self.free.len() {
            for other in window + 1..self.free.len() {
                if self.free[window].0 == self.free[other].0 {
                    return Err(Error::InvalidConfig(format!(
                        "duplicate free parameter {}",
                        self.free[window].0.name()
                    )));
                }
            }
        }
        for (param, bounds) in &self.free {
            if !bounds.lower.is_finite()
                || !bounds.upper.is_finite()
                || bounds.lower >= bounds.upper
            {
                return Err(Error::InvalidConfig(format!(
                    "bounds for {} must be finite with lower < upper, got [{}, {}]",
                    param.name(),
                    bounds.lower,
                    bounds.upper
                )));
            }
            let (min_legal, max_legal) = match param {
                FreeParam::S0 => (0.0, 1.0),
                _ => (0.0, f64::INFINITY),
            };
            if bounds.lower < min_legal || bounds.upper > max_legal {
                return Err(Error::InvalidConfig(format!(
                    "bounds for {} leave the legal range",
                    param.name()
                )));
            }
        }
        if !(self.s0 > 0.0 && self.s0 <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "s0 must lie in (0, 1], got {}",
                self.s0
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of a parameter fit.
///
/// `fitted_series` holds the model trajectory at the data dates; it is
/// excluded from the JSON form, which carries only the scalar summary.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub params: Params,
    pub s0: f64,
    pub i0: f64,
    /// Euclidean norm of the case-count residuals.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub fitted_series: TimeSeries,
    /// Sum of squared residuals at the start and after each accepted step.
    #[serde(skip)]
    pub cost_history: Vec<f64>,
}

impl FitResult {
    /// Model-implied confirmed-case counts at the data dates.
    pub fn fitted_cases(&self, population: f64) -> Vec<f64> {
        self.fitted_series.sick_counts(population)
    }
}

/// The residual map behind [`fit_model`]: assembles the parameter vector,
/// integrates the reduced system at the data dates, and returns
/// `population * sick - confirmed`.
pub struct FitProblem<'a> {
    cases: &'a CaseSeries,
    theta: &'a ThetaSchedule,
    cfg: &'a FitConfig,
    times: Vec<f64>,
}

impl<'a> FitProblem<'a> {
    pub fn new(
        cases: &'a CaseSeries,
        theta: &'a ThetaSchedule,
        cfg: &'a FitConfig,
    ) -> Result<Self, Error> {
        cfg.validate()?;
        Ok(Self {
            cases,
            theta,
            cfg,
            times: cases.day_offsets(),
        })
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lower = self.cfg.free.iter().map(|(_, b)| b.lower).collect();
        let upper = self.cfg.free.iter().map(|(_, b)| b.upper).collect();
        (lower, upper)
    }

    /// Deterministic bound-feasible start: the midpoint of every interval.
    pub fn initial_point(&self) -> Vec<f64> {
        self.cfg.free.iter().map(|(_, b)| b.midpoint()).collect()
    }

    /// Parameter vector and initial state implied by a free-parameter vector.
    pub fn assemble(&self, x: &[f64]) -> (Params, f64) {
        let mut params = self.cfg.base;
        let mut s0 = self.cfg.s0;
        for ((param, _), &value) in self.cfg.free.iter().zip(x) {
            param.apply(value, &mut params, &mut s0);
        }
        if let ThetaSchedule::Constant { value } = self.theta {
            params.theta = value.clamp(0.0, 1.0);
        }
        (params, s0)
    }

    /// Model trajectory at the data dates for a free-parameter vector.
    pub fn trajectory(&self, x: &[f64]) -> Result<TimeSeries, Error> {
        let (params, s0) = self.assemble(x);
        let x0 = State3::new(s0, 1.0 - s0, 0.0);
        let cfg = IntegratorConfig {
            rel_tol: self.cfg.ode_rel_tol,
            abs_tol: self.cfg.ode_abs_tol,
            t0: self.times[0],
            t1: *self.times.last().unwrap(),
            sample_step: 1.0,
            max_steps: self.cfg.ode_max_steps,
        };
        if self.times.len() == 1 {
            return Ok(TimeSeries {
                times: self.times.clone(),
                states: vec![x0],
            });
        }
        let states = odeint::integrate_samples(&params, &x0, self.theta, &self.times, &cfg)?;
        Ok(TimeSeries {
            times: self.times.clone(),
            states,
        })
    }

    pub fn residuals(&self, x: &[f64]) -> Result<Vec<f64>, Error> {
        let series = self.trajectory(x)?;
        Ok(series
            .states
            .iter()
            .zip(&self.cases.confirmed)
            .map(|(state, &observed)| self.cases.population * state.sick - observed)
            .collect())
    }
}

/// Fits the free parameters to a confirmed-case series by bounded least
/// squares, starting from the midpoint of every bound interval.
pub fn fit_model(
    cases: &CaseSeries,
    theta: &ThetaSchedule,
    cfg: &FitConfig,
) -> Result<FitResult, Error> {
    let problem = FitProblem::new(cases, theta, cfg)?;
    let (lower, upper) = problem.bounds();
    let x0 = problem.initial_point();

    let opts = SolverOptions {
        max_iterations: cfg.max_iterations,
        gradient_tol: cfg.gradient_tol,
        step_tol: cfg.step_tol,
        cost_tol: cfg.cost_tol,
        fd_rel_step: 1e-6,
    };
    let report = minimize(
        &|x: &[f64]| problem.residuals(x),
        &x0,
        &lower,
        &upper,
        &opts,
    )?;

    let (mut params, s0) = problem.assemble(&report.x);
    if let ThetaSchedule::Polynomial { .. } = theta {
        // Summarize the schedule by its mean over the data window.
        let mean =
            problem.times.iter().map(|&t| theta.eval(t)).sum::<f64>() / problem.times.len() as f64;
        params.theta = mean;
    }
    let fitted_series = problem.trajectory(&report.x)?;

    Ok(FitResult {
        params,
        s0,
        i0: 1.0 - s0,
        residual_norm: report.residual_norm,
        iterations: report.iterations,
        converged: report.converged,
        fitted_series,
        cost_history: report.cost_history,
    })
}
