//! Implementations of the CLI subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sirsi_core::equilibria;
use sirsi_core::fitting::{
    fit_isolation_polynomial, fit_model, moving_average, CaseSeries, FitConfig, IsolationSeries,
};
use sirsi_core::model::{r0, State3};
use sirsi_core::odeint::{integrate, IntegratorConfig, ThetaSchedule};
use sirsi_core::presets;
use sirsi_core::sweep::{linspace, run_sweep};

use crate::config::{parse_bound_flag, parse_free_param, resolve_params, FileConfig};
use crate::{CliError, EquilibriaArgs, FitArgs, PresetAction, SimulateArgs, SweepArgs};

fn ensure_out_dir(out_dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", out_dir.display())))
}

fn write_output(out_dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = out_dir.join(name);
    std::fs::write(&path, bytes)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn to_json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::io(format!("serialization failed: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Serialize)]
struct FinalState {
    t: f64,
    s: f64,
    i: f64,
    sick: f64,
    r: f64,
}

#[derive(Serialize)]
struct PeakSick {
    t: f64,
    fraction: f64,
    count: f64,
}

#[derive(Serialize)]
struct SimulateSummary {
    #[serde(rename = "final")]
    final_state: FinalState,
    peak_sick: PeakSick,
    population: f64,
    r0: Option<f64>,
    omega_threshold: Option<f64>,
}

pub fn simulate(args: &SimulateArgs, file: &FileConfig, out_dir: &Path) -> Result<(), CliError> {
    let (params, s0, i0) = resolve_params(args.params.preset.as_deref(), file, &args.params)?;
    let sick0 = args.sick0.or(file.sick0).unwrap_or(0.0);
    let x0 = State3::new(s0, i0, sick0);

    let cfg = IntegratorConfig {
        rel_tol: args.rel_tol.or(file.rel_tol).unwrap_or(1e-8),
        abs_tol: args.abs_tol.or(file.abs_tol).unwrap_or(1e-10),
        t0: 0.0,
        t1: args.days.or(file.days).unwrap_or(365.0),
        sample_step: args.sample_step.or(file.sample_step).unwrap_or(1.0),
        max_steps: 10_000_000,
    };
    let schedule = match args.theta_poly.clone().or_else(|| file.theta_poly.clone()) {
        Some(coefficients) => ThetaSchedule::polynomial(coefficients),
        None => ThetaSchedule::constant(params.theta),
    };
    let population = args.population.or(file.population).unwrap_or(1.0);

    let series = integrate(&params, &x0, &schedule, &cfg)?;

    let (peak_index, peak_state) = series
        .states
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.sick.total_cmp(&b.1.sick))
        .expect("non-empty trajectory");
    let last = series.len() - 1;
    let summary = SimulateSummary {
        final_state: FinalState {
            t: series.times[last],
            s: series.states[last].s,
            i: series.states[last].i,
            sick: series.states[last].sick,
            r: series.states[last].recovered(),
        },
        peak_sick: PeakSick {
            t: series.times[peak_index],
            fraction: peak_state.sick,
            count: peak_state.sick * population,
        },
        population,
        r0: r0(&params).ok(),
        omega_threshold: equilibria::omega_threshold(&params).ok(),
    };

    ensure_out_dir(out_dir)?;
    let mut csv = Vec::new();
    series
        .write_csv(&mut csv)
        .map_err(|e| CliError::io(format!("trajectory serialization failed: {e}")))?;
    write_output(out_dir, "trajectory.csv", &csv)?;
    write_output(out_dir, "summary.json", &to_json_pretty(&summary)?)?;
    println!(
        "simulate: {} samples over {} days -> {}",
        series.len(),
        cfg.t1,
        out_dir.join("trajectory.csv").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EquilibriaOutput {
    disease_free: equilibria::EquilibriumReport,
    endemic: equilibria::EquilibriumReport,
}

pub fn equilibria(
    args: &EquilibriaArgs,
    file: &FileConfig,
    out_dir: &Path,
) -> Result<(), CliError> {
    let (params, _, _) = resolve_params(args.params.preset.as_deref(), file, &args.params)?;
    let (disease_free, endemic) = equilibria::classify(&params)?;
    let output = EquilibriaOutput {
        disease_free,
        endemic,
    };
    let bytes = to_json_pretty(&output)?;
    ensure_out_dir(out_dir)?;
    write_output(out_dir, "equilibria.json", &bytes)?;
    std::io::stdout()
        .write_all(&bytes)
        .map_err(|e| CliError::io(format!("stdout: {e}")))?;
    Ok(())
}

/// Rebases polynomial coefficients from `p(u)` to `q(t) = p(t + shift)`.
fn shift_polynomial(coefficients: &[f64], shift: f64) -> Vec<f64> {
    let mut out = vec![0.0; coefficients.len()];
    // Horner evaluation in (t + shift), collecting coefficients of t.
    for &c in coefficients.iter().rev() {
        // out = out * (t + shift) + c
        let mut next = vec![0.0; coefficients.len()];
        for m in (1..out.len()).rev() {
            next[m] += out[m - 1];
        }
        for m in 0..out.len() {
            next[m] += out[m] * shift;
        }
        next[0] += c;
        out = next;
    }
    out
}

#[derive(Serialize)]
struct ScheduleSummary<'a> {
    schedule: &'a ThetaSchedule,
    polynomial_residual_norm: f64,
    moving_average_window: Option<usize>,
}

pub fn fit(args: &FitArgs, file: &FileConfig, out_dir: &Path) -> Result<(), CliError> {
    let (params, s0, _) = resolve_params(args.params.preset.as_deref(), file, &args.params)?;

    let cases_path = args
        .cases
        .clone()
        .or_else(|| file.cases.clone())
        .ok_or_else(|| CliError::config("fit requires --cases <csv>"))?;
    let population = args
        .population
        .or(file.population)
        .ok_or_else(|| CliError::config("fit requires --population <N>"))?;

    let mut cases = CaseSeries::from_csv_path(&cases_path, population)?;
    if args.differencing || file.differencing.unwrap_or(false) {
        cases = cases.difference();
    }
    if let Some(window) = args.rolling_window.or(file.rolling_window) {
        cases = cases.rolling_sum(window)?;
    }

    let isolation_path = args.isolation.clone().or_else(|| file.isolation.clone());
    let ma_window = args.moving_average.or(file.moving_average);
    let (schedule, schedule_residual) = match &isolation_path {
        Some(path) => {
            let percent = args.isolation_percent || file.isolation_percent.unwrap_or(false);
            let mut isolation = IsolationSeries::from_csv_path(path, percent)?;
            if let Some(window) = ma_window {
                isolation = moving_average(&isolation, window)?;
            }
            let degree = args.theta_degree.or(file.theta_degree).unwrap_or(6);
            let poly = fit_isolation_polynomial(&isolation, degree)?;
            // The polynomial is based at the isolation series start; the fit
            // clock starts at the first case date.
            let offset = (cases.dates[0] - isolation.dates[0]).num_days() as f64;
            let schedule = match poly.schedule {
                ThetaSchedule::Polynomial { coefficients } => {
                    ThetaSchedule::polynomial(shift_polynomial(&coefficients, offset))
                }
                constant => constant,
            };
            (schedule, Some(poly.residual_norm))
        }
        None => (ThetaSchedule::constant(params.theta), None),
    };

    let mut cfg = FitConfig::new(params, s0);
    if let Some(names) = args.free.clone().or_else(|| file.free.clone()) {
        let mut free = Vec::new();
        for name in &names {
            let param = parse_free_param(name)?;
            free.push((param, sirsi_core::fitting::default_bounds(param)));
        }
        cfg.free = free;
    }
    let mut bound_overrides = Vec::new();
    for flag in &args.bounds {
        bound_overrides.push(parse_bound_flag(flag)?);
    }
    if let Some(map) = &file.bounds {
        for (name, range) in map {
            bound_overrides.push((
                parse_free_param(name)?,
                sirsi_core::fitting::ParamBounds::new(range[0], range[1]),
            ));
        }
    }
    for (param, bounds) in bound_overrides {
        match cfg.free.iter_mut().find(|(p, _)| *p == param) {
            Some(entry) => entry.1 = bounds,
            None => {
                return Err(CliError::config(format!(
                    "bound given for {} which is not a free parameter",
                    param.name()
                )))
            }
        }
    }
    if let Some(n) = args.max_iterations.or(file.max_iterations) {
        cfg.max_iterations = n;
    }
    if let Some(v) = args.gradient_tol.or(file.gradient_tol) {
        cfg.gradient_tol = v;
    }
    if let Some(v) = args.step_tol.or(file.step_tol) {
        cfg.step_tol = v;
    }
    if let Some(v) = args.cost_tol.or(file.cost_tol) {
        cfg.cost_tol = v;
    }

    let result = fit_model(&cases, &schedule, &cfg)?;

    ensure_out_dir(out_dir)?;
    write_output(out_dir, "fit.json", &to_json_pretty(&result)?)?;

    let fitted = result.fitted_cases(population);
    let mut csv = String::from("date,observed,fitted\n");
    for ((date, observed), fitted) in cases.dates.iter().zip(&cases.confirmed).zip(&fitted) {
        csv.push_str(&format!(
            "{},{},{}\n",
            date.format("%Y-%m-%d"),
            observed,
            fitted
        ));
    }
    write_output(out_dir, "fitted.csv", csv.as_bytes())?;

    if let Some(polynomial_residual_norm) = schedule_residual {
        let summary = ScheduleSummary {
            schedule: &schedule,
            polynomial_residual_norm,
            moving_average_window: ma_window,
        };
        write_output(out_dir, "schedule.json", &to_json_pretty(&summary)?)?;
    }

    println!(
        "fit: converged={} iterations={} residual_norm={:.6e} -> {}",
        result.converged,
        result.iterations,
        result.residual_norm,
        out_dir.join("fit.json").display()
    );
    Ok(())
}

pub fn sweep(args: &SweepArgs, file: &FileConfig, out_dir: &Path) -> Result<(), CliError> {
    let (params, s0, i0) = resolve_params(args.params.preset.as_deref(), file, &args.params)?;
    let sick0 = args.sick0.or(file.sick0).unwrap_or(0.0);
    let x0 = State3::new(s0, i0, sick0);

    let theta_axis = linspace(
        args.theta_min.or(file.theta_min).unwrap_or(0.0),
        args.theta_max.or(file.theta_max).unwrap_or(0.7),
        args.theta_steps.or(file.theta_steps).unwrap_or(71),
    );
    let omega_axis = linspace(
        args.omega_min.or(file.omega_min).unwrap_or(0.0),
        args.omega_max.or(file.omega_max).unwrap_or(0.7),
        args.omega_steps.or(file.omega_steps).unwrap_or(71),
    );
    let horizon = args.horizon.or(file.horizon).unwrap_or(3650.0);
    let settle_tol = args.settle_tol.or(file.settle_tol).unwrap_or(1e-9);
    let population = args.population.or(file.population).unwrap_or(1.0);

    let grid = run_sweep(&params, &x0, &theta_axis, &omega_axis, horizon, settle_tol)?;

    ensure_out_dir(out_dir)?;
    let mut csv = Vec::new();
    grid.write_csv(&mut csv)
        .map_err(|e| CliError::io(format!("grid serialization failed: {e}")))?;
    write_output(out_dir, "sweep.csv", &csv)?;

    let mut json = serde_json::to_value(&grid)
        .map_err(|e| CliError::io(format!("grid serialization failed: {e}")))?;
    let counts: Vec<Vec<f64>> = grid
        .steady_sick
        .iter()
        .map(|row| row.iter().map(|v| v * population).collect())
        .collect();
    let object = json.as_object_mut().expect("grid serializes to an object");
    object.insert("population".into(), serde_json::json!(population));
    object.insert("steady_sick_counts".into(), serde_json::json!(counts));
    let mut bytes = serde_json::to_vec_pretty(&json)
        .map_err(|e| CliError::io(format!("grid serialization failed: {e}")))?;
    bytes.push(b'\n');
    write_output(out_dir, "sweep.json", &bytes)?;

    let unsettled: usize = grid
        .settled
        .iter()
        .flatten()
        .filter(|&&settled| !settled)
        .count();
    println!(
        "sweep: {}x{} cells, {} unsettled, {} failures -> {}",
        theta_axis.len(),
        omega_axis.len(),
        unsettled,
        grid.failures.len(),
        out_dir.join("sweep.csv").display()
    );
    Ok(())
}

pub fn preset(action: &PresetAction) -> Result<(), CliError> {
    match action {
        PresetAction::List => {
            for preset in presets::all() {
                println!("{}", preset.name);
            }
            Ok(())
        }
        PresetAction::Dump { city } => {
            let preset = presets::by_name(city)
                .ok_or_else(|| CliError::config(format!("unknown preset {city:?}")))?;
            let p = preset.params;
            // Fixed six-decimal formatting preserves the calibrated digits.
            println!("{{");
            println!("  \"name\": \"{}\",", preset.name);
            println!("  \"mu\": {:.6},", p.mu);
            println!("  \"gamma\": {:.6},", p.gamma);
            println!("  \"alpha\": {:.6},", p.alpha);
            println!("  \"theta\": {:.6},", p.theta);
            println!("  \"beta1\": {:.6},", p.beta1);
            println!("  \"beta2\": {:.6},", p.beta2);
            println!("  \"beta3\": {:.6},", p.beta3);
            println!("  \"omega\": {:.6},", p.omega);
            println!("  \"s0\": {:.6},", preset.s0);
            println!("  \"i0\": {:.6}", preset.i0);
            println!("}}");
            Ok(())
        }
    }
}
