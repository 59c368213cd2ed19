//! Year-long self-consistency round trips: synthetic case series generated
//! from each calibrated preset are re-fitted from the deterministic midpoint
//! start and must reproduce the trajectory to a small fraction of its peak.

use sirsi_core::fitting::{fit_model, CaseSeries, FitConfig, FitProblem};
use sirsi_core::odeint::ThetaSchedule;
use sirsi_core::presets;

fn daily_dates(n: usize) -> Vec<chrono::NaiveDate> {
    (0..n)
        .map(|k| chrono::NaiveDate::from_ymd_opt(2020, 3, 1).unwrap() + chrono::Days::new(k as u64))
        .collect()
}

#[test]
fn full_year_round_trips() {
    for preset in presets::all() {
        let n = 365;
        let population = 1e6;
        let theta = ThetaSchedule::constant(preset.params.theta);
        let cfg_truth = FitConfig::new(preset.params, preset.s0);
        let dates = daily_dates(n);
        let placeholder = CaseSeries::new(dates.clone(), vec![0.0; n], population).unwrap();
        let problem = FitProblem::new(&placeholder, &theta, &cfg_truth).unwrap();
        let truth_x = vec![
            preset.params.gamma,
            preset.params.alpha,
            preset.params.beta1,
            preset.params.beta2,
            preset.params.beta3,
            preset.s0,
        ];
        let truth = problem.trajectory(&truth_x).unwrap();
        let observed = truth.sick_counts(population);
        let cases = CaseSeries::new(dates, observed.clone(), population).unwrap();

        let cfg = FitConfig::new(preset.params, preset.s0);
        let fit = fit_model(&cases, &theta, &cfg).unwrap();
        let fitted = fit.fitted_cases(population);
        let peak = observed.iter().cloned().fold(0.0, f64::max);
        let rmse = (observed
            .iter()
            .zip(&fitted)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n as f64)
            .sqrt();
        println!(
            "{}: conv {} iters {} ratio {:.3e}",
            preset.name,
            fit.converged,
            fit.iterations,
            rmse / peak
        );
        assert!(rmse < 1e-3 * peak, "{}: {rmse} vs {peak}", preset.name);
    }
}
