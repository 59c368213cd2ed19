//! Adaptive Dormand-Prince 5(4) integration of the model systems.
//!
//! The solver produces trajectories sampled on a fixed grid, supports a
//! time-varying social-distancing schedule, and detects steady states from
//! the derivative magnitude. Stepping is fully deterministic: identical
//! inputs produce bit-identical outputs.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{self, Params, State3};

/// Tolerances and horizon for one integration run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    /// Relative local error tolerance.
    pub rel_tol: f64,
    /// Absolute local error tolerance.
    pub abs_tol: f64,
    /// Start time in days.
    pub t0: f64,
    /// End time in days.
    pub t1: f64,
    /// Output sampling interval in days.
    pub sample_step: f64,
    /// Budget of attempted (accepted plus rejected) steps.
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            t0: 0.0,
            t1: 365.0,
            sample_step: 1.0,
            max_steps: 10_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerances must be positive, got rel {} abs {}",
                self.rel_tol, self.abs_tol
            )));
        }
        if !(self.t1 > self.t0) {
            return Err(Error::InvalidConfig(format!(
                "t1 must exceed t0, got [{}, {}]",
                self.t0, self.t1
            )));
        }
        if !(self.sample_step > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sample_step must be positive, got {}",
                self.sample_step
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Social-distancing index as a function of days since simulation start.
///
/// Evaluated values are clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThetaSchedule {
    Constant {
        value: f64,
    },
    /// Polynomial coefficients over time in days, lowest degree first.
    Polynomial {
        coefficients: Vec<f64>,
    },
}

impl ThetaSchedule {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn polynomial(coefficients: Vec<f64>) -> Self {
        Self::Polynomial { coefficients }
    }

    /// Index at time `t`, clamped to `[0, 1]`.
    pub fn eval(&self, t: f64) -> f64 {
        let raw = match self {
            Self::Constant { value } => *value,
            Self::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, &c| acc * t + c)
            }
        };
        raw.clamp(0.0, 1.0)
    }
}

/// A sampled trajectory of the reduced system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    /// Sample times in days, strictly increasing.
    pub times: Vec<f64>,
    pub states: Vec<State3>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Sick-compartment channel scaled by a population size.
    pub fn sick_counts(&self, population: f64) -> Vec<f64> {
        self.states.iter().map(|x| x.sick * population).collect()
    }

    /// Writes `t,s,i,sick,r` rows at full double precision (17 significant
    /// digits); `r` is reconstructed from conservation.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,s,i,sick,r")?;
        for (t, x) in self.times.iter().zip(&self.states) {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                t,
                x.s,
                x.i,
                x.sick,
                x.recovered()
            )?;
        }
        Ok(())
    }
}

/// Outcome of a steady-state search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyState {
    pub state: State3,
    /// True when the derivative dropped below the settle tolerance before the
    /// horizon; false when the horizon state is returned instead.
    pub settled: bool,
    /// Time at which the search stopped, in days.
    pub t: f64,
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

// Fifth-order weights (also the seventh-stage coefficients: first-same-as-last).
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// Difference between the fifth- and embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

pub(crate) struct StepOutcome<const N: usize> {
    pub y_new: [f64; N],
    /// Derivative at `(t + h, y_new)`, reusable as the next first stage.
    pub k_last: [f64; N],
    /// Scaled error norm; the step is acceptable when at most one.
    pub err: f64,
}

/// One embedded Dormand-Prince step of size `h` from `(t, y)`; `k1` must be
/// the derivative at `(t, y)`.
pub(crate) fn dopri5_step<const N: usize, F>(
    f: &F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> StepOutcome<N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut stage = [0.0; N];

    for i in 0..N {
        stage[i] = y[i] + h * (A21 * k1[i]);
    }
    let k2 = f(t + C2 * h, &stage);

    for i in 0..N {
        stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    let k3 = f(t + C3 * h, &stage);

    for i in 0..N {
        stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    let k4 = f(t + C4 * h, &stage);

    for i in 0..N {
        stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    let k5 = f(t + C5 * h, &stage);

    for i in 0..N {
        stage[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    let k6 = f(t + h, &stage);

    let mut y_new = [0.0; N];
    for i in 0..N {
        y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
    }
    let k_last = f(t + h, &y_new);

    let mut sum = 0.0;
    for i in 0..N {
        let e =
            h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k_last[i]);
        let scale = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
        sum += (e / scale) * (e / scale);
    }
    let err = (sum / N as f64).sqrt();

    StepOutcome { y_new, k_last, err }
}

/// Low-level adaptive driver. Lands exactly on each of `targets` (strictly
/// increasing, inside `(t0, t1]`), invoking `on_target` there, and invokes
/// `on_accept` after every accepted step; `Ok(true)` from `on_accept` stops
/// the integration early. Returns the final `(t, y)`.
#[allow(clippy::too_many_arguments)]
fn drive<const N: usize, F, G, H>(
    f: &F,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    rel_tol: f64,
    abs_tol: f64,
    max_steps: usize,
    targets: &[f64],
    mut on_target: G,
    mut on_accept: H,
) -> Result<(f64, [f64; N]), Error>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    G: FnMut(f64, &[f64; N]),
    H: FnMut(f64, &[f64; N], &[f64; N]) -> Result<bool, Error>,
{
    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    if !y.iter().all(|v| v.is_finite()) || !k1.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState { t });
    }

    let mut h = (span * 1e-3).min(1.0).max(span * 1e-10);
    let mut steps = 0usize;
    let mut next_target = 0usize;

    while t < t1 {
        let target = targets.get(next_target).copied().unwrap_or(t1);
        let clamp = target - t;

        // Snap when the remaining gap is below resolution.
        if clamp <= 1e-12 * t.abs().max(1.0) {
            t = target;
            if next_target < targets.len() {
                on_target(t, &y);
                next_target += 1;
            }
            continue;
        }

        if steps >= max_steps {
            return Err(Error::StepLimitExceeded { max_steps, t });
        }
        steps += 1;

        let h_try = h.min(clamp);
        if h_try <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t });
        }
        let hit_target = h_try >= clamp;
        let out = dopri5_step(f, t, &y, &k1, h_try, rel_tol, abs_tol);

        if !out.err.is_finite() {
            h = h_try * 0.1;
            continue;
        }

        if out.err <= 1.0 {
            t = if hit_target { target } else { t + h_try };
            y = out.y_new;
            k1 = out.k_last;
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteState { t });
            }

            let fac = if out.err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * out.err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            // A step clamped to an output point must not shrink the free
            // proposal it was cut from.
            h = if hit_target {
                h.max(h_try * fac)
            } else {
                h_try * fac
            };

            if hit_target && next_target < targets.len() {
                on_target(t, &y);
                next_target += 1;
            }
            if on_accept(t, &y, &k1)? {
                return Ok((t, y));
            }
        } else {
            let fac = (SAFETY * out.err.powf(-0.2)).clamp(FAC_MIN, 1.0);
            h = h_try * fac;
        }
    }

    Ok((t, y))
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1`, returning the state at
/// each of `sample_times` (strictly increasing, within `[t0, t1]`).
///
/// `f` must be total on the integration domain; validate inputs beforehand.
#[allow(clippy::too_many_arguments)]
pub fn solve_ivp<const N: usize, F>(
    f: F,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    rel_tol: f64,
    abs_tol: f64,
    max_steps: usize,
    sample_times: &[f64],
) -> Result<Vec<[f64; N]>, Error>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    if !(t1 > t0) {
        return Err(Error::InvalidConfig(format!(
            "t1 must exceed t0, got [{t0}, {t1}]"
        )));
    }
    for pair in sample_times.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(Error::InvalidConfig(
                "sample times must be strictly increasing".into(),
            ));
        }
    }
    if let (Some(&first), Some(&last)) = (sample_times.first(), sample_times.last()) {
        if first < t0 || last > t1 {
            return Err(Error::InvalidConfig(
                "sample times must lie within [t0, t1]".into(),
            ));
        }
    }

    let mut samples = Vec::with_capacity(sample_times.len());
    let leading = if sample_times.first() == Some(&t0) {
        samples.push(y0);
        &sample_times[1..]
    } else {
        sample_times
    };

    drive(
        &f,
        t0,
        t1,
        y0,
        rel_tol,
        abs_tol,
        max_steps,
        leading,
        |_, y| samples.push(*y),
        |_, _, _| Ok(false),
    )?;
    Ok(samples)
}

fn uniform_sample_times(cfg: &IntegratorConfig) -> Vec<f64> {
    let span = cfg.t1 - cfg.t0;
    let n = (span / cfg.sample_step + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=n)
        .map(|k| cfg.t0 + k as f64 * cfg.sample_step)
        .collect();
    let last = *times.last().expect("at least the start sample");
    if last < cfg.t1 - 1e-9 * span.max(1.0) {
        times.push(cfg.t1);
    } else if last > cfg.t1 {
        *times.last_mut().unwrap() = cfg.t1;
    }
    times
}

/// Integrates the reduced SIRSi-Vaccine system under a social-distancing
/// schedule, sampling every `cfg.sample_step` days (the horizon end is always
/// included as the final sample).
///
/// Every sample is checked to stay in the admissible region within `1e-9`.
pub fn integrate(
    p: &Params,
    x0: &State3,
    sched: &ThetaSchedule,
    cfg: &IntegratorConfig,
) -> Result<TimeSeries, Error> {
    p.validate()?;
    x0.validate()?;
    cfg.validate()?;

    let times = uniform_sample_times(cfg);
    let states = integrate_samples(p, x0, sched, &times, cfg)?;
    Ok(TimeSeries { times, states })
}

/// As [`integrate`] but sampling at caller-provided times (strictly
/// increasing, within `[cfg.t0, cfg.t1]`).
pub fn integrate_samples(
    p: &Params,
    x0: &State3,
    sched: &ThetaSchedule,
    sample_times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<State3>, Error> {
    p.validate()?;
    x0.validate()?;
    cfg.validate()?;

    let p = *p;
    let sched = sched.clone();
    let f = move |t: f64, y: &[f64; 3]| {
        let pt = p.with_theta(sched.eval(t));
        model::sirsi_vaccine_3d_unchecked(&pt, &State3::from_array(*y)).to_array()
    };

    let raw = solve_ivp(
        f,
        cfg.t0,
        cfg.t1,
        x0.to_array(),
        cfg.rel_tol,
        cfg.abs_tol,
        cfg.max_steps,
        sample_times,
    )?;

    let mut states = Vec::with_capacity(raw.len());
    for (y, &t) in raw.iter().zip(sample_times) {
        let x = State3::from_array(*y);
        if !x.in_domain(1e-9) {
            let (component, value) = domain_offender(&x);
            return Err(Error::StateLeftDomain {
                t,
                component,
                value,
            });
        }
        states.push(x);
    }
    Ok(states)
}

fn domain_offender(x: &State3) -> (&'static str, f64) {
    if x.s < -1e-9 {
        ("s", x.s)
    } else if x.i < -1e-9 {
        ("i", x.i)
    } else if x.sick < -1e-9 {
        ("sick", x.sick)
    } else {
        ("s+i+sick", x.s + x.i + x.sick)
    }
}

/// Runs the reduced system with constant `p.theta` until the derivative
/// magnitude falls below `settle_tol` componentwise, or until `horizon` days.
///
/// Uses tighter tolerances than [`IntegratorConfig::default`]: long runs
/// converging onto the simplex boundary must stay inside the admissible
/// region within its `1e-9` slack.
pub fn steady_state(
    p: &Params,
    x0: &State3,
    horizon: f64,
    settle_tol: f64,
) -> Result<SteadyState, Error> {
    let cfg = IntegratorConfig {
        rel_tol: 1e-10,
        abs_tol: 1e-12,
        ..Default::default()
    };
    steady_state_with(p, x0, horizon, settle_tol, &cfg)
}

/// As [`steady_state`] with explicit integrator tolerances; `cfg.t0`, `cfg.t1`
/// and `cfg.sample_step` are ignored.
pub fn steady_state_with(
    p: &Params,
    x0: &State3,
    horizon: f64,
    settle_tol: f64,
    cfg: &IntegratorConfig,
) -> Result<SteadyState, Error> {
    p.validate()?;
    x0.validate()?;
    if !(horizon > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if !(settle_tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "settle tolerance must be positive, got {settle_tol}"
        )));
    }

    let p = *p;
    let f = move |_t: f64, y: &[f64; 3]| {
        model::sirsi_vaccine_3d_unchecked(&p, &State3::from_array(*y)).to_array()
    };

    // Settled when every derivative component is below tolerance; the
    // first-same-as-last stage provides the derivative for free.
    let mut settled = false;
    let (t, y) = drive(
        &f,
        0.0,
        horizon,
        x0.to_array(),
        cfg.rel_tol,
        cfg.abs_tol,
        cfg.max_steps,
        &[],
        |_, _| {},
        |t, y, dy| {
            let x = State3::from_array(*y);
            if !x.in_domain(1e-9) {
                let (component, value) = domain_offender(&x);
                return Err(Error::StateLeftDomain {
                    t,
                    component,
                    value,
                });
            }
            if dy.iter().all(|d| d.abs() < settle_tol) {
                settled = true;
                return Ok(true);
            }
            Ok(false)
        },
    )?;

    Ok(SteadyState {
        state: State3::from_array(y),
        settled,
        t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria;
    use crate::presets;
    use crate::test_util::params_strategy;
    use proptest::prelude::*;

    fn santos() -> Params {
        presets::santos().params
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn trajectories_stay_in_the_admissible_region(
            p in params_strategy(),
            s in 0.25..1.0f64,
            i in 0.0..0.2f64,
            sick in 0.0..0.2f64,
        ) {
            let scale = (s + i + sick).max(1.0);
            let x0 = State3::new(s / scale, i / scale, sick / scale);
            let cfg = IntegratorConfig::default();
            // integrate() enforces the admissible region on every sample and
            // fails otherwise; spot-check the returned states as well.
            let ts = integrate(&p, &x0, &ThetaSchedule::constant(p.theta), &cfg).unwrap();
            for x in &ts.states {
                prop_assert!(x.in_domain(1e-9));
            }
        }
    }

    #[test]
    fn schedule_clamps_to_unit_interval() {
        let sched = ThetaSchedule::polynomial(vec![-0.5, 0.1]);
        assert_eq!(sched.eval(0.0), 0.0);
        assert!((sched.eval(7.0) - 0.2).abs() < 1e-15);
        assert_eq!(sched.eval(100.0), 1.0);
        assert_eq!(ThetaSchedule::constant(0.4).eval(123.0), 0.4);
    }

    #[test]
    fn sample_grid_covers_horizon() {
        let cfg = IntegratorConfig {
            t0: 0.0,
            t1: 10.0,
            sample_step: 3.0,
            ..Default::default()
        };
        let times = uniform_sample_times(&cfg);
        assert_eq!(times, vec![0.0, 3.0, 6.0, 9.0, 10.0]);

        let cfg = IntegratorConfig {
            t0: 0.0,
            t1: 9.0,
            sample_step: 3.0,
            ..Default::default()
        };
        assert_eq!(uniform_sample_times(&cfg), vec![0.0, 3.0, 6.0, 9.0]);
    }

    #[test]
    fn csv_rows_carry_seventeen_significant_digits() {
        let series = TimeSeries {
            times: vec![0.0, 0.5],
            states: vec![State3::new(0.25, 0.5, 0.125), State3::new(0.2, 0.4, 0.1)],
        };
        let mut buf = Vec::new();
        series.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,s,i,sick,r");
        assert_eq!(
            lines.next().unwrap(),
            "0.0000000000000000e0,2.5000000000000000e-1,5.0000000000000000e-1,\
             1.2500000000000000e-1,1.2500000000000000e-1"
        );
    }

    #[test]
    fn equilibrium_initial_condition_stays_constant() {
        let p = santos().with_omega(0.05);
        let x0 = equilibria::disease_free_point(&p).unwrap();
        let cfg = IntegratorConfig::default();
        let ts = integrate(&p, &x0, &ThetaSchedule::constant(p.theta), &cfg).unwrap();
        for x in &ts.states {
            assert!((x.s - x0.s).abs() < 1e-8);
            assert!(x.i.abs() < 1e-8);
            assert!(x.sick.abs() < 1e-8);
        }
    }

    #[test]
    fn subcritical_outbreak_decays() {
        // theta = 0.7 pushes the reproduction number below one.
        let p = santos().with_theta(0.7);
        let x0 = presets::santos().initial_state();
        let cfg = IntegratorConfig::default();
        let ts = integrate(&p, &x0, &ThetaSchedule::constant(0.7), &cfg).unwrap();

        let i: Vec<f64> = ts.states.iter().map(|x| x.i).collect();
        assert!(*i.last().unwrap() < i[0]);
        let peak = i
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        for w in i[peak..].windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(*i.last().unwrap() < 1e-6);
    }

    #[test]
    fn vaccination_split_around_threshold() {
        let p = santos();
        let x0 = presets::santos().initial_state();
        let high = steady_state(&p.with_omega(0.1), &x0, 3650.0, 1e-9).unwrap();
        assert!(high.state.sick < 1e-6);
        let low = steady_state(&p.with_omega(0.01), &x0, 3650.0, 1e-9).unwrap();
        assert!(low.state.sick > 1e-4);
    }

    #[test]
    fn steady_state_finds_disease_free_point() {
        let p = santos().with_theta(0.7).with_omega(0.0);
        let x0 = presets::santos().initial_state();
        let out = steady_state(&p, &x0, 3650.0, 1e-9).unwrap();
        assert!(out.settled);
        assert!((out.state.s - 1.0).abs() < 1e-5);
        assert!(out.state.i.abs() < 1e-8);
        assert!(out.state.sick.abs() < 1e-8);
    }

    #[test]
    fn steady_state_finds_endemic_point() {
        let p = santos();
        let x0 = presets::santos().initial_state();
        let out = steady_state(&p, &x0, 20000.0, 1e-10).unwrap();
        assert!(out.settled);
        let (endemic, _) = equilibria::endemic_point(&p).unwrap();
        assert!((out.state.s - endemic.s).abs() < 1e-6);
        assert!((out.state.i - endemic.i).abs() < 1e-6);
        assert!((out.state.sick - endemic.sick).abs() < 1e-6);
    }

    #[test]
    fn steady_state_above_threshold_reaches_df_point() {
        let p = santos().with_omega(0.1);
        let x0 = presets::santos().initial_state();
        let out = steady_state(&p, &x0, 20000.0, 1e-10).unwrap();
        assert!(out.settled);
        let df = equilibria::disease_free_point(&p).unwrap();
        // The settled band is settle_tol over the slowest outflow rate.
        assert!((out.state.s - df.s).abs() < 1e-6);
        assert!(out.state.i.abs() < 1e-8);
        assert!(out.state.sick.abs() < 1e-8);
    }

    #[test]
    fn settled_state_has_small_residual() {
        let p = santos().with_omega(0.02);
        let x0 = presets::santos().initial_state();
        let settle_tol = 1e-9;
        let out = steady_state(&p, &x0, 20000.0, settle_tol).unwrap();
        assert!(out.settled);
        let d = model::rhs_sirsi_vaccine_3d(&p, &out.state).unwrap();
        for v in [d.s, d.i, d.sick] {
            assert!(v.abs() < 10.0 * settle_tol);
        }
    }

    #[test]
    fn integration_is_deterministic() {
        let p = santos().with_omega(0.003);
        let x0 = presets::santos().initial_state();
        let cfg = IntegratorConfig::default();
        let sched = ThetaSchedule::polynomial(vec![0.4, 1e-4, -2e-7]);
        let a = integrate(&p, &x0, &sched, &cfg).unwrap();
        let b = integrate(&p, &x0, &sched, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_budget_is_enforced() {
        let p = santos();
        let x0 = presets::santos().initial_state();
        let cfg = IntegratorConfig {
            max_steps: 3,
            ..Default::default()
        };
        match integrate(&p, &x0, &ThetaSchedule::constant(p.theta), &cfg) {
            Err(Error::StepLimitExceeded { max_steps: 3, .. }) => {}
            other => panic!("expected step limit error, got {other:?}"),
        }
    }

    #[test]
    fn fixed_step_error_shows_fifth_order() {
        // Integrate 24 days with fixed steps h and h/2; the error against a
        // tight adaptive reference must fall by roughly 2^5.
        let p = santos();
        let x0 = presets::santos().initial_state().to_array();
        let f = move |_t: f64, y: &[f64; 3]| {
            model::sirsi_vaccine_3d_unchecked(&p, &State3::from_array(*y)).to_array()
        };

        let t_end = 24.0;
        let reference =
            solve_ivp(f, 0.0, t_end, x0, 1e-13, 1e-14, 10_000_000, &[t_end]).unwrap()[0];

        let fixed_run = |h: f64| -> [f64; 3] {
            let n = (t_end / h).round() as usize;
            let mut y = x0;
            let mut t = 0.0;
            let mut k1 = f(t, &y);
            for _ in 0..n {
                let out = dopri5_step(&f, t, &y, &k1, h, 1.0, 1.0);
                y = out.y_new;
                k1 = out.k_last;
                t += h;
            }
            y
        };

        let err = |y: [f64; 3]| -> f64 {
            y.iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };

        let coarse = err(fixed_run(2.0));
        let fine = err(fixed_run(1.0));
        assert!(coarse > 0.0 && fine > 0.0);
        let ratio = coarse / fine;
        assert!(
            (16.0..80.0).contains(&ratio),
            "expected ~2^5 error reduction, got ratio {ratio}"
        );
    }

    #[test]
    fn tighter_tolerances_reduce_error() {
        let p = santos();
        let x0 = presets::santos().initial_state().to_array();
        let f = move |_t: f64, y: &[f64; 3]| {
            model::sirsi_vaccine_3d_unchecked(&p, &State3::from_array(*y)).to_array()
        };
        let t_end = 365.0;
        let reference =
            solve_ivp(f, 0.0, t_end, x0, 1e-13, 1e-14, 10_000_000, &[t_end]).unwrap()[0];
        let run = |rel: f64| -> f64 {
            let y = solve_ivp(f, 0.0, t_end, x0, rel, rel * 1e-2, 10_000_000, &[t_end]).unwrap()[0];
            y.iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let e4 = run(1e-4);
        let e6 = run(1e-6);
        let e8 = run(1e-8);
        assert!(e4 > e6 && e6 > e8, "errors must decrease: {e4} {e6} {e8}");
        assert!(e4 / e8 > 1e2);
    }
}
