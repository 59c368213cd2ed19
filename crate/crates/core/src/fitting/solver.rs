//! Bound-constrained nonlinear least squares.
//!
//! A Levenberg-Marquardt trust-region loop with projection onto the box and
//! a reflective retry whenever a step hits a bound. Accepted steps never
//! increase the cost and every iterate stays inside the box, so the loop is
//! a trust-region-reflective scheme specialized to small dense problems.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::Error;

#[derive(Debug, Clone, Copy)]
pub(crate) struct SolverOptions {
    pub max_iterations: usize,
    /// Stop when the projected gradient shrinks below this fraction of its
    /// initial magnitude.
    pub gradient_tol: f64,
    /// Stop when the accepted step is below `step_tol * (step_tol + |x|)`.
    pub step_tol: f64,
    /// Stop when the relative cost decrease of an accepted step falls below
    /// this value.
    pub cost_tol: f64,
    /// Relative forward-difference step for the residual Jacobian.
    pub fd_rel_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tol: 1e-6,
            step_tol: 1e-10,
            cost_tol: 1e-10,
            fd_rel_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SolverReport {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Sum of squared residuals at the start and after each accepted step.
    pub cost_history: Vec<f64>,
}

fn eval<F>(residuals: &F, x: &[f64]) -> Result<DVector<f64>, Error>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, Error>,
{
    match residuals(x) {
        Ok(r) => Ok(DVector::from_vec(r)),
        Err(e) => Err(Error::ResidualEval {
            point: x.to_vec(),
            source: Box::new(e),
        }),
    }
}

/// Finite-difference step for column `j`: `rel_step` times the bound span,
/// the span being the natural unit of a box-constrained variable (plain
/// `|x|` scaling degenerates for variables pinned near an affine offset,
/// like a fraction close to one).
pub(crate) fn fd_step(x: f64, lower: f64, upper: f64, rel_step: f64) -> f64 {
    rel_step * (upper - lower).max(x.abs() * f64::EPSILON.sqrt())
}

/// Forward-difference Jacobian of the residual vector, one column per free
/// parameter, evaluated in parallel. A column flips to a backward difference
/// when the forward probe would leave the box.
pub(crate) fn forward_jacobian<F>(
    residuals: &F,
    x: &[f64],
    r0: &DVector<f64>,
    lower: &[f64],
    upper: &[f64],
    rel_step: f64,
) -> Result<DMatrix<f64>, Error>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, Error> + Sync,
{
    let n = x.len();
    let columns: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .map(|j| -> Result<DVector<f64>, Error> {
            let mut h = fd_step(x[j], lower[j], upper[j], rel_step);
            if x[j] + h > upper[j] {
                h = -h;
            }
            let mut probe = x.to_vec();
            probe[j] = (probe[j] + h).clamp(lower[j], upper[j]);
            let actual = probe[j] - x[j];
            let r = eval(residuals, &probe)?;
            Ok((r - r0) / actual)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(DMatrix::from_columns(&columns))
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for j in 0..x.len() {
        x[j] = x[j].clamp(lower[j], upper[j]);
    }
}

fn reflect(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for j in 0..x.len() {
        if x[j] > upper[j] {
            x[j] = 2.0 * upper[j] - x[j];
        } else if x[j] < lower[j] {
            x[j] = 2.0 * lower[j] - x[j];
        }
        x[j] = x[j].clamp(lower[j], upper[j]);
    }
}

fn in_box(x: &[f64], lower: &[f64], upper: &[f64]) -> bool {
    x.iter()
        .zip(lower.iter().zip(upper))
        .all(|(v, (l, u))| *v >= *l && *v <= *u)
}

/// Minimizes `|residuals(x)|^2` over the box `[lower, upper]` starting from
/// the feasible point `x0`.
pub(crate) fn minimize<F>(
    residuals: &F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &SolverOptions,
) -> Result<SolverReport, Error>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, Error> + Sync,
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::InvalidConfig(
            "at least one free parameter is required".into(),
        ));
    }
    for j in 0..n {
        if !(lower[j] < upper[j]) || !lower[j].is_finite() || !upper[j].is_finite() {
            return Err(Error::InvalidConfig(format!(
                "bounds for parameter {j} must be finite with lower < upper, got [{}, {}]",
                lower[j], upper[j]
            )));
        }
    }
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);

    let mut r = eval(residuals, &x)?;
    let mut cost = r.norm_squared();
    let mut history = vec![cost];
    let mut lambda = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut initial_gnorm: Option<f64> = None;

    'outer: while iterations < opts.max_iterations {
        iterations += 1;

        let jac = forward_jacobian(residuals, &x, &r, lower, upper, opts.fd_rel_step)?;
        let gradient = jac.transpose() * &r;

        // Components pinned at a bound with a gradient pushing outward do not
        // count toward stationarity.
        let mut gnorm = 0.0_f64;
        for j in 0..n {
            let active_eps = 1e-10 * (upper[j] - lower[j]);
            let at_lower = x[j] - lower[j] <= active_eps && gradient[j] > 0.0;
            let at_upper = upper[j] - x[j] <= active_eps && gradient[j] < 0.0;
            if !(at_lower || at_upper) {
                gnorm = gnorm.max(gradient[j].abs());
            }
        }
        let g0 = *initial_gnorm.get_or_insert(gnorm);
        if gnorm <= opts.gradient_tol * g0 {
            converged = true;
            break;
        }

        let jtj = jac.transpose() * &jac;
        let mut diag = DVector::zeros(n);
        let max_diag = (0..n).map(|j| jtj[(j, j)]).fold(0.0_f64, f64::max);
        for j in 0..n {
            diag[j] = jtj[(j, j)].max(1e-12 * max_diag.max(1.0));
        }

        loop {
            let mut damped = jtj.clone();
            for j in 0..n {
                damped[(j, j)] += lambda * diag[j];
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                if lambda > 1e15 {
                    break 'outer;
                }
                continue;
            };
            let step = chol.solve(&(-&gradient));

            let raw: Vec<f64> = (0..n).map(|j| x[j] + step[j]).collect();
            let mut projected = raw.clone();
            project(&mut projected, lower, upper);
            let mut candidates = vec![projected.clone()];
            if projected != raw {
                let mut reflected = raw.clone();
                reflect(&mut reflected, lower, upper);
                if reflected != projected {
                    candidates.push(reflected);
                }
                // Shrinking the whole step to the first bound crossing keeps
                // its direction, which projection distorts.
                let mut fraction = 1.0_f64;
                for j in 0..n {
                    if step[j] != 0.0 {
                        let limit = if step[j] > 0.0 { upper[j] } else { lower[j] };
                        fraction = fraction.min(((limit - x[j]) / step[j]).max(0.0));
                    }
                }
                if fraction > 0.0 && fraction < 1.0 {
                    let mut scaled: Vec<f64> = (0..n).map(|j| x[j] + fraction * step[j]).collect();
                    project(&mut scaled, lower, upper);
                    if !candidates.contains(&scaled) {
                        candidates.push(scaled);
                    }
                }
            }

            // A candidate that fails to integrate (or returns a non-finite
            // cost) is treated as a rejected trial, not a fatal error.
            let mut best: Option<(f64, Vec<f64>, DVector<f64>)> = None;
            for cand in candidates {
                let Ok(rc) = eval(residuals, &cand) else {
                    continue;
                };
                let cc = rc.norm_squared();
                if !cc.is_finite() {
                    continue;
                }
                if best.as_ref().is_none_or(|(bc, _, _)| cc < *bc) {
                    best = Some((cc, cand, rc));
                }
            }
            let Some(found) = best else {
                lambda *= 4.0;
                if lambda > 1e15 {
                    break 'outer;
                }
                continue;
            };

            // Expand along the accepted direction while the cost keeps
            // falling; valley floors reward much longer steps than the
            // damped model proposes.
            let (mut new_cost, mut new_x, mut new_r) = found;
            if new_cost < cost {
                let dir: Vec<f64> = (0..n).map(|j| new_x[j] - x[j]).collect();
                let mut factor = 2.0;
                for _ in 0..8 {
                    let mut trial: Vec<f64> = (0..n).map(|j| x[j] + factor * dir[j]).collect();
                    project(&mut trial, lower, upper);
                    if trial == new_x {
                        break;
                    }
                    match eval(residuals, &trial) {
                        Ok(rt) => {
                            let ct = rt.norm_squared();
                            if ct.is_finite() && ct < new_cost {
                                new_cost = ct;
                                new_x = trial;
                                new_r = rt;
                                factor *= 2.0;
                            } else {
                                break;
                            }
                        }
                        Err(_) => break,
                    }
                }
            }

            if new_cost < cost {
                debug_assert!(in_box(&new_x, lower, upper));
                let step_norm: f64 = new_x
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let x_norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let decrease = cost - new_cost;

                x = new_x;
                r = new_r;
                let prev_cost = cost;
                cost = new_cost;
                history.push(cost);
                lambda = (lambda / 3.0).max(1e-12);

                if step_norm <= opts.step_tol * (opts.step_tol + x_norm)
                    || decrease <= opts.cost_tol * prev_cost
                {
                    converged = true;
                    break 'outer;
                }
                break;
            }

            lambda *= 4.0;
            if lambda > 1e15 {
                // No acceptable step remains at any damping: stalled.
                break 'outer;
            }
        }
    }

    Ok(SolverReport {
        x,
        residual_norm: cost.sqrt(),
        iterations,
        converged,
        cost_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Rosenbrock-style residuals with a known box-constrained optimum.
    fn rosenbrock(x: &[f64]) -> Result<Vec<f64>, Error> {
        Ok(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]])
    }

    fn tight() -> SolverOptions {
        SolverOptions {
            max_iterations: 300,
            gradient_tol: 1e-12,
            step_tol: 1e-14,
            cost_tol: 0.0,
            fd_rel_step: 1e-7,
        }
    }

    #[test]
    fn unconstrained_minimum_inside_box() {
        let report = minimize(
            &rosenbrock,
            &[-1.2, 1.0],
            &[-2.0, -2.0],
            &[2.0, 2.0],
            &tight(),
        )
        .unwrap();
        assert!(report.converged);
        assert!((report.x[0] - 1.0).abs() < 1e-6);
        assert!((report.x[1] - 1.0).abs() < 1e-6);
        assert!(report.residual_norm < 1e-6);
    }

    #[test]
    fn active_bound_is_respected() {
        // Optimum of the unconstrained problem is (1, 1); cap x1 at 0.5.
        let report = minimize(
            &rosenbrock,
            &[-1.2, 0.0],
            &[-2.0, -2.0],
            &[2.0, 0.5],
            &tight(),
        )
        .unwrap();
        assert!(report.x[1] <= 0.5);
        for w in report.cost_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn linear_problem_converges_in_few_iterations() {
        // Residuals A x - b with A = [[1,0],[0,2],[1,1]], b = [1,2,2].
        let f = |x: &[f64]| -> Result<Vec<f64>, Error> {
            Ok(vec![x[0] - 1.0, 2.0 * x[1] - 2.0, x[0] + x[1] - 2.0])
        };
        let report = minimize(&f, &[0.0, 0.0], &[-10.0, -10.0], &[10.0, 10.0], &tight()).unwrap();
        assert!(report.converged);
        assert!(report.residual_norm < 1e-8);
        assert!(report.iterations < 60);
    }

    #[test]
    fn empty_free_set_is_rejected() {
        let f = |_: &[f64]| -> Result<Vec<f64>, Error> { Ok(vec![]) };
        assert!(minimize(&f, &[], &[], &[], &SolverOptions::default()).is_err());
    }
}
