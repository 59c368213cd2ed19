//! Closed-form equilibria, Jacobians, eigenvalues, and Routh-Hurwitz
//! stability classification for the SIRSi and SIRSi-Vaccine systems.
//!
//! Eigenvalues of the 3x3 Jacobians are obtained from the characteristic
//! cubic in closed form (trigonometric branch for three real roots), followed
//! by a Newton polish; no general eigensolver is involved.

use serde::Serialize;

use crate::error::Error;
use crate::model::{r0, Params, State3};

/// One eigenvalue as a real/imaginary pair, in per-day units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    DiseaseFree,
    Endemic,
}

/// Equilibrium coordinates together with the scalar diagnostics that decide
/// existence and stability.
///
/// When `exists` is false the point carries the formal coordinates (some
/// component negative), or NaN when the defining expressions are undefined
/// (`theta = 1` or `alpha = 0`).
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub kind: EquilibriumKind,
    pub point: State3,
    pub exists: bool,
    pub eigenvalues: [Eigenvalue; 3],
    pub stable: bool,
    pub r0: f64,
    pub psi: f64,
    pub omega_threshold: f64,
    pub routh_b1: Option<f64>,
}

/// Disease-free equilibrium `((mu+gamma)/(mu+gamma+omega), 0, 0)`; reduces to
/// `(1, 0, 0)` when `omega = 0`.
pub fn disease_free_point(p: &Params) -> Result<State3, Error> {
    p.validate()?;
    let den = p.mu + p.gamma + p.omega;
    if den <= 0.0 {
        return Err(Error::Degenerate(
            "mu + gamma + omega must be positive for the disease-free point".into(),
        ));
    }
    Ok(State3::new((p.mu + p.gamma) / den, 0.0, 0.0))
}

/// Scale factor of the endemic infected and sick coordinates.
///
/// Non-negative exactly when the endemic point exists; with `omega = 0` it
/// coincides with the plain SIRSi scale factor.
pub fn psi(p: &Params) -> Result<f64, Error> {
    p.validate()?;
    let c1 = p.transmission();
    if c1 <= 0.0 {
        return Err(Error::Degenerate(
            "alpha (1 - theta) must be positive for the endemic point".into(),
        ));
    }
    let outflow = p.infected_outflow();
    let sick_outflow = p.beta3 + p.mu;
    let num = c1 * (p.gamma + p.mu) - outflow * (p.gamma + p.mu + p.omega);
    let den = c1 * ((p.beta1 + p.beta2 + p.gamma + p.mu) * sick_outflow + p.beta2 * p.gamma);
    if den <= 0.0 {
        return Err(Error::Degenerate(
            "endemic scale denominator must be positive".into(),
        ));
    }
    Ok(num / den)
}

/// Endemic equilibrium and its scale factor.
///
/// The coordinates are formal: when the scale factor is negative the point is
/// non-physical and flagged non-existent by [`classify`].
pub fn endemic_point(p: &Params) -> Result<(State3, f64), Error> {
    let scale = psi(p)?;
    let s = p.infected_outflow() / p.transmission();
    let point = State3::new(s, (p.beta3 + p.mu) * scale, p.beta2 * scale);
    Ok((point, scale))
}

/// Jacobian of the reduced SIRSi-Vaccine system at `x`; with `omega = 0` this
/// is the plain SIRSi Jacobian.
pub fn jacobian(p: &Params, x: &State3) -> [[f64; 3]; 3] {
    let c1 = p.transmission();
    [
        [
            -c1 * x.i - (p.mu + p.gamma + p.omega),
            -c1 * x.s - p.gamma,
            -p.gamma,
        ],
        [c1 * x.i, c1 * x.s - p.infected_outflow(), 0.0],
        [0.0, p.beta2, -(p.beta3 + p.mu)],
    ]
}

/// Closed-form eigenvalues at the disease-free point: all real.
pub fn df_eigenvalues(p: &Params) -> Result<[f64; 3], Error> {
    p.validate()?;
    let den = p.mu + p.gamma + p.omega;
    if den <= 0.0 {
        return Err(Error::Degenerate(
            "mu + gamma + omega must be positive for the disease-free eigenvalues".into(),
        ));
    }
    let s_df = (p.mu + p.gamma) / den;
    Ok([
        -(p.gamma + p.mu + p.omega),
        -p.infected_outflow() + p.transmission() * s_df,
        -(p.beta3 + p.mu),
    ])
}

/// Vaccination rate above which the disease-free point is stable,
/// `(R0 - 1)(mu + gamma)`. The endemic point exists exactly for rates at or
/// below it; negative when `R0 < 1`, so any non-negative rate stabilizes.
pub fn omega_threshold(p: &Params) -> Result<f64, Error> {
    Ok((r0(p)? - 1.0) * (p.mu + p.gamma))
}

/// Plain SIRSi endemic scale factor (the `omega = 0` specialization).
pub fn phi(p: &Params) -> Result<f64, Error> {
    p.validate()?;
    if p.omega != 0.0 {
        return Err(Error::InvalidParams(
            "phi is defined for the plain SIRSi system; omega must be 0".into(),
        ));
    }
    let c1 = p.transmission();
    if c1 <= 0.0 {
        return Err(Error::Degenerate(
            "alpha (1 - theta) must be positive for the endemic point".into(),
        ));
    }
    let outflow = p.infected_outflow();
    let sick_outflow = p.beta3 + p.mu;
    let num = (p.gamma + p.mu) * (c1 - outflow);
    let den = c1 * (outflow * sick_outflow + (p.beta2 + p.beta3 + p.mu) * p.gamma);
    if den <= 0.0 {
        return Err(Error::Degenerate(
            "endemic scale denominator must be positive".into(),
        ));
    }
    Ok(num / den)
}

/// Closed-form characteristic-polynomial coefficients `(a1, a2, a3)` of the
/// plain SIRSi Jacobian at the endemic point (`omega` must be 0; the point
/// must exist, i.e. the scale factor must be positive).
pub fn char_poly_endemic(p: &Params) -> Result<(f64, f64, f64), Error> {
    let scale = phi(p)?;
    if scale <= 0.0 {
        return Err(Error::Degenerate(format!(
            "endemic point does not exist (scale factor {scale} <= 0)"
        )));
    }
    Ok(char_poly_endemic_at(p, scale))
}

fn char_poly_endemic_at(p: &Params, phi: f64) -> (f64, f64, f64) {
    let c1 = p.transmission();
    let d = p.beta3 + p.mu;
    let a1 = phi * c1 * d + p.beta3 + p.gamma + 2.0 * p.mu;
    let a2 = d * (p.gamma + p.mu + phi * c1 * (p.beta1 + p.beta2 + p.beta3 + p.gamma + 2.0 * p.mu));
    let a3 = phi
        * c1
        * d
        * (p.beta1 * p.beta3
            + p.beta1 * p.mu
            + p.beta2 * p.beta3
            + p.beta2 * p.gamma
            + p.beta2 * p.mu
            + p.beta3 * p.gamma
            + p.beta3 * p.mu
            + p.gamma * p.mu
            + p.mu * p.mu);
    (a1, a2, a3)
}

/// Routh-Hurwitz margin `b1 = a2 - a3 / a1` of a cubic
/// `x^3 + a1 x^2 + a2 x + a3`; with positive coefficients the cubic is stable
/// exactly when `b1 > 0`.
pub fn routh_hurwitz_b1(a1: f64, a2: f64, a3: f64) -> Result<f64, Error> {
    if a1 == 0.0 {
        return Err(Error::Degenerate(
            "leading Routh-Hurwitz coefficient a1 is zero".into(),
        ));
    }
    Ok(a2 - a3 / a1)
}

/// The same margin evaluated through its factored expansion in the endemic
/// scale factor; agrees with [`routh_hurwitz_b1`] applied to
/// [`char_poly_endemic`], which validates the factorization numerically.
pub fn routh_hurwitz_b1_factored(p: &Params, phi: f64) -> Result<f64, Error> {
    p.validate()?;
    let (a1, _, _) = char_poly_endemic_at(p, phi);
    if a1 == 0.0 {
        return Err(Error::Degenerate(
            "leading Routh-Hurwitz coefficient a1 is zero".into(),
        ));
    }
    let c1 = p.transmission();
    let d = p.beta3 + p.mu;
    let c2 = (p.beta1 + p.beta2) * d
        + p.beta3 * p.beta3
        + p.beta3 * p.gamma
        + 3.0 * p.beta3 * p.mu
        + p.gamma * p.mu
        + 2.0 * p.mu * p.mu;
    let c3 = p.beta1 * p.gamma
        + p.beta1 * p.mu
        + p.beta2 * p.mu
        + p.beta3 * p.beta3
        + 2.0 * p.beta3 * p.gamma
        + 4.0 * p.beta3 * p.mu
        + p.gamma * p.gamma
        + 4.0 * p.gamma * p.mu
        + 4.0 * p.mu * p.mu;
    let c4 = p.beta3 * p.gamma
        + p.beta3 * p.mu
        + p.gamma * p.gamma
        + 3.0 * p.gamma * p.mu
        + 2.0 * p.mu * p.mu;
    Ok(d * (phi * phi * c1 * c1 * c2 + phi * c1 * c3 + c4) / a1)
}

/// Coefficients `(a1, a2, a3)` of the characteristic polynomial
/// `x^3 + a1 x^2 + a2 x + a3` of a 3x3 matrix, from its trace, the sum of
/// principal 2x2 minors, and its determinant.
pub fn char_poly_coeffs(m: &[[f64; 3]; 3]) -> (f64, f64, f64) {
    let trace = m[0][0] + m[1][1] + m[2][2];
    let minors = (m[0][0] * m[1][1] - m[0][1] * m[1][0])
        + (m[0][0] * m[2][2] - m[0][2] * m[2][0])
        + (m[1][1] * m[2][2] - m[1][2] * m[2][1]);
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    (-trace, minors, -det)
}

/// Roots of the monic cubic `x^3 + a x^2 + b x + c`, sorted by descending
/// real part (then ascending imaginary part). Complex roots come in
/// conjugate pairs.
pub fn cubic_roots(a: f64, b: f64, c: f64) -> [Eigenvalue; 3] {
    let q = (a * a - 3.0 * b) / 9.0;
    let r = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c) / 54.0;
    let r2 = r * r;
    let q3 = q * q * q;

    // Sign decisions on the discriminant use a relative tolerance so that
    // nearly multiple roots fall into the stable trigonometric branch.
    let scale = r2.max(q3.abs()).max(f64::MIN_POSITIVE);
    let disc = r2 - q3;

    let mut roots = if disc < 1e-12 * scale {
        if q <= 0.0 {
            // q and r both vanish: triple root.
            let x = -a / 3.0;
            [
                Eigenvalue { re: x, im: 0.0 },
                Eigenvalue { re: x, im: 0.0 },
                Eigenvalue { re: x, im: 0.0 },
            ]
        } else {
            let theta = (r / q3.sqrt()).clamp(-1.0, 1.0).acos();
            let m = -2.0 * q.sqrt();
            let mut out = [Eigenvalue { re: 0.0, im: 0.0 }; 3];
            for (k, slot) in out.iter_mut().enumerate() {
                let x = m * ((theta + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() - a / 3.0;
                *slot = Eigenvalue {
                    re: polish_real_root(x, a, b, c),
                    im: 0.0,
                };
            }
            out
        }
    } else {
        let big_a = -r.signum() * (r.abs() + disc.sqrt()).cbrt();
        let big_b = if big_a != 0.0 { q / big_a } else { 0.0 };
        let real = polish_real_root(big_a + big_b - a / 3.0, a, b, c);

        // Deflate by the real root and solve the remaining quadratic.
        let p2 = a + real;
        let q2 = b + real * p2;
        let disc2 = p2 * p2 - 4.0 * q2;
        if disc2 >= 0.0 {
            let sq = disc2.sqrt();
            let x1 = if p2 >= 0.0 {
                (-p2 - sq) / 2.0
            } else {
                (-p2 + sq) / 2.0
            };
            let x2 = if x1 != 0.0 { q2 / x1 } else { -p2 - x1 };
            [
                Eigenvalue { re: real, im: 0.0 },
                Eigenvalue {
                    re: polish_real_root(x1, a, b, c),
                    im: 0.0,
                },
                Eigenvalue {
                    re: polish_real_root(x2, a, b, c),
                    im: 0.0,
                },
            ]
        } else {
            let im = (-disc2).sqrt() / 2.0;
            let re = -p2 / 2.0;
            [
                Eigenvalue { re: real, im: 0.0 },
                Eigenvalue { re, im: -im },
                Eigenvalue { re, im },
            ]
        }
    };

    roots.sort_by(|x, y| y.re.total_cmp(&x.re).then(x.im.total_cmp(&y.im)));
    roots
}

fn polish_real_root(x0: f64, a: f64, b: f64, c: f64) -> f64 {
    let mut x = x0;
    for _ in 0..2 {
        let f = ((x + a) * x + b) * x + c;
        let df = (3.0 * x + 2.0 * a) * x + b;
        if df == 0.0 {
            break;
        }
        let step = f / df;
        if !step.is_finite() {
            break;
        }
        x -= step;
    }
    x
}

/// Eigenvalues of a 3x3 matrix through its characteristic cubic.
pub fn matrix_eigenvalues(m: &[[f64; 3]; 3]) -> [Eigenvalue; 3] {
    let (a1, a2, a3) = char_poly_coeffs(m);
    cubic_roots(a1, a2, a3)
}

/// Classifies both equilibria of the SIRSi-Vaccine system.
///
/// Disease-free stability follows the strict threshold inequality; endemic
/// existence uses the complementary non-strict one, so exactly on the
/// threshold the endemic point exists while the disease-free point is not
/// stable. Endemic stability is decided by Routh-Hurwitz on the numerically
/// computed characteristic polynomial of the Jacobian at the endemic point.
pub fn classify(p: &Params) -> Result<(EquilibriumReport, EquilibriumReport), Error> {
    p.validate()?;
    let r0v = r0(p)?;
    let threshold = (r0v - 1.0) * (p.mu + p.gamma);

    let df_point = disease_free_point(p)?;
    let df_lambda = df_eigenvalues(p)?;
    let df_eigs = {
        let mut v = df_lambda.map(|re| Eigenvalue { re, im: 0.0 });
        v.sort_by(|x, y| y.re.total_cmp(&x.re));
        v
    };
    let df_stable = p.omega > threshold && df_lambda[0] < 0.0 && df_lambda[2] < 0.0;

    let (endemic_pt, scale) = match endemic_point(p) {
        Ok(v) => v,
        Err(Error::Degenerate(_)) => (State3::new(f64::NAN, f64::NAN, f64::NAN), f64::NAN),
        Err(e) => return Err(e),
    };
    let exists = scale.is_finite() && p.omega <= threshold;

    let (endemic_eigs, b1, endemic_stable) = if endemic_pt.s.is_finite() {
        let j = jacobian(p, &endemic_pt);
        let (a1, a2, a3) = char_poly_coeffs(&j);
        let eigs = cubic_roots(a1, a2, a3);
        let b1 = if a1 != 0.0 { Some(a2 - a3 / a1) } else { None };
        let stable = exists && a1 > 0.0 && a3 > 0.0 && b1.is_some_and(|v| v > 0.0);
        (eigs, b1, stable)
    } else {
        (
            [Eigenvalue {
                re: f64::NAN,
                im: f64::NAN,
            }; 3],
            None,
            false,
        )
    };

    let df = EquilibriumReport {
        kind: EquilibriumKind::DiseaseFree,
        point: df_point,
        exists: true,
        eigenvalues: df_eigs,
        stable: df_stable,
        r0: r0v,
        psi: scale,
        omega_threshold: threshold,
        routh_b1: b1,
    };
    let endemic = EquilibriumReport {
        kind: EquilibriumKind::Endemic,
        point: endemic_pt,
        exists,
        eigenvalues: endemic_eigs,
        stable: endemic_stable,
        r0: r0v,
        psi: scale,
        omega_threshold: threshold,
        routh_b1: b1,
    };
    Ok((df, endemic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model;
    use crate::presets;
    use crate::test_util::params_strategy;
    use proptest::prelude::*;

    fn santos() -> Params {
        presets::santos().params
    }

    fn rhs_sup_norm(p: &Params, x: &State3) -> f64 {
        let d = model::rhs_sirsi_vaccine_3d(p, x).unwrap();
        d.s.abs().max(d.i.abs()).max(d.sick.abs())
    }

    #[test]
    fn disease_free_point_limits() {
        let p = santos();
        let df = disease_free_point(&p).unwrap();
        assert_eq!((df.s, df.i, df.sick), (1.0, 0.0, 0.0));

        let df = disease_free_point(&p.with_omega(0.1)).unwrap();
        assert!((df.s - 0.50007).abs() < 1e-5);

        // Monotone decreasing susceptible fraction in the vaccination rate.
        let mut prev = 1.0;
        for k in 1..50 {
            let s = disease_free_point(&p.with_omega(k as f64 * 0.05))
                .unwrap()
                .s;
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn endemic_point_merges_at_threshold() {
        // alpha equal to the infected outflow at theta = 0 puts R0 exactly at
        // one; the endemic point collapses onto the disease-free point.
        let p = santos();
        let q = Params {
            alpha: p.infected_outflow(),
            theta: 0.0,
            omega: 0.0,
            ..p
        };
        let (point, scale) = endemic_point(&q).unwrap();
        assert_eq!(scale, 0.0);
        assert_eq!((point.s, point.i, point.sick), (1.0, 0.0, 0.0));
    }

    #[test]
    fn santos_endemic_point_is_a_fixed_point() {
        let p = santos();
        let (point, scale) = endemic_point(&p).unwrap();
        assert!(scale > 0.0);
        assert!(point.i > 0.0 && point.sick > 0.0);
        assert!(rhs_sup_norm(&p, &point) < 1e-12);

        // Frozen from the closed forms evaluated at the fitted values.
        assert!((point.s - 0.88174649).abs() < 1e-7);
        assert!((point.i - 0.01288807).abs() < 1e-7);
        assert!((point.sick - 0.05384162).abs() < 1e-7);
    }

    #[test]
    fn vaccinated_endemic_point_is_a_fixed_point() {
        let p = santos().with_omega(0.005);
        let (point, scale) = endemic_point(&p).unwrap();
        assert!(scale > 0.0);
        assert!(rhs_sup_norm(&p, &point) < 1e-10);
    }

    #[test]
    fn endemic_point_vanishes_above_threshold() {
        let p = santos().with_omega(0.05);
        let (_, scale) = endemic_point(&p).unwrap();
        assert!(scale < 0.0);
        let (_, endemic) = classify(&p).unwrap();
        assert!(!endemic.exists);
    }

    #[test]
    fn endemic_point_undefined_under_lockdown() {
        let p = santos().with_theta(1.0);
        assert!(matches!(endemic_point(&p), Err(Error::Degenerate(_))));

        // classify still succeeds: the formal coordinates are NaN, the point
        // is flagged non-existent, and the disease-free point is stable.
        let (df, endemic) = classify(&p).unwrap();
        assert!(df.stable);
        assert!(!endemic.exists && !endemic.stable);
        assert!(endemic.point.s.is_nan());
        let json = serde_json::to_value(&endemic).unwrap();
        assert_eq!(json["psi"], serde_json::Value::Null);
    }

    #[test]
    fn jacobian_structure_at_disease_free_point() {
        let p = santos().with_omega(0.02);
        let df = disease_free_point(&p).unwrap();
        let j = jacobian(&p, &df);
        assert!((j[0][0] + (p.mu + p.gamma + p.omega)).abs() < 1e-15);
        assert!((j[2][2] + (p.beta3 + p.mu)).abs() < 1e-15);
        assert_eq!(j[1][2], 0.0);
        assert_eq!(j[2][0], 0.0);
    }

    #[test]
    fn df_eigenvalues_match_closed_forms() {
        let p = santos();

        // omega = 0 reduces bit-for-bit to the plain SIRSi eigenvalues.
        let lam = df_eigenvalues(&p.with_omega(0.0)).unwrap();
        assert_eq!(lam[0], -(p.mu + p.gamma));
        assert_eq!(lam[1], p.transmission() - p.infected_outflow());
        assert_eq!(lam[2], -(p.beta3 + p.mu));
        assert!((lam[1] - 0.05364875).abs() < 1e-8);

        let lam = df_eigenvalues(&p.with_omega(0.1)).unwrap();
        assert!((lam[1] + 0.17315850585791528).abs() < 1e-12);
        assert!(lam[1] < 0.0);
    }

    #[test]
    fn omega_threshold_values() {
        let p = santos();
        let thr = omega_threshold(&p).unwrap();
        assert!((thr - 0.01341490).abs() < 1e-8);
        assert!((thr - 0.0134).abs() < 1e-4);

        // Below the epidemic threshold the stabilizing rate is negative.
        assert!(omega_threshold(&p.with_theta(0.7)).unwrap() < 0.0);

        // Exactly at R0 = 1 the threshold vanishes.
        let q = Params {
            alpha: p.infected_outflow(),
            theta: 0.0,
            ..p
        };
        assert_eq!(omega_threshold(&q).unwrap(), 0.0);
    }

    #[test]
    fn char_poly_is_positive_and_matches_numerical() {
        let p = santos();
        let (a1, a2, a3) = char_poly_endemic(&p).unwrap();
        assert!(a1 > 0.0 && a2 > 0.0 && a3 > 0.0);

        let (point, _) = endemic_point(&p).unwrap();
        let (n1, n2, n3) = char_poly_coeffs(&jacobian(&p, &point));
        assert!((a1 - n1).abs() <= 1e-9 * a1.abs());
        assert!((a2 - n2).abs() <= 1e-9 * a2.abs());
        assert!((a3 - n3).abs() <= 1e-9 * a3.abs());
    }

    #[test]
    fn char_poly_tends_to_disease_free_limit() {
        let p = santos();
        // Parameters infinitesimally above the epidemic threshold.
        let q = Params {
            alpha: p.infected_outflow() * (1.0 + 1e-8),
            theta: 0.0,
            omega: 0.0,
            ..p
        };
        let (a1, a2, a3) = char_poly_endemic(&q).unwrap();
        let lam = df_eigenvalues(&q).unwrap();
        // Disease-free polynomial at the merger: lambda2 ~ 0.
        let df_a1 = -(lam[0] + lam[2]);
        let df_a2 = lam[0] * lam[2];
        assert!((a1 - df_a1).abs() < 1e-6);
        assert!((a2 - df_a2).abs() < 1e-6);
        assert!(a3.abs() < 1e-6);
    }

    #[test]
    fn routh_margin_direct_cases() {
        let p = santos();
        let (a1, a2, a3) = char_poly_endemic(&p).unwrap();
        let b1 = routh_hurwitz_b1(a1, a2, a3).unwrap();
        assert!(b1 > 0.0);

        assert_eq!(routh_hurwitz_b1(2.0, 3.0, 0.0).unwrap(), 3.0);
        assert!(routh_hurwitz_b1(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn classification_follows_threshold() {
        let p = santos();

        let (df, endemic) = classify(&p.with_omega(0.1)).unwrap();
        assert!(df.stable && !endemic.exists);

        let (df, endemic) = classify(&p.with_omega(0.01)).unwrap();
        assert!(!df.stable);
        assert!(endemic.exists && endemic.stable);

        // Exactly on the threshold: endemic exists, disease-free not stable.
        let thr = omega_threshold(&p).unwrap();
        let (df, endemic) = classify(&p.with_omega(thr)).unwrap();
        assert!(!df.stable && endemic.exists);
    }

    #[test]
    fn campinas_threshold_side() {
        // The Campinas calibration puts the threshold near 0.00523, so 0.01 is
        // already stabilizing while 0.001 is not.
        let p = presets::campinas().params;
        let thr = omega_threshold(&p).unwrap();
        assert!((thr - 0.00523119).abs() < 1e-7);
        let (df, endemic) = classify(&p.with_omega(0.001)).unwrap();
        assert!(!df.stable && endemic.exists);
        let (df, endemic) = classify(&p.with_omega(0.01)).unwrap();
        assert!(df.stable && !endemic.exists);
    }

    #[test]
    fn cubic_solver_known_roots() {
        // (x - 1)(x^2 + 1) = x^3 - x^2 + x - 1.
        let roots = cubic_roots(-1.0, 1.0, -1.0);
        assert!((roots[0].re - 1.0).abs() < 1e-14 && roots[0].im == 0.0);
        assert!((roots[1].re).abs() < 1e-14 && (roots[1].im + 1.0).abs() < 1e-14);
        assert!((roots[2].re).abs() < 1e-14 && (roots[2].im - 1.0).abs() < 1e-14);

        // (x + 1)(x + 2)(x + 3) = x^3 + 6x^2 + 11x + 6.
        let roots = cubic_roots(6.0, 11.0, 6.0);
        let res: Vec<f64> = roots.iter().map(|r| r.re).collect();
        assert!((res[0] + 1.0).abs() < 1e-12);
        assert!((res[1] + 2.0).abs() < 1e-12);
        assert!((res[2] + 3.0).abs() < 1e-12);

        // Double root: (x - 2)^2 (x + 1).
        let roots = cubic_roots(-3.0, 0.0, 4.0);
        assert!((roots[0].re - 2.0).abs() < 1e-6);
        assert!((roots[1].re - 2.0).abs() < 1e-6);
        assert!((roots[2].re + 1.0).abs() < 1e-10);
    }

    #[test]
    fn steady_states_land_on_the_classified_stable_point() {
        // Over a hundred (theta, omega) samples the dynamics settle onto
        // whichever equilibrium the classification marks stable. Cells close
        // to the exchange boundary are skipped: they settle too slowly to be
        // informative.
        let preset = crate::presets::santos();
        let mut checked = 0;
        for ti in 0..10 {
            for wi in 0..11 {
                let theta = 0.07 * ti as f64;
                let omega = 0.07 * wi as f64;
                let p = preset.params.with_theta(theta).with_omega(omega);
                let threshold = omega_threshold(&p).unwrap();
                if (omega - threshold).abs() < 0.02 {
                    continue;
                }
                let (df, endemic) = classify(&p).unwrap();
                let target = if df.stable {
                    df.point
                } else {
                    assert!(endemic.stable, "unstable both ways at ({theta}, {omega})");
                    endemic.point
                };
                let out = crate::odeint::steady_state(&p, &preset.initial_state(), 20000.0, 1e-10)
                    .unwrap();
                assert!(out.settled, "cell ({theta}, {omega}) did not settle");
                assert!(
                    (out.state.s - target.s).abs() < 1e-5
                        && (out.state.i - target.i).abs() < 1e-5
                        && (out.state.sick - target.sick).abs() < 1e-5,
                    "cell ({theta}, {omega}): settled {:?} vs classified {:?}",
                    out.state,
                    target
                );
                checked += 1;
            }
        }
        assert!(checked >= 100, "only {checked} cells checked");
    }

    #[test]
    fn report_serializes_with_contract_field_names() {
        let (df, endemic) = classify(&santos().with_omega(0.01)).unwrap();
        for report in [&df, &endemic] {
            let v = serde_json::to_value(report).unwrap();
            let obj = v.as_object().unwrap();
            for key in [
                "kind",
                "point",
                "exists",
                "eigenvalues",
                "stable",
                "r0",
                "psi",
                "omega_threshold",
                "routh_b1",
            ] {
                assert!(obj.contains_key(key), "missing {key}");
            }
            let point = obj["point"].as_object().unwrap();
            assert!(
                point.contains_key("s") && point.contains_key("i") && point.contains_key("sick")
            );
            let eig = obj["eigenvalues"][0].as_object().unwrap();
            assert!(eig.contains_key("re") && eig.contains_key("im"));
        }
        assert_eq!(
            serde_json::to_value(&df).unwrap()["kind"],
            serde_json::json!("disease_free")
        );
    }

    proptest! {
        #[test]
        fn fixed_point_residuals_are_tiny(p in params_strategy()) {
            let df = disease_free_point(&p).unwrap();
            prop_assert!(rhs_sup_norm(&p, &df) < 1e-11);

            if let Ok((point, scale)) = endemic_point(&p) {
                if scale >= 0.0 {
                    prop_assert!(rhs_sup_norm(&p, &point) < 1e-11);
                }
            }
        }

        #[test]
        #[allow(clippy::needless_range_loop)]
        fn jacobian_matches_finite_differences(p in params_strategy(), s in 0.0..0.9f64, i in 0.0..0.05f64, sick in 0.0..0.05f64) {
            let x = State3::new(s, i, sick);
            let j = jacobian(&p, &x);
            let h = 1e-6;
            let f = |x: State3| model::sirsi_vaccine_3d_unchecked(&p, &x);
            for col in 0..3 {
                let mut hi = x;
                let mut lo = x;
                match col {
                    0 => { hi.s += h; lo.s -= h; }
                    1 => { hi.i += h; lo.i -= h; }
                    _ => { hi.sick += h; lo.sick -= h; }
                }
                let dhi = f(hi);
                let dlo = f(lo);
                let fd = [
                    (dhi.s - dlo.s) / (2.0 * h),
                    (dhi.i - dlo.i) / (2.0 * h),
                    (dhi.sick - dlo.sick) / (2.0 * h),
                ];
                for (row, fd_entry) in fd.iter().enumerate() {
                    let tol = 1e-6 * j[row][col].abs().max(1.0);
                    prop_assert!((j[row][col] - fd_entry).abs() <= tol,
                        "entry ({row},{col}): {} vs fd {}", j[row][col], fd_entry);
                }
            }
        }

        #[test]
        fn df_closed_forms_match_numerical_eigenvalues(p in params_strategy()) {
            let df = disease_free_point(&p).unwrap();
            let mut closed = df_eigenvalues(&p).unwrap();
            closed.sort_by(|a, b| b.total_cmp(a));
            let numerical = matrix_eigenvalues(&jacobian(&p, &df));
            for (c, n) in closed.iter().zip(&numerical) {
                prop_assert!(n.im.abs() <= 1e-9 * c.abs().max(1.0));
                prop_assert!((c - n.re).abs() <= 1e-9 * c.abs().max(1e-6));
            }
        }

        #[test]
        fn routh_margin_routes_agree(p in params_strategy()) {
            let p = p.with_omega(0.0);
            if let Ok(scale) = phi(&p) {
                if scale > 0.0 {
                    let (a1, a2, a3) = char_poly_endemic(&p).unwrap();
                    let direct = routh_hurwitz_b1(a1, a2, a3).unwrap();
                    let factored = routh_hurwitz_b1_factored(&p, scale).unwrap();
                    prop_assert!((direct - factored).abs() <= 1e-10 * direct.abs().max(1e-12),
                        "direct {direct} vs factored {factored}");
                }
            }
        }

        #[test]
        fn stability_and_existence_are_exclusive(p in params_strategy()) {
            let (df, endemic) = classify(&p).unwrap();
            // Away from the measure-zero threshold boundary the two
            // classifications are complementary.
            if p.omega != endemic.omega_threshold {
                prop_assert!(df.stable != endemic.exists);
            }
        }
    }
}
