//! Parameter and state types plus the right-hand sides of the SIRSi and
//! SIRSi-Vaccine systems.
//!
//! All dynamics are expressed in population fractions; absolute counts are
//! obtained by scaling with the population size at I/O boundaries only.
//! Every function here is pure and safe to call from any number of threads.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Parameter vector shared by the SIRSi and SIRSi-Vaccine models.
///
/// All rates are per day; `theta` is dimensionless. `omega = 0` recovers the
/// plain SIRSi model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Birth/death rate (population turnover).
    pub mu: f64,
    /// Re-susceptibility rate: loss of immunity after recovery or vaccination.
    pub gamma: f64,
    /// Transmission rate.
    pub alpha: f64,
    /// Social-distancing index in `[0, 1]`; 0 = none, 1 = full lockdown.
    pub theta: f64,
    /// Recovery rate of unreported or asymptomatic infections.
    pub beta1: f64,
    /// Symptomatic progression (case confirmation) rate.
    pub beta2: f64,
    /// Recovery rate of confirmed sick individuals.
    pub beta3: f64,
    /// Vaccination rate of susceptibles.
    pub omega: f64,
}

impl Params {
    /// Checks the parameter invariants: every rate finite and non-negative,
    /// `theta` in `[0, 1]`.
    pub fn validate(&self) -> Result<(), Error> {
        let rates = [
            ("mu", self.mu),
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("beta3", self.beta3),
            ("omega", self.omega),
        ];
        for (name, v) in rates {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must be a finite non-negative rate, got {v}"
                )));
            }
        }
        if !self.theta.is_finite() || !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidParams(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        Ok(())
    }

    /// Returns a copy with a different social-distancing index.
    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    /// Returns a copy with a different vaccination rate.
    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    /// Effective transmission rate `alpha * (1 - theta)`.
    pub fn transmission(&self) -> f64 {
        self.alpha * (1.0 - self.theta)
    }

    /// Total outflow rate from the infected compartment, `beta1 + beta2 + mu`.
    pub fn infected_outflow(&self) -> f64 {
        self.beta1 + self.beta2 + self.mu
    }
}

/// Normalized compartment fractions of the full four-dimensional system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State4 {
    pub s: f64,
    pub i: f64,
    pub sick: f64,
    pub r: f64,
}

impl State4 {
    pub fn new(s: f64, i: f64, sick: f64, r: f64) -> Self {
        Self { s, i, sick, r }
    }

    /// Checks the invariants: each fraction in `[0, 1]` and the total equal
    /// to one within `1e-9`.
    pub fn validate(&self) -> Result<(), Error> {
        for (name, v) in [
            ("s", self.s),
            ("i", self.i),
            ("sick", self.sick),
            ("r", self.r),
        ] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidState(format!(
                    "fraction {name} must lie in [0, 1], got {v}"
                )));
            }
        }
        let total = self.s + self.i + self.sick + self.r;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidState(format!(
                "fractions must sum to 1 within 1e-9, got {total}"
            )));
        }
        Ok(())
    }

    /// Drops the redundant recovered fraction.
    pub fn reduce(&self) -> State3 {
        State3 {
            s: self.s,
            i: self.i,
            sick: self.sick,
        }
    }
}

/// Normalized compartment fractions of the reduced three-dimensional system;
/// the recovered fraction is implicit as `r = 1 - s - i - sick`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State3 {
    pub s: f64,
    pub i: f64,
    pub sick: f64,
}

impl State3 {
    pub fn new(s: f64, i: f64, sick: f64) -> Self {
        Self { s, i, sick }
    }

    /// Checks membership in the solution set: each fraction non-negative and
    /// the total at most one (tiny slack for round-off).
    pub fn validate(&self) -> Result<(), Error> {
        for (name, v) in [("s", self.s), ("i", self.i), ("sick", self.sick)] {
            if !v.is_finite() || v < -1e-12 {
                return Err(Error::InvalidState(format!(
                    "fraction {name} must be non-negative, got {v}"
                )));
            }
        }
        let total = self.s + self.i + self.sick;
        if total > 1.0 + 1e-9 {
            return Err(Error::InvalidState(format!(
                "fractions must sum to at most 1, got {total}"
            )));
        }
        Ok(())
    }

    /// Reconstructs the full state with `r = 1 - s - i - sick`.
    pub fn lift(&self) -> State4 {
        State4 {
            s: self.s,
            i: self.i,
            sick: self.sick,
            r: 1.0 - self.s - self.i - self.sick,
        }
    }

    /// Recovered fraction implied by conservation.
    pub fn recovered(&self) -> f64 {
        1.0 - self.s - self.i - self.sick
    }

    /// True when every component exceeds `-slack` and the total stays below
    /// `1 + slack`.
    pub fn in_domain(&self, slack: f64) -> bool {
        self.s >= -slack
            && self.i >= -slack
            && self.sick >= -slack
            && self.s + self.i + self.sick <= 1.0 + slack
    }

    pub(crate) fn to_array(self) -> [f64; 3] {
        [self.s, self.i, self.sick]
    }

    pub(crate) fn from_array(y: [f64; 3]) -> Self {
        Self {
            s: y[0],
            i: y[1],
            sick: y[2],
        }
    }
}

/// Shared flow terms of the four-compartment systems. Each flow is computed
/// once so that the componentwise sum of the derivatives cancels exactly.
#[inline]
fn flows4(p: &Params, x: &State4) -> ([f64; 4], f64) {
    let infection = p.transmission() * x.s * x.i;
    let derivative = [
        p.mu - infection - p.mu * x.s + p.gamma * x.r,
        infection - (p.beta1 + p.beta2) * x.i - p.mu * x.i,
        p.beta2 * x.i - p.beta3 * x.sick - p.mu * x.sick,
        p.beta1 * x.i + p.beta3 * x.sick - p.gamma * x.r - p.mu * x.r,
    ];
    (derivative, infection)
}

#[inline]
pub(crate) fn sirsi_vaccine_4d_unchecked(p: &Params, x: &State4) -> State4 {
    let (d, _) = flows4(p, x);
    let vaccination = p.omega * x.s;
    State4 {
        s: d[0] - vaccination,
        i: d[1],
        sick: d[2],
        r: d[3] + vaccination,
    }
}

#[inline]
pub(crate) fn sirsi_vaccine_3d_unchecked(p: &Params, x: &State3) -> State3 {
    let infection = p.transmission() * x.s * x.i;
    State3 {
        s: p.mu + p.gamma
            - infection
            - (p.mu + p.gamma + p.omega) * x.s
            - p.gamma * x.i
            - p.gamma * x.sick,
        i: infection - p.infected_outflow() * x.i,
        sick: p.beta2 * x.i - (p.beta3 + p.mu) * x.sick,
    }
}

/// Derivative of the full SIRSi system (no vaccination); `p.omega` is ignored.
pub fn rhs_sirsi_4d(p: &Params, x: &State4) -> Result<State4, Error> {
    p.validate()?;
    let (d, _) = flows4(p, x);
    Ok(State4 {
        s: d[0],
        i: d[1],
        sick: d[2],
        r: d[3],
    })
}

/// Derivative of the full SIRSi-Vaccine system.
///
/// With `omega = 0` this reduces term by term to the plain SIRSi derivative.
pub fn rhs_sirsi_vaccine_4d(p: &Params, x: &State4) -> Result<State4, Error> {
    p.validate()?;
    Ok(sirsi_vaccine_4d_unchecked(p, x))
}

/// Derivative of the reduced SIRSi system (no vaccination); `p.omega` is
/// ignored.
pub fn rhs_sirsi_3d(p: &Params, x: &State3) -> Result<State3, Error> {
    p.validate()?;
    let infection = p.transmission() * x.s * x.i;
    Ok(State3 {
        s: p.mu + p.gamma - infection - (p.mu + p.gamma) * x.s - p.gamma * x.i - p.gamma * x.sick,
        i: infection - p.infected_outflow() * x.i,
        sick: p.beta2 * x.i - (p.beta3 + p.mu) * x.sick,
    })
}

/// Derivative of the reduced SIRSi-Vaccine system.
///
/// With `omega = 0` this reduces term by term to the plain reduced SIRSi
/// derivative.
pub fn rhs_sirsi_vaccine_3d(p: &Params, x: &State3) -> Result<State3, Error> {
    p.validate()?;
    Ok(sirsi_vaccine_3d_unchecked(p, x))
}

/// Basic reproduction number `alpha * (1 - theta) / (beta1 + beta2 + mu)`.
///
/// Independent of the vaccination rate.
pub fn r0(p: &Params) -> Result<f64, Error> {
    p.validate()?;
    let outflow = p.infected_outflow();
    if outflow <= 0.0 {
        return Err(Error::Degenerate(
            "beta1 + beta2 + mu must be positive for the reproduction number".into(),
        ));
    }
    Ok(p.transmission() / outflow)
}
