//! Fitted parameter presets for the three calibrated cities.

use crate::model::{Params, State3};

/// A calibrated parameter set together with its initial condition.
///
/// `params.omega` is zero; vaccination scenarios override it explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CityPreset {
    pub name: &'static str,
    pub params: Params,
    /// Initial susceptible fraction.
    pub s0: f64,
    /// Initial infected fraction (`1 - s0`).
    pub i0: f64,
}

impl CityPreset {
    /// Initial reduced state `(s0, i0, 0)`.
    pub fn initial_state(&self) -> State3 {
        State3::new(self.s0, self.i0, 0.0)
    }
}

pub fn santos() -> CityPreset {
    CityPreset {
        name: "santos",
        params: Params {
            mu: 0.000027,
            gamma: 0.100000,
            alpha: 0.775985,
            theta: 0.415355,
            beta1: 0.200000,
            beta2: 0.200000,
            beta3: 0.047847,
            omega: 0.0,
        },
        s0: 0.999754,
        i0: 0.000246,
    }
}

pub fn campinas() -> CityPreset {
    CityPreset {
        name: "campinas",
        params: Params {
            mu: 0.000034,
            gamma: 0.038255,
            alpha: 0.776520,
            theta: 0.414454,
            beta1: 0.200000,
            beta2: 0.200000,
            beta3: 0.067000,
            omega: 0.0,
        },
        s0: 0.999883,
        i0: 0.000117,
    }
}

pub fn sao_paulo() -> CityPreset {
    CityPreset {
        name: "saopaulo",
        params: Params {
            mu: 0.000036,
            gamma: 0.032774,
            alpha: 0.811656,
            theta: 0.444603,
            beta1: 0.200000,
            beta2: 0.200000,
            beta3: 0.058792,
            omega: 0.0,
        },
        s0: 0.999800,
        i0: 0.000200,
    }
}

/// All presets in a fixed order.
pub fn all() -> [CityPreset; 3] {
    [santos(), campinas(), sao_paulo()]
}

/// Looks a preset up by its CLI name.
pub fn by_name(name: &str) -> Option<CityPreset> {
    match name {
        "santos" => Some(santos()),
        "campinas" => Some(campinas()),
        "saopaulo" | "sao-paulo" | "sao_paulo" => Some(sao_paulo()),
        _ => None,
    }
}
