//! SIRSi and SIRSi-Vaccine compartmental epidemic models.
//!
//! The crate covers four workflows:
//!
//! - [`odeint`]: adaptive Dormand-Prince integration of the normalized
//!   systems, with an optional time-varying social-distancing schedule.
//! - [`equilibria`]: closed-form disease-free and endemic equilibria,
//!   eigenvalues, and Routh-Hurwitz stability classification.
//! - [`fitting`]: case-data preprocessing and bounded nonlinear least-squares
//!   estimation of the model parameters.
//! - [`sweep`]: steady-state and stability maps over the social-distancing /
//!   vaccination-rate plane.
//!
//! Model equations and parameter presets live in [`model`] and [`presets`].

// Negated comparisons in validation code are deliberate: `!(x > 0.0)` also
// rejects NaN, which `x <= 0.0` lets through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibria;
pub mod error;
pub mod fitting;
pub mod model;
pub mod odeint;
pub mod presets;
pub mod sweep;

pub use error::Error;
pub use model::{Params, State3, State4};
