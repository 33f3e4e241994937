//! Risk-perception-aware motion planning.
//!
//! An uncertain spatial cost ([`cost_field`]) is perceived through a risk
//! model ([`risk`]), the perceived-risk field drives an RRT* planner
//! ([`planner`]), and [`spsa`] fits risk-model parameters so the planner
//! reproduces a target path, using the area between paths ([`metrics`]) as
//! the loss.

// Validation is written as `!(x >= lo)` so that NaN fails it.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost_field;
pub mod error;
pub mod experiments;
pub mod index;
pub mod metrics;
pub mod path;
pub mod planner;
pub mod risk;
pub mod spsa;

pub use error::{Error, Result};

/// Float formatting for CSV output. Plain decimals in the usual range,
/// exponent form for tiny or huge magnitudes; both parse back exactly.
pub(crate) struct Num(pub f64);

impl std::fmt::Display for Num {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}
