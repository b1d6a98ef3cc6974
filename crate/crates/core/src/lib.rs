//! Planning equipment speeds and starting stock for a biomass feeding line under
//! uncertain feedstock and equipment outages.

pub mod error;
pub mod evaluator;
pub mod harness;
pub mod lp;
pub mod optimizer;
pub mod plant;
pub mod scalar;
pub mod scenario;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision forms of the generic types, used by the optimizer and harness.
pub type Model = lp::LpModel<f64>;
pub type Solution = lp::LpSolution<f64>;
pub type LpTolerances = lp::Tolerances<f64>;
pub type Percentiles = scenario::Psd<f64>;
