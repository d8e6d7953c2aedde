//! Simulation and state estimation for two-factor commodity futures models.
//!
//! Two models share the same Ornstein–Uhlenbeck factors `(χ, ξ)`:
//!
//! - [`ss_model`]: log spot price `χ + ξ`, linear-Gaussian in log futures
//!   prices, estimated with the Kalman filter;
//! - [`pd_model`]: spot price a degree-≤2 polynomial in the factors, priced
//!   through the exponential of the generator matrix and estimated with the
//!   extended or unscented Kalman filter.
//!
//! [`simulator`] produces synthetic panels, [`filters`] estimates states and
//! contracts from them, and [`diagnostics`] runs the coverage-rate check.

pub mod diagnostics;
pub mod error;
pub mod estimate;
pub mod export;
pub mod filters;
pub mod mathcore;
pub mod model;
pub mod pd_model;
pub mod simulator;
pub mod spec;
pub mod ss_model;

pub use error::{Error, Result, Warning};
pub use model::{FilterKind, ModelKind, ModelParams};
