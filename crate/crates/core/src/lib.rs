//! Calibrated principal component regression (CPCR).
//!
//! CPCR splits the labeled sample in two, fits principal component regression
//! on one half, and calibrates the result in the full feature space on the
//! other half with a ridge penalty centered at the PCR solution. The two
//! calibrated fits are then exchanged and averaged.
//!
//! Matrices follow the features-by-samples convention: a design with `p`
//! features and `n` samples is a `p × n` matrix whose columns are samples.
//!
//! Modules:
//! - [`spectral`]: subspace estimation, projectors, predictive power.
//! - [`estimators`]: OLS, (centered) ridge, PCR, PLS1 and penalized GLM fits.
//! - [`cpcr`]: sample splitting and the cross-fitted CPCR estimator.
//! - [`synthgen`]: spiked covariance generators and Monte Carlo risk.
//! - [`rmt`]: companion-transform solver and limiting risk formulas.
//! - [`datasets`]: CSV/embedding ingestion, standardization, Nyström maps.

pub mod cpcr;
pub mod datasets;
pub mod error;
pub mod estimators;
mod linalg;
pub mod rmt;
pub mod rng;
pub mod spectral;
pub mod synthgen;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
