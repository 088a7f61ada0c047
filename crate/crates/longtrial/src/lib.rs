//! Estimators of the average treatment effect at the final visit of a
//! longitudinal randomized trial with monotone dropout, for continuous and
//! binary outcomes:
//!
//! - unadjusted completer-mean difference
//! - repeated-measures linear models (pooled or per-visit baseline terms)
//!   with REML covariance fitting
//! - a marginal logistic model fit GEE-style with a working-correlation
//!   ladder, standardized to a risk difference
//! - a doubly robust sequential-regression estimator combining propensity,
//!   dropout-hazard, and outcome working models
//!
//! plus nonparametric BCa bootstrap inference and a Monte Carlo simulation
//! engine for comparing the estimators under configurable dropout.

pub mod data;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod inference;
pub mod numerics;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
