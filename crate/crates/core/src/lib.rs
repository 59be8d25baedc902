//! Calibration toolkit for the sensitivity parameter of the marginal
//! sensitivity model (MSM).
//!
//! Under unobserved confounding, inverse-probability-weighted treatment
//! effect estimates are only partially identified: the MSM bounds the odds
//! ratio between the true and the nominal propensity score by a confounding
//! strength Γ >= 1, and each Γ yields an interval of plausible effects.
//! This crate computes those quantile-balancing bounds (point estimate
//! interval and percentile-bootstrap confidence interval), and calibrates Γ
//! three ways: informal benchmarking on observed covariates, an RCT-based
//! statistical test, and negative control outcomes. A seeded simulation
//! harness generates paired RCT/observational data with a known true Γ and
//! reproduces the Monte Carlo experiment suite end to end.

pub mod bounds;
pub mod calibrate;
pub mod data;
pub mod error;
pub mod harness;
pub mod nuisance;
pub mod rng;
pub mod sim;
pub mod stats;

pub use data::{Arm, Dataset};
pub use error::{Error, Result};
