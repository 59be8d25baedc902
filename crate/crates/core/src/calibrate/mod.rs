//! The three confounding-strength calibrators: informal benchmarking on
//! observed covariates, the RCT-based statistical test, and negative
//! control outcomes.

pub mod benchmark;
pub mod nco;
pub mod rct;

pub use benchmark::{informal_benchmark, BenchmarkOptions, BenchmarkReport, OmissionMode, PropensityEstimator, SubsetRecord};
pub use nco::{nco_lower_bound, NcoCurveRecord, NcoOptions, NcoReport};
pub use rct::{
    estimate_shift_weights, estimate_support_filter, rct_ate, rct_ate_sigma, rct_lower_bound,
    test_sigma, GammaTestRecord, RctOptions, RctTestTrace, ShiftWeights,
};
