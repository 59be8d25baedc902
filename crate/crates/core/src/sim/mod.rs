//! Synthetic data-generating process with a known true confounding
//! strength, plus the experiment presets and correlation diagnostics.

pub mod config;
pub mod generate;

pub use config::{make_config, make_config_with_seed, CoefficientRanges, NcoCase, SimulationConfig, DEFAULT_BASE_SEED};
pub use generate::{
    correlation_band, diagnostics, sample_confounders, sample_pair, true_propensity_obs,
    true_propensity_obs_row, CorrelationBand, Diagnostics, GeneratedPair, HiddenTable, SimArm,
};
