//! Quantile-balancing sensitivity bounds under the marginal sensitivity
//! model: adversarial propensities, stabilized PEI bounds per arm and for
//! the ATE, bootstrap confidence intervals, and critical values.

pub mod critical;
pub mod curve;
pub mod pei;
pub mod weights;

pub use critical::{critical_value, CriticalValue};
pub use curve::{
    bound_resamples, bounds_curve, BootstrapPolicy, BoundsCurve, CiOptions, Estimand, GammaGrid,
    IntervalKind, QbOptions,
};
pub use pei::{ate_bounds, pei_theta};
pub use weights::{adversarial_weights, gamma_frac, odds_ratio, AdversarialWeights};
