//! Self-contained nuisance estimators: logistic regression, least squares,
//! linear quantile regression, a probability forest, and K-fold
//! cross-fitting on top of them.

pub mod crossfit;
pub mod design;
pub mod forest;
pub mod linear;
pub mod logistic;
pub mod quantile;

pub use crossfit::{crossfit, fold_assignment, CrossfitSpec, NuisanceFits, PropensityModel, QuantileSurface, PROB_CLIP};
pub use design::{DesignMatrix, LinearCoefficients};
pub use forest::{fit_probability_forest, tune_forest, tune_forest_over, tuning_grid, ForestHyperParams, ProbabilityForest, TuneRecord};
pub use linear::{fit_least_squares, LinearFit};
pub use logistic::{fit_logistic, LogisticFit};
pub use quantile::{fit_quantile_regression, QuantileFit};
