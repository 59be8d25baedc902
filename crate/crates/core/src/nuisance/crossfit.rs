//! K-fold cross-fitting of the nuisance estimators: every row's prediction
//! comes from models trained on the other folds.

use serde::{Deserialize, Serialize};

use crate::data::Arm;
use crate::error::{Error, Result};
use crate::nuisance::design::DesignMatrix;
use crate::nuisance::forest::{fit_probability_forest, ForestHyperParams};
use crate::nuisance::linear::fit_least_squares;
use crate::nuisance::logistic::fit_logistic;
use crate::nuisance::quantile::fit_quantile_regression;
use crate::rng::{derive_rng, derive_seed, stage};

/// Propensity values are clipped into [PROB_CLIP, 1 - PROB_CLIP].
pub const PROB_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PropensityModel {
    Logistic,
    Forest(ForestHyperParams),
}

/// What to fit in one cross-fitting pass.
#[derive(Debug, Clone)]
pub struct CrossfitSpec {
    pub k: usize,
    pub propensity: Option<PropensityModel>,
    pub outcome_mean: bool,
    /// Conditional-quantile levels fitted per treatment arm.
    pub quantile_taus: Vec<f64>,
}

impl CrossfitSpec {
    pub fn propensity_only(k: usize, model: PropensityModel) -> Self {
        CrossfitSpec { k, propensity: Some(model), outcome_mean: false, quantile_taus: Vec::new() }
    }

    pub fn quantiles_only(k: usize, taus: Vec<f64>) -> Self {
        CrossfitSpec { k, propensity: None, outcome_mean: false, quantile_taus: taus }
    }
}

/// Out-of-fold quantile predictions for one (arm, tau) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileSurface {
    pub arm: u8,
    pub tau: f64,
    pub values: Vec<f64>,
}

/// Out-of-fold nuisance predictions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NuisanceFits {
    pub fold: Vec<usize>,
    pub propensity: Option<Vec<f64>>,
    /// Indexed by arm label: `outcome_mean[0]` is m-hat under control.
    pub outcome_mean: Option<[Vec<f64>; 2]>,
    pub quantiles: Vec<QuantileSurface>,
    /// True when any underlying logistic fit used the ridge fallback or
    /// failed to converge.
    pub propensity_warning: bool,
}

impl NuisanceFits {
    pub fn quantile(&self, arm: Arm, tau: f64) -> Option<&[f64]> {
        self.quantiles
            .iter()
            .find(|s| s.arm == arm.label() && s.tau == tau)
            .map(|s| s.values.as_slice())
    }
}

/// Seeded permutation into `k` folds whose sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;
    let mut rng = derive_rng(seed, &[stage::CROSSFIT, 0]);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.random::<u64>() % (i as u64 + 1)) as usize;
        perm.swap(i, j);
    }
    let mut fold = vec![0usize; n];
    for (pos, &row) in perm.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

/// Cross-fit the requested nuisances of `(x, t, y)`.
pub fn crossfit(
    x: &DesignMatrix,
    t: &[u8],
    y: &[f64],
    spec: &CrossfitSpec,
    seed: u64,
) -> Result<NuisanceFits> {
    let n = x.n_rows();
    if spec.k < 2 {
        return Err(Error::invalid("cross-fitting needs K >= 2"));
    }
    if n < 2 * spec.k {
        return Err(Error::invalid("cross-fitting needs n >= 2K"));
    }
    if t.len() != n || y.len() != n {
        return Err(Error::invalid("column lengths disagree"));
    }
    for &tau in &spec.quantile_taus {
        if !(0.0 < tau && tau < 1.0) {
            return Err(Error::invalid("quantile tau must lie in (0, 1)"));
        }
    }

    let fold = fold_assignment(n, spec.k, seed);
    let mut fits = NuisanceFits {
        fold: fold.clone(),
        propensity: spec.propensity.as_ref().map(|_| vec![0.0; n]),
        outcome_mean: spec.outcome_mean.then(|| [vec![0.0; n], vec![0.0; n]]),
        quantiles: spec
            .quantile_taus
            .iter()
            .flat_map(|&tau| {
                [
                    QuantileSurface { arm: 0, tau, values: vec![0.0; n] },
                    QuantileSurface { arm: 1, tau, values: vec![0.0; n] },
                ]
            })
            .collect(),
        propensity_warning: false,
    };

    for f in 0..spec.k {
        let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        let x_train = x.select_rows(&train);

        if let Some(model) = &spec.propensity {
            let labels: Vec<u8> = train.iter().map(|&i| t[i]).collect();
            let out = fits.propensity.as_mut().expect("allocated above");
            match model {
                PropensityModel::Logistic => {
                    let fit = fit_logistic(&x_train, &labels)?;
                    if fit.ridge_fallback || !fit.converged {
                        fits.propensity_warning = true;
                    }
                    for &i in &test {
                        out[i] = clip_probability(fit.coef.predict_probability(x.row(i)));
                    }
                }
                PropensityModel::Forest(hp) => {
                    let forest = fit_probability_forest(
                        &x_train,
                        &labels,
                        hp,
                        derive_seed(seed, &[stage::CROSSFIT, 1, f as u64]),
                    )?;
                    for &i in &test {
                        out[i] = clip_probability(forest.predict(x.row(i)));
                    }
                }
            }
        }

        if fits.outcome_mean.is_some() || !spec.quantile_taus.is_empty() {
            for arm in [Arm::Control, Arm::Treated] {
                let arm_rows: Vec<usize> = train.iter().copied().filter(|&i| t[i] == arm.label()).collect();
                if arm_rows.is_empty() {
                    return Err(Error::EmptyArm(format!(
                        "arm {} empty in fold {} training complement",
                        arm.label(),
                        f
                    )));
                }
                let x_arm = x.select_rows(&arm_rows);
                let y_arm: Vec<f64> = arm_rows.iter().map(|&i| y[i]).collect();

                if let Some(means) = fits.outcome_mean.as_mut() {
                    let fit = fit_least_squares(&x_arm, &y_arm)?;
                    for &i in &test {
                        means[arm.label() as usize][i] = fit.coef.linear_predictor(x.row(i));
                    }
                }
                for &tau in &spec.quantile_taus {
                    let fit = fit_quantile_regression(&x_arm, &y_arm, tau)?;
                    let surface = fits
                        .quantiles
                        .iter_mut()
                        .find(|s| s.arm == arm.label() && s.tau == tau)
                        .expect("allocated above");
                    for &i in &test {
                        surface.values[i] = fit.coef.linear_predictor(x.row(i));
                    }
                }
            }
        }
    }

    Ok(fits)
}

#[inline]
pub fn clip_probability(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}
