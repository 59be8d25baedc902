//! Informal benchmarking: treat observed covariates (singly or in groups)
//! as if they were unobserved and measure how much the propensity score
//! moves, giving a plausible range for the confounding strength.

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::odds_ratio;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::{crossfit, tune_forest_over, tuning_grid, CrossfitSpec, DesignMatrix, ForestHyperParams, PropensityModel};
use crate::rng::{derive_seed, stage};

const MAX_SUBSETS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PropensityEstimator {
    Logistic,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OmissionMode {
    /// Omit one covariate at a time.
    LeaveOneOut,
    /// Omit every subset of 1..=p-1 covariates.
    LeaveMultipleOut,
}

/// One omitted covariate set with its estimated strengths:
/// gamma_plus = max_j OR(e(X_j), e(X_j without the set)),
/// gamma_minus = 1 / min_j of the same ratio, gamma_hat = max of the two.
#[derive(Debug, Clone, Serialize)]
pub struct SubsetRecord {
    pub omitted: Vec<usize>,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub gamma_hat: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub records: Vec<SubsetRecord>,
    /// min over subsets of gamma_hat ("at best").
    pub gamma_low: f64,
    /// max over subsets of gamma_hat ("at worst"); the conventional report.
    pub gamma_high: f64,
    pub estimator: PropensityEstimator,
    pub mode: OmissionMode,
    pub forest_hp: Option<ForestHyperParams>,
}

impl BenchmarkReport {
    /// The informal-benchmarking estimate is the conservative end.
    pub fn gamma_ib(&self) -> f64 {
        self.gamma_high
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOptions {
    pub estimator: PropensityEstimator,
    pub mode: OmissionMode,
    pub k_folds: usize,
    /// Forest tuning grid override (the desk-scale harness passes a
    /// subgrid); `None` means the full grid.
    pub forest_grid: Option<Vec<ForestHyperParams>>,
}

impl BenchmarkOptions {
    pub fn new(estimator: PropensityEstimator, mode: OmissionMode) -> Self {
        BenchmarkOptions { estimator, mode, k_folds: 5, forest_grid: None }
    }
}

/// All omission subsets in deterministic order: size 1..=max_size,
/// lexicographic within a size.
fn omission_subsets(p: usize, mode: OmissionMode) -> Result<Vec<Vec<usize>>> {
    if p < 2 {
        return Err(Error::invalid("informal benchmarking needs at least two covariates"));
    }
    match mode {
        OmissionMode::LeaveOneOut => Ok((0..p).map(|i| vec![i]).collect()),
        OmissionMode::LeaveMultipleOut => {
            let total = 2usize.checked_pow(p as u32).map(|t| t - 2);
            if total.is_none() || total.unwrap() > MAX_SUBSETS {
                return Err(Error::invalid(format!(
                    "leave-multiple-out over {p} covariates needs 2^{p} - 2 subsets; use leave-one-out"
                )));
            }
            let mut subsets = Vec::with_capacity(total.unwrap());
            for size in 1..p {
                let mut idx: Vec<usize> = (0..size).collect();
                loop {
                    subsets.push(idx.clone());
                    let mut i = size;
                    loop {
                        if i == 0 {
                            break;
                        }
                        i -= 1;
                        if idx[i] != i + p - size {
                            break;
                        }
                    }
                    if idx[i] == i + p - size {
                        break;
                    }
                    idx[i] += 1;
                    for j in (i + 1)..size {
                        idx[j] = idx[j - 1] + 1;
                    }
                }
            }
            Ok(subsets)
        }
    }
}

fn crossfit_propensity(
    x: &DesignMatrix,
    t: &[u8],
    estimator: PropensityEstimator,
    hp: Option<&ForestHyperParams>,
    k: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let model = match estimator {
        PropensityEstimator::Logistic => PropensityModel::Logistic,
        PropensityEstimator::Forest => {
            PropensityModel::Forest(*hp.expect("forest estimator carries tuned hyperparameters"))
        }
    };
    let spec = CrossfitSpec::propensity_only(k, model);
    let fits = crossfit(x, t, &vec![0.0; x.n_rows()], &spec, seed)?;
    Ok(fits.propensity.expect("requested propensity"))
}

/// Leave-one-out / leave-multiple-out benchmarking with cross-fitted
/// propensity scores. Forest hyperparameters are tuned once on the full
/// covariate set and reused for every omission fit.
pub fn informal_benchmark(data: &Dataset, opts: &BenchmarkOptions, seed: u64) -> Result<BenchmarkReport> {
    let p = data.n_covariates();
    let subsets = omission_subsets(p, opts.mode)?;
    let x_full = DesignMatrix::new(data.covariates().to_vec(), p)?;
    let t = data.treatment();

    let forest_hp = match opts.estimator {
        PropensityEstimator::Logistic => None,
        PropensityEstimator::Forest => {
            let full_grid;
            let grid: &[ForestHyperParams] = match &opts.forest_grid {
                Some(g) => g,
                None => {
                    full_grid = tuning_grid(p);
                    &full_grid
                }
            };
            let (hp, _) = tune_forest_over(&x_full, t, derive_seed(seed, &[stage::BENCHMARK, 1]), grid)?;
            Some(hp)
        }
    };

    // The same fold seed on every fit keeps fold assignments aligned
    // between the full model and the omission models.
    let fold_seed = derive_seed(seed, &[stage::BENCHMARK, 0]);
    let ehat_full = crossfit_propensity(&x_full, t, opts.estimator, forest_hp.as_ref(), opts.k_folds, fold_seed)?;

    let records: Vec<SubsetRecord> = subsets
        .par_iter()
        .map(|omitted| {
            let keep: Vec<usize> = (0..p).filter(|j| !omitted.contains(j)).collect();
            let x_sub = x_full.select_columns(&keep);
            let ehat_sub =
                crossfit_propensity(&x_sub, t, opts.estimator, forest_hp.as_ref(), opts.k_folds, fold_seed)?;
            let mut r_max = f64::NEG_INFINITY;
            let mut r_min = f64::INFINITY;
            for j in 0..data.n_rows() {
                let r = odds_ratio(ehat_full[j], ehat_sub[j])?;
                r_max = r_max.max(r);
                r_min = r_min.min(r);
            }
            let gamma_plus = r_max;
            let gamma_minus = 1.0 / r_min;
            Ok(SubsetRecord {
                omitted: omitted.clone(),
                gamma_plus,
                gamma_minus,
                gamma_hat: gamma_plus.max(gamma_minus),
            })
        })
        .collect::<Result<_>>()?;

    let gamma_low = records.iter().map(|r| r.gamma_hat).fold(f64::INFINITY, f64::min);
    let gamma_high = records.iter().map(|r| r.gamma_hat).fold(f64::NEG_INFINITY, f64::max);
    Ok(BenchmarkReport {
        records,
        gamma_low,
        gamma_high,
        estimator: opts.estimator,
        mode: opts.mode,
        forest_hp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::design::logistic;
    use rand::Rng;

    fn logistic_dgp(n: usize, coefs: &[f64], seed: u64) -> Dataset {
        let p = coefs.len();
        let mut rng = crate::rng::derive_rng(seed, &[1000]);
        let mut x = Vec::with_capacity(n * p);
        let mut t = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let z: f64 = row.iter().zip(coefs).map(|(xv, c)| xv * c).sum();
            x.extend_from_slice(&row);
            t.push((rng.random::<f64>() < logistic(z)) as u8);
        }
        Dataset::new(x, p, t, vec![0.0; n], Vec::new()).unwrap()
    }

    #[test]
    fn subset_enumeration_counts() {
        assert_eq!(omission_subsets(5, OmissionMode::LeaveOneOut).unwrap().len(), 5);
        let lmo = omission_subsets(5, OmissionMode::LeaveMultipleOut).unwrap();
        assert_eq!(lmo.len(), 30); // 2^5 - 2
        assert_eq!(lmo[0], vec![0]);
        assert_eq!(lmo.last().unwrap(), &vec![1, 2, 3, 4]);
        assert!(omission_subsets(1, OmissionMode::LeaveOneOut).is_err());
    }

    #[test]
    fn null_covariate_contributes_no_strength() {
        // Second coordinate has zero effect on T: its singleton omission
        // leaves the propensity nearly unchanged.
        let data = logistic_dgp(5000, &[0.8, 0.0], 3);
        let opts = BenchmarkOptions::new(PropensityEstimator::Logistic, OmissionMode::LeaveOneOut);
        let report = informal_benchmark(&data, &opts, 1).unwrap();
        let null_record = report.records.iter().find(|r| r.omitted == vec![1]).unwrap();
        assert!(null_record.gamma_hat < 1.3, "gamma_hat {}", null_record.gamma_hat);
        let strong = report.records.iter().find(|r| r.omitted == vec![0]).unwrap();
        assert!(strong.gamma_hat > null_record.gamma_hat);
        assert!(report.gamma_low <= report.gamma_ib());
    }

    #[test]
    fn duplicated_covariate_is_redundant() {
        let base = logistic_dgp(2000, &[0.9], 4);
        // Duplicate the single covariate.
        let mut x = Vec::with_capacity(base.n_rows() * 2);
        for i in 0..base.n_rows() {
            let v = base.row(i)[0];
            x.extend_from_slice(&[v, v]);
        }
        let data = Dataset::new(x, 2, base.treatment().to_vec(), vec![0.0; base.n_rows()], Vec::new()).unwrap();
        let opts = BenchmarkOptions::new(PropensityEstimator::Logistic, OmissionMode::LeaveOneOut);
        let report = informal_benchmark(&data, &opts, 2).unwrap();
        for record in &report.records {
            assert!(record.gamma_hat < 1.1, "redundant omission moved e-hat: {record:?}");
        }
    }

    #[test]
    fn every_gamma_is_at_least_one() {
        let data = logistic_dgp(400, &[0.5, -0.7, 0.2], 5);
        let opts = BenchmarkOptions::new(PropensityEstimator::Logistic, OmissionMode::LeaveMultipleOut);
        let report = informal_benchmark(&data, &opts, 3).unwrap();
        assert_eq!(report.records.len(), 6); // 2^3 - 2
        for r in &report.records {
            assert!(r.gamma_hat >= 1.0);
            assert!(r.gamma_hat >= report.gamma_low && r.gamma_hat <= report.gamma_high);
        }
    }

    #[test]
    fn forest_estimator_runs_with_a_small_grid() {
        let data = logistic_dgp(300, &[0.9, -0.4], 6);
        let mut opts = BenchmarkOptions::new(PropensityEstimator::Forest, OmissionMode::LeaveOneOut);
        opts.forest_grid = Some(vec![ForestHyperParams {
            num_trees: 30,
            min_node_size: 20,
            sample_fraction: 0.5,
            mtry: 2,
        }]);
        let report = informal_benchmark(&data, &opts, 7).unwrap();
        assert!(report.forest_hp.is_some());
        assert!(report.gamma_ib() >= 1.0);
    }
}
