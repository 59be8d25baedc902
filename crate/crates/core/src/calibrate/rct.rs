//! Lower bound on the confounding strength from a paired RCT: test, per Γ,
//! whether the unbiased RCT estimate of the ATE falls inside (or close to)
//! the sensitivity bounds computed on the observational data, and report
//! the smallest Γ that survives.
//!
//! The target population is the observational sub-population whose
//! covariates fall inside the RCT support (obs'), so the RCT estimator is
//! reweighted for the covariate shift and the covariance term between the
//! RCT statistic and the bounds vanishes.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bounds::{bound_resamples, bounds_curve, BootstrapPolicy, BoundsCurve, CiOptions, Estimand, GammaGrid, IntervalKind, QbOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::{crossfit, CrossfitSpec, DesignMatrix, PropensityModel};
use crate::rng::{derive_rng, derive_seed, stage};
use crate::stats;

/// Difference-in-means IPW estimate of the RCT ATE, optionally reweighted
/// toward a target population: mean of (T/pi - (1-T)/(1-pi)) * Y * w.
pub fn rct_ate(t: &[u8], y: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    let n = t.len();
    if n == 0 || y.len() != n {
        return Err(Error::invalid("empty or mismatched RCT columns"));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::invalid("weight length mismatch"));
        }
    }
    let pi = t.iter().map(|&ti| ti as f64).sum::<f64>() / n as f64;
    if pi == 0.0 || pi == 1.0 {
        return Err(Error::EmptyArm("one-armed RCT".into()));
    }
    let mut sum = 0.0;
    for i in 0..n {
        let w = weights.map_or(1.0, |w| w[i]);
        let arm = if t[i] == 1 { 1.0 / pi } else { -1.0 / (1.0 - pi) };
        sum += arm * y[i] * w;
    }
    Ok(sum / n as f64)
}

/// RCT ATE plus its standard deviation over seeded row-resamples (the
/// treated share is re-estimated per resample; weights follow their rows).
pub fn rct_ate_sigma(
    t: &[u8],
    y: &[f64],
    weights: Option<&[f64]>,
    n_boot: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    use rand::Rng;
    let ate = rct_ate(t, y, weights)?;
    let n = t.len();
    let mut draws = Vec::with_capacity(n_boot);
    for r in 0..n_boot {
        let mut rng = derive_rng(seed, &[stage::RCT_SIGMA, r as u64]);
        let idx: Vec<usize> = (0..n).map(|_| (rng.random::<u64>() % n as u64) as usize).collect();
        let tb: Vec<u8> = idx.iter().map(|&i| t[i]).collect();
        let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let wb: Option<Vec<f64>> = weights.map(|w| idx.iter().map(|&i| w[i]).collect());
        if let Ok(stat) = rct_ate(&tb, &yb, wb.as_deref()) {
            draws.push(stat);
        }
    }
    if draws.len() * 10 < n_boot * 9 {
        return Err(Error::Numerical("too many degenerate RCT bootstrap resamples".into()));
    }
    Ok((ate, stats::std_dev(&draws)))
}

/// Mask of observational rows whose covariates fall inside the
/// per-coordinate [min, max] box of the RCT covariates.
pub fn estimate_support_filter(rct: &Dataset, obs: &Dataset) -> Result<Vec<bool>> {
    let p = rct.n_covariates();
    if obs.n_covariates() != p {
        return Err(Error::Schema("RCT and observational covariate counts disagree".into()));
    }
    let mut lo = vec![f64::INFINITY; p];
    let mut hi = vec![f64::NEG_INFINITY; p];
    for i in 0..rct.n_rows() {
        for (j, &v) in rct.row(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let mask: Vec<bool> = (0..obs.n_rows())
        .map(|i| obs.row(i).iter().enumerate().all(|(j, &v)| lo[j] <= v && v <= hi[j]))
        .collect();
    if mask.iter().all(|&m| !m) {
        return Err(Error::NoSupportOverlap);
    }
    Ok(mask)
}

#[derive(Debug, Clone, Serialize)]
pub struct ShiftWeights {
    /// Per-RCT-row weight, clipped then normalized to mean one.
    pub w: Vec<f64>,
    /// The domain classifier separated the samples almost perfectly,
    /// indicating no covariate overlap.
    pub overlap_warning: bool,
}

const SHIFT_CLIP: (f64, f64) = (0.05, 20.0);
const AUC_WARNING: f64 = 0.99;

/// Density-ratio weights from a cross-fitted domain classifier on the
/// pooled covariates (label 1 = filtered observational row):
/// w(x) = (n_rct / n_obs') * p(x) / (1 - p(x)), clipped, then normalized.
pub fn estimate_shift_weights(rct: &Dataset, obs_filtered: &Dataset, k: usize, seed: u64) -> Result<ShiftWeights> {
    let (n_rct, n_obs) = (rct.n_rows(), obs_filtered.n_rows());
    if n_rct == 0 || n_obs == 0 {
        return Err(Error::invalid("shift weights need both samples nonempty"));
    }
    let p = rct.n_covariates();
    let mut pooled = Vec::with_capacity((n_rct + n_obs) * p);
    pooled.extend_from_slice(rct.covariates());
    pooled.extend_from_slice(obs_filtered.covariates());
    let x = DesignMatrix::new(pooled, p)?;
    let s: Vec<u8> = (0..n_rct + n_obs).map(|i| (i >= n_rct) as u8).collect();

    let spec = CrossfitSpec::propensity_only(k, PropensityModel::Logistic);
    let fits = crossfit(&x, &s, &vec![0.0; n_rct + n_obs], &spec, derive_seed(seed, &[stage::SHIFT]))?;
    let phat = fits.propensity.expect("requested propensity");

    let auc = rank_auc(&phat, &s);
    let overlap_warning = auc >= AUC_WARNING;

    let ratio = n_rct as f64 / n_obs as f64;
    let mut w: Vec<f64> = (0..n_rct)
        .map(|i| (ratio * phat[i] / (1.0 - phat[i])).clamp(SHIFT_CLIP.0, SHIFT_CLIP.1))
        .collect();
    let mean = stats::mean(&w);
    for wi in &mut w {
        *wi /= mean;
    }
    Ok(ShiftWeights { w, overlap_warning })
}

/// Mann-Whitney AUC of scores against binary labels.
fn rank_auc(score: &[f64], label: &[u8]) -> f64 {
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));
    let n_pos = label.iter().filter(|&&l| l == 1).count();
    let n_neg = label.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    // Midranks for ties.
    let mut rank = vec![0.0f64; score.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && score[order[j + 1]] == score[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            rank[o] = mid;
        }
        i = j + 1;
    }
    let rank_sum: f64 = (0..score.len()).filter(|&i| label[i] == 1).map(|i| rank[i]).sum();
    (rank_sum - n_pos as f64 * (n_pos as f64 + 1.0) / 2.0) / (n_pos as f64 * n_neg as f64)
}

/// Combined standard deviation of a test statistic comparing the RCT
/// estimate with one bound; the covariance term is active only when the
/// target population is the RCT itself.
pub fn test_sigma(sigma_rct: f64, sigma_bound: f64, target_is_rct: bool) -> f64 {
    let cross = if target_is_rct { 2.0 * sigma_rct * sigma_bound } else { 0.0 };
    (sigma_rct * sigma_rct + sigma_bound * sigma_bound + cross).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaTestRecord {
    pub gamma: f64,
    /// Sensitivity interval used by the test (PEI or CI per options).
    pub lower: f64,
    pub upper: f64,
    pub sigma_lower: f64,
    pub sigma_upper: f64,
    pub t_plus: f64,
    pub t_minus: f64,
    /// 1 = the hypothesis "confounding strength at most gamma" is rejected.
    pub reject: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RctTestTrace {
    pub records: Vec<GammaTestRecord>,
    pub ate: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub interval: IntervalKind,
    /// Smallest grid gamma not rejected; the grid maximum when everything
    /// was rejected (see `all_rejected`).
    pub gamma_lb: f64,
    pub all_rejected: bool,
    pub n_obs_filtered: usize,
    pub shift_overlap_warning: bool,
    /// Bounds curve on the support-filtered observational rows.
    pub curve: BoundsCurve,
}

#[derive(Debug, Clone)]
pub struct RctOptions {
    pub alpha: f64,
    pub grid: GammaGrid,
    pub interval: IntervalKind,
    pub k_folds: usize,
    /// Resamples behind sigma, sigma_lower, sigma_upper.
    pub sigma_boot: usize,
    /// Policy for the sigma resamples (fast by default; full refit is the
    /// paper-scale option).
    pub sigma_policy: BootstrapPolicy,
    /// CI construction when `interval` is CI.
    pub ci: CiOptions,
}

impl Default for RctOptions {
    fn default() -> Self {
        RctOptions {
            alpha: 0.05,
            grid: GammaGrid::calibration_default(None),
            interval: IntervalKind::Pei,
            k_folds: 5,
            sigma_boot: 100,
            sigma_policy: BootstrapPolicy::Fast,
            ci: CiOptions::default(),
        }
    }
}

/// Full testing procedure against the obs' target population.
pub fn rct_lower_bound(rct: &Dataset, obs: &Dataset, opts: &RctOptions, seed: u64) -> Result<RctTestTrace> {
    if !(0.0 < opts.alpha && opts.alpha < 0.5) {
        return Err(Error::invalid("alpha must lie in (0, 0.5)"));
    }
    let mask = estimate_support_filter(rct, obs)?;
    let keep: Vec<usize> = (0..obs.n_rows()).filter(|&i| mask[i]).collect();
    let obs_f = obs.select(&keep);

    let shift = estimate_shift_weights(rct, &obs_f, opts.k_folds, seed)?;
    let (ate, sigma) = rct_ate_sigma(
        rct.treatment(),
        rct.outcome(),
        Some(&shift.w),
        opts.sigma_boot,
        derive_seed(seed, &[stage::RCT_SIGMA]),
    )?;

    // ATE bounds on obs' plus per-gamma bound standard deviations.
    let qb = QbOptions {
        k_folds: opts.k_folds,
        estimand: Estimand::Ate,
        ci: (opts.interval == IntervalKind::Ci).then_some(opts.ci),
    };
    let curve = bounds_curve(&obs_f, &opts.grid, &qb, derive_seed(seed, &[stage::BOUND_SIGMA, 0]))?;
    let resamples = bound_resamples(
        &obs_f,
        &opts.grid,
        opts.k_folds,
        Estimand::Ate,
        opts.sigma_boot,
        opts.sigma_policy,
        derive_seed(seed, &[stage::BOUND_SIGMA, 1]),
    )?;

    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(opts.alpha / 2.0);
    let mut records = Vec::with_capacity(opts.grid.len());
    for (g, &gamma) in opts.grid.values().iter().enumerate() {
        let (lower, upper) = curve.interval(g, opts.interval)?;
        let lows: Vec<f64> = resamples.iter().flatten().map(|s| s[g].0).collect();
        let highs: Vec<f64> = resamples.iter().flatten().map(|s| s[g].1).collect();
        let sigma_lower = stats::std_dev(&lows);
        let sigma_upper = stats::std_dev(&highs);
        let t_plus = (upper - ate) / test_sigma(sigma, sigma_upper, false);
        let t_minus = (ate - lower) / test_sigma(sigma, sigma_lower, false);
        let reject = t_plus.min(t_minus) < z;
        records.push(GammaTestRecord { gamma, lower, upper, sigma_lower, sigma_upper, t_plus, t_minus, reject });
    }

    let accepted = records.iter().find(|r| !r.reject);
    let (gamma_lb, all_rejected) = match accepted {
        Some(r) => (r.gamma, false),
        None => (opts.grid.max(), true),
    };
    Ok(RctTestTrace {
        records,
        ate,
        sigma,
        alpha: opts.alpha,
        interval: opts.interval,
        gamma_lb,
        all_rejected,
        n_obs_filtered: obs_f.n_rows(),
        shift_overlap_warning: shift.overlap_warning,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn rct_ate_recovers_difference_of_means() {
        let t = [1u8, 1, 0, 0];
        let y = [3.0, 5.0, 1.0, 2.0];
        let ate = rct_ate(&t, &y, None).unwrap();
        assert!((ate - (4.0 - 1.5)).abs() < 1e-12);
        // Constant shift leaves the estimate unchanged.
        let shifted: Vec<f64> = y.iter().map(|v| v + 10.0).collect();
        assert!((rct_ate(&t, &shifted, None).unwrap() - ate).abs() < 1e-12);
    }

    #[test]
    fn one_armed_rct_is_rejected() {
        assert!(matches!(rct_ate(&[1, 1, 1], &[1.0, 2.0, 3.0], None), Err(Error::EmptyArm(_))));
    }

    #[test]
    fn support_filter_box_semantics() {
        // Identical supports: everything passes.
        let rct = Dataset::new(vec![0.0, 1.0, -1.0], 1, vec![0, 1, 0], vec![0.0; 3], Vec::new()).unwrap();
        let obs = Dataset::new(vec![0.5, -0.5], 1, vec![0, 1], vec![0.0; 2], Vec::new()).unwrap();
        assert_eq!(estimate_support_filter(&rct, &obs).unwrap(), vec![true, true]);
        // One coordinate outside the box excludes the row.
        let obs2 = Dataset::new(vec![0.5, 1.5], 1, vec![0, 1], vec![0.0; 2], Vec::new()).unwrap();
        assert_eq!(estimate_support_filter(&rct, &obs2).unwrap(), vec![true, false]);
        // Disjoint supports error out.
        let obs3 = Dataset::new(vec![5.0, 6.0], 1, vec![0, 1], vec![0.0; 2], Vec::new()).unwrap();
        assert!(matches!(estimate_support_filter(&rct, &obs3), Err(Error::NoSupportOverlap)));
    }

    #[test]
    fn same_law_samples_give_flat_weights() {
        let mut rng = crate::rng::derive_rng(51, &[1100]);
        let n = 2000;
        let p = 3;
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            (0..n * p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
        };
        let a = Dataset::new(draw(&mut rng), p, vec![0; n], vec![0.0; n], Vec::new()).unwrap();
        let b = Dataset::new(draw(&mut rng), p, vec![0; n], vec![0.0; n], Vec::new()).unwrap();
        let shift = estimate_shift_weights(&a, &b, 5, 9).unwrap();
        assert!(!shift.overlap_warning);
        let mean = stats::mean(&shift.w);
        assert!((mean - 1.0).abs() < 1e-12, "normalization broke: {mean}");
        let max_dev = shift.w.iter().map(|w| (w - 1.0).abs()).fold(0.0f64, f64::max);
        assert!(max_dev < 0.3, "max deviation {max_dev}");
    }

    #[test]
    fn disjoint_samples_raise_overlap_warning() {
        let n = 300;
        let a = Dataset::new((0..n).map(|i| i as f64 / n as f64).collect(), 1, vec![0; n], vec![0.0; n], Vec::new()).unwrap();
        let b = Dataset::new((0..n).map(|i| 10.0 + i as f64 / n as f64).collect(), 1, vec![0; n], vec![0.0; n], Vec::new()).unwrap();
        let shift = estimate_shift_weights(&a, &b, 5, 10).unwrap();
        assert!(shift.overlap_warning);
    }

    #[test]
    fn test_sigma_algebra() {
        // Without the covariance term: plain quadrature.
        assert!((test_sigma(3.0, 4.0, false) - 5.0).abs() < 1e-12);
        // With it: sqrt(s1^2 + s2^2 + 2 s1 s2) = s1 + s2.
        assert!((test_sigma(3.0, 4.0, true) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn auc_orders_separated_scores() {
        let score = [0.1, 0.2, 0.8, 0.9];
        let label = [0u8, 0, 1, 1];
        assert!((rank_auc(&score, &label) - 1.0).abs() < 1e-12);
        let mixed = [0.5, 0.5, 0.5, 0.5];
        assert!((rank_auc(&mixed, &label) - 0.5).abs() < 1e-12);
    }

    fn test_trace(ate: f64, lower: &[f64], upper: &[f64], sigma: f64, alpha: f64) -> Vec<bool> {
        let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(alpha / 2.0);
        lower
            .iter()
            .zip(upper)
            .map(|(&lo, &hi)| {
                let t_plus = (hi - ate) / test_sigma(sigma, 0.01, false);
                let t_minus = (ate - lo) / test_sigma(sigma, 0.01, false);
                t_plus.min(t_minus) < z
            })
            .collect()
    }

    #[test]
    fn rejection_is_monotone_over_nested_intervals() {
        // Nested intervals with fixed sigmas: once accepted, stay accepted.
        let lower = [0.30, 0.20, 0.10, 0.00, -0.10];
        let upper = [0.40, 0.50, 0.60, 0.70, 0.80];
        let flags = test_trace(0.05, &lower, &upper, 0.02, 0.05);
        let mut seen_accept = false;
        for &reject in &flags {
            if !reject {
                seen_accept = true;
            }
            assert!(!(seen_accept && reject), "rejection after acceptance: {flags:?}");
        }
        // Inside the interval: accept (both statistics positive).
        assert!(!test_trace(0.35, &[0.3], &[0.4], 0.02, 0.05)[0]);
        // Far above the upper bound: reject.
        assert!(test_trace(2.0, &[0.3], &[0.4], 0.02, 0.05)[0]);
        // Slightly outside but within the noise band: accept.
        assert!(!test_trace(0.405, &[0.3], &[0.4], 0.2, 0.05)[0]);
    }
}
