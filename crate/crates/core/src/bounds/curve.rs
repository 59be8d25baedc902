//! Bounds curves over a Γ grid, with optional percentile-bootstrap
//! confidence intervals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Arm, Dataset};
use crate::error::{Error, Result};
use crate::nuisance::{crossfit, CrossfitSpec, DesignMatrix, NuisanceFits, PropensityModel};
use crate::rng::{derive_rng, derive_seed, stage};
use crate::stats;

use super::pei::{ate_bounds, pei_theta};
use super::weights::gamma_frac;

/// Strictly increasing confounding strengths, each >= 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaGrid {
    values: Vec<f64>,
}

impl GammaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("gamma grid is empty"));
        }
        if values[0] < 1.0 {
            return Err(Error::invalid("gamma grid values must be >= 1"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("gamma grid must be strictly increasing"));
        }
        Ok(GammaGrid { values })
    }

    /// `count` equally spaced values on [min, max], endpoints included.
    pub fn equally_spaced(min: f64, max: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("gamma grid needs at least one point"));
        }
        if max < min {
            return Err(Error::invalid("gamma grid max below min"));
        }
        if max > min && count < 2 {
            return Err(Error::invalid("gamma grid with max > min needs count >= 2"));
        }
        if count == 1 {
            return GammaGrid::new(vec![min]);
        }
        let step = (max - min) / (count - 1) as f64;
        GammaGrid::new((0..count).map(|i| min + step * i as f64).collect())
    }

    /// Default sensitivity-analysis grid: 20 equally spaced values on [1, 20].
    pub fn sensitivity_default() -> Self {
        GammaGrid::equally_spaced(1.0, 20.0, 20).expect("static grid")
    }

    /// Default calibration grid: 25 equally spaced values on [1, 13], or 30
    /// on [1, 20] when the confounding strength of interest reaches 20.
    pub fn calibration_default(gamma_star_hint: Option<f64>) -> Self {
        if gamma_star_hint.is_some_and(|g| g >= 20.0) {
            GammaGrid::equally_spaced(1.0, 20.0, 30).expect("static grid")
        } else {
            GammaGrid::equally_spaced(1.0, 13.0, 25).expect("static grid")
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        *self.values.last().expect("non-empty by construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimand {
    Theta1,
    Theta0,
    Ate,
}

impl Estimand {
    pub fn tag(self) -> &'static str {
        match self {
            Estimand::Theta1 => "theta1",
            Estimand::Theta0 => "theta0",
            Estimand::Ate => "ATE",
        }
    }
}

/// Which side of the curve a consumer reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalKind {
    Pei,
    Ci,
}

/// How bootstrap resamples recompute the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BootstrapPolicy {
    /// Refit all nuisances on every resample.
    FullRefit,
    /// Reuse the original out-of-fold predictions indexed by resampled rows.
    Fast,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CiOptions {
    pub alpha: f64,
    pub b: usize,
    pub policy: BootstrapPolicy,
}

impl Default for CiOptions {
    fn default() -> Self {
        CiOptions { alpha: 0.05, b: 500, policy: BootstrapPolicy::FullRefit }
    }
}

#[derive(Debug, Clone)]
pub struct QbOptions {
    pub k_folds: usize,
    pub estimand: Estimand,
    pub ci: Option<CiOptions>,
}

impl Default for QbOptions {
    fn default() -> Self {
        QbOptions { k_folds: 5, estimand: Estimand::Ate, ci: None }
    }
}

/// Per-Γ lower/upper point estimates with optional bootstrap CI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsCurve {
    pub grid: GammaGrid,
    pub pei_lower: Vec<f64>,
    pub pei_upper: Vec<f64>,
    pub ci_lower: Option<Vec<f64>>,
    pub ci_upper: Option<Vec<f64>>,
    pub estimand: Estimand,
    pub alpha: Option<f64>,
    pub b: Option<usize>,
    pub warnings: Vec<String>,
}

impl BoundsCurve {
    pub fn has_ci(&self) -> bool {
        self.ci_lower.is_some() && self.ci_upper.is_some()
    }

    /// Interval at grid index `idx`, PEI or CI.
    pub fn interval(&self, idx: usize, kind: IntervalKind) -> Result<(f64, f64)> {
        match kind {
            IntervalKind::Pei => Ok((self.pei_lower[idx], self.pei_upper[idx])),
            IntervalKind::Ci => {
                let (lo, hi) = (self.ci_lower.as_ref(), self.ci_upper.as_ref());
                match (lo, hi) {
                    (Some(lo), Some(hi)) => Ok((lo[idx], hi[idx])),
                    _ => Err(Error::invalid("curve has no confidence intervals")),
                }
            }
        }
    }

    /// CSV columns: gamma, pei_lower, pei_upper, ci_lower, ci_upper,
    /// estimand, alpha, B.
    pub fn to_csv_string(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("gamma,pei_lower,pei_upper,ci_lower,ci_upper,estimand,alpha,B\n");
        for (i, &g) in self.grid.values().iter().enumerate() {
            let _ = write!(out, "{},{},{}", g, self.pei_lower[i], self.pei_upper[i]);
            match (&self.ci_lower, &self.ci_upper) {
                (Some(lo), Some(hi)) => {
                    let _ = write!(out, ",{},{}", lo[i], hi[i]);
                }
                _ => out.push_str(",,"),
            }
            let _ = write!(out, ",{}", self.estimand.tag());
            match self.alpha {
                Some(a) => {
                    let _ = write!(out, ",{}", a);
                }
                None => out.push(','),
            }
            match self.b {
                Some(b) => {
                    let _ = write!(out, ",{}", b);
                }
                None => out.push(','),
            }
            out.push('\n');
        }
        out
    }
}

/// Taus needed for one Γ (deduplicated at Γ = 1 where both collapse to 1/2).
fn taus_for(gamma: f64) -> Result<Vec<f64>> {
    let gf = gamma_frac(gamma)?;
    if gf == 1.0 - gf {
        Ok(vec![gf])
    } else {
        Ok(vec![gf, 1.0 - gf])
    }
}

fn estimand_bounds(
    estimand: Estimand,
    data: &Dataset,
    fits: &NuisanceFits,
    gamma: f64,
) -> Result<(f64, f64)> {
    match estimand {
        Estimand::Theta1 => pei_theta(Arm::Treated, data, fits, gamma),
        Estimand::Theta0 => pei_theta(Arm::Control, data, fits, gamma),
        Estimand::Ate => ate_bounds(data, fits, gamma),
    }
}

/// Cross-fit the propensity once, then attach per-Γ quantile fits.
fn fits_at_gamma(
    data: &Dataset,
    base: &NuisanceFits,
    k: usize,
    gamma: f64,
    seed: u64,
) -> Result<NuisanceFits> {
    let x = DesignMatrix::new(data.covariates().to_vec(), data.n_covariates())?;
    let spec = CrossfitSpec::quantiles_only(k, taus_for(gamma)?);
    let mut fits = crossfit(&x, data.treatment(), data.outcome(), &spec, seed)?;
    fits.propensity = base.propensity.clone();
    fits.propensity_warning = base.propensity_warning;
    Ok(fits)
}

fn base_propensity(data: &Dataset, k: usize, seed: u64) -> Result<NuisanceFits> {
    let x = DesignMatrix::new(data.covariates().to_vec(), data.n_covariates())?;
    let spec = CrossfitSpec::propensity_only(k, PropensityModel::Logistic);
    crossfit(&x, data.treatment(), data.outcome(), &spec, seed)
}

/// PEI across the whole grid for one dataset (shared by the main curve and
/// by full-refit bootstrap resamples).
fn pei_over_grid(
    data: &Dataset,
    grid: &GammaGrid,
    k: usize,
    estimand: Estimand,
    seed: u64,
) -> Result<(Vec<(f64, f64)>, bool)> {
    let base = base_propensity(data, k, seed)?;
    let bounds: Vec<(f64, f64)> = grid
        .values()
        .par_iter()
        .map(|&gamma| {
            let fits = fits_at_gamma(data, &base, k, gamma, seed)?;
            estimand_bounds(estimand, data, &fits, gamma)
        })
        .collect::<Result<_>>()?;
    Ok((bounds, base.propensity_warning))
}

/// Per-row inverse adversarial weights for the row's own arm, used by the
/// fast bootstrap policy.
struct FastRow {
    inv_minus: f64,
    inv_plus: f64,
}

fn fast_rows(data: &Dataset, fits: &NuisanceFits, gamma: f64) -> Result<Vec<FastRow>> {
    let gf = gamma_frac(gamma)?;
    let ehat = fits.propensity.as_ref().ok_or_else(|| Error::invalid("propensity fits unavailable"))?;
    let n = data.n_rows();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let arm = if data.treatment()[i] == 1 { Arm::Treated } else { Arm::Control };
        let q_low = fits.quantile(arm, 1.0 - gf).ok_or_else(|| Error::invalid("missing quantile fit"))?[i];
        let q_high = fits.quantile(arm, gf).ok_or_else(|| Error::invalid("missing quantile fit"))?[i];
        let e = if arm == Arm::Treated { ehat[i] } else { 1.0 - ehat[i] };
        let w = super::weights::adversarial_weights(&[e], &[data.outcome()[i]], &[q_low], &[q_high], gamma)?;
        rows.push(FastRow { inv_minus: 1.0 / w.e_minus[0], inv_plus: 1.0 / w.e_plus[0] });
    }
    Ok(rows)
}

fn fast_bounds(
    estimand: Estimand,
    data: &Dataset,
    rows: &[FastRow],
    idx: &[usize],
) -> Option<(f64, f64)> {
    let mut num = [[0.0f64; 2]; 2]; // [arm][minus/plus]
    let mut den = [[0.0f64; 2]; 2];
    for &i in idx {
        let arm = data.treatment()[i] as usize;
        let y = data.outcome()[i];
        num[arm][0] += y * rows[i].inv_minus;
        den[arm][0] += rows[i].inv_minus;
        num[arm][1] += y * rows[i].inv_plus;
        den[arm][1] += rows[i].inv_plus;
    }
    if den[0][0] == 0.0 || den[1][0] == 0.0 {
        return None; // resample lost an arm
    }
    let theta = |arm: usize, side: usize| num[arm][side] / den[arm][side];
    Some(match estimand {
        Estimand::Theta1 => (theta(1, 0), theta(1, 1)),
        Estimand::Theta0 => (theta(0, 0), theta(0, 1)),
        Estimand::Ate => (theta(1, 0) - theta(0, 1), theta(1, 1) - theta(0, 0)),
    })
}

fn resample_indices(n: usize, rng: &mut impl rand::Rng) -> Vec<usize> {
    (0..n).map(|_| (rng.random::<u64>() % n as u64) as usize).collect()
}

/// Bounds recomputed on `b` seeded row-resamples (with replacement, full n).
/// Entry `samples[r][g]` is the (lower, upper) bound at grid point `g` for
/// resample `r`; a failed resample yields `None`. Shared by the percentile
/// CIs here and by the bound standard deviations of the RCT test.
pub fn bound_resamples(
    data: &Dataset,
    grid: &GammaGrid,
    k_folds: usize,
    estimand: Estimand,
    b: usize,
    policy: BootstrapPolicy,
    seed: u64,
) -> Result<Vec<Option<Vec<(f64, f64)>>>> {
    let n = data.n_rows();
    match policy {
        BootstrapPolicy::FullRefit => Ok((0..b)
            .into_par_iter()
            .map(|r| {
                let mut rng = derive_rng(seed, &[stage::BOUNDS_BOOT, r as u64]);
                let idx = resample_indices(n, &mut rng);
                let resampled = data.select(&idx);
                let inner = derive_seed(seed, &[stage::BOUNDS_BOOT, r as u64, 1]);
                pei_over_grid(&resampled, grid, k_folds, estimand, inner)
                    .ok()
                    .map(|(bounds, _)| bounds)
            })
            .collect()),
        BootstrapPolicy::Fast => {
            let base = base_propensity(data, k_folds, seed)?;
            let per_gamma: Vec<Vec<FastRow>> = grid
                .values()
                .par_iter()
                .map(|&gamma| {
                    let fits = fits_at_gamma(data, &base, k_folds, gamma, seed)?;
                    fast_rows(data, &fits, gamma)
                })
                .collect::<Result<_>>()?;
            Ok((0..b)
                .into_par_iter()
                .map(|r| {
                    let mut rng = derive_rng(seed, &[stage::BOUNDS_BOOT, r as u64]);
                    let idx = resample_indices(n, &mut rng);
                    grid.values()
                        .iter()
                        .enumerate()
                        .map(|(g, _)| fast_bounds(estimand, data, &per_gamma[g], &idx))
                        .collect::<Option<Vec<_>>>()
                })
                .collect())
        }
    }
}

/// Compute the bounds curve, optionally with a percentile-bootstrap CI over
/// `B` seeded row-resamples.
pub fn bounds_curve(data: &Dataset, grid: &GammaGrid, opts: &QbOptions, seed: u64) -> Result<BoundsCurve> {
    let mut warnings = Vec::new();
    let (pei, propensity_warning) = pei_over_grid(data, grid, opts.k_folds, opts.estimand, seed)?;
    if propensity_warning {
        warnings.push("propensity fit used the ridge fallback or did not converge".to_string());
    }

    let mut curve = BoundsCurve {
        grid: grid.clone(),
        pei_lower: pei.iter().map(|b| b.0).collect(),
        pei_upper: pei.iter().map(|b| b.1).collect(),
        ci_lower: None,
        ci_upper: None,
        estimand: opts.estimand,
        alpha: None,
        b: None,
        warnings,
    };

    let Some(ci) = opts.ci else {
        return Ok(curve);
    };
    if !(0.0 < ci.alpha && ci.alpha < 0.5) {
        return Err(Error::invalid("alpha must lie in (0, 0.5)"));
    }
    if ci.b == 0 {
        return Err(Error::invalid("bootstrap needs B >= 1"));
    }
    if ci.b < 50 {
        curve.warnings.push(format!("B = {} bootstrap replicates give unstable percentile CIs", ci.b));
    }

    let samples = bound_resamples(data, grid, opts.k_folds, opts.estimand, ci.b, ci.policy, seed)?;
    let ok: Vec<&Vec<(f64, f64)>> = samples.iter().flatten().collect();
    if ok.len() * 10 < ci.b * 9 {
        return Err(Error::Numerical(format!(
            "{} of {} bootstrap resamples failed",
            ci.b - ok.len(),
            ci.b
        )));
    }
    if ok.len() < samples.len() {
        curve.warnings.push(format!("{} bootstrap resamples failed and were dropped", samples.len() - ok.len()));
    }

    let m = grid.len();
    let mut ci_lower = Vec::with_capacity(m);
    let mut ci_upper = Vec::with_capacity(m);
    for g in 0..m {
        let lows: Vec<f64> = ok.iter().map(|s| s[g].0).collect();
        let highs: Vec<f64> = ok.iter().map(|s| s[g].1).collect();
        ci_lower.push(stats::quantile(&lows, ci.alpha / 2.0));
        ci_upper.push(stats::quantile(&highs, 1.0 - ci.alpha / 2.0));
    }
    curve.ci_lower = Some(ci_lower);
    curve.ci_upper = Some(ci_upper);
    curve.alpha = Some(ci.alpha);
    curve.b = Some(ci.b);
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn synthetic(n: usize, seed: u64) -> Dataset {
        let mut rng = crate::rng::derive_rng(seed, &[700]);
        let mut x = Vec::new();
        let mut t = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let xv: f64 = rng.random::<f64>() * 2.0 - 1.0;
            let e = crate::nuisance::design::logistic(0.5 * xv);
            let ti = (rng.random::<f64>() < e) as u8;
            x.push(xv);
            t.push(ti);
            y.push(0.8 * xv + 0.4 * ti as f64 + rng.random::<f64>() - 0.5);
        }
        Dataset::new(x, 1, t, y, Vec::new()).unwrap()
    }

    #[test]
    fn grid_construction_rules() {
        assert!(GammaGrid::new(vec![]).is_err());
        assert!(GammaGrid::new(vec![0.5, 2.0]).is_err());
        assert!(GammaGrid::new(vec![1.0, 1.0]).is_err());
        let g = GammaGrid::equally_spaced(1.0, 20.0, 20).unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g.values()[0], 1.0);
        assert_eq!(g.max(), 20.0);
        // Inclusive endpoints with equal spacing: 1 + 5 * 19/29 on the
        // 30-point [1, 20] grid.
        let g30 = GammaGrid::equally_spaced(1.0, 20.0, 30).unwrap();
        assert!((g30.values()[5] - (1.0 + 5.0 * 19.0 / 29.0)).abs() < 1e-12);
    }

    #[test]
    fn single_point_grid_collapses_curve() {
        let data = synthetic(200, 1);
        let grid = GammaGrid::equally_spaced(1.0, 1.0, 1).unwrap();
        let opts = QbOptions {
            ci: Some(CiOptions { alpha: 0.05, b: 60, policy: BootstrapPolicy::Fast }),
            ..QbOptions::default()
        };
        let curve = bounds_curve(&data, &grid, &opts, 2).unwrap();
        assert_eq!(curve.grid.len(), 1);
        assert!((curve.pei_upper[0] - curve.pei_lower[0]).abs() < 1e-10);
        assert!(curve.has_ci());
        let (lo, hi) = curve.interval(0, IntervalKind::Ci).unwrap();
        assert!(lo <= hi);
    }

    #[test]
    fn pei_is_nested_across_the_grid() {
        // Tail-quantile plug-in noise shrinks with n, and this synthetic has
        // a much lower signal-to-noise ratio than the simulated experiments,
        // so the tolerance here is looser than the acceptance-suite check on
        // generated data.
        let data = synthetic(2000, 2);
        let grid = GammaGrid::sensitivity_default();
        let curve = bounds_curve(&data, &grid, &QbOptions::default(), 3).unwrap();
        let range_y = {
            let (lo, hi) = data
                .outcome()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            hi - lo
        };
        let tol = 1e-2 * range_y;
        for w in curve.pei_lower.windows(2) {
            assert!(w[1] <= w[0] + tol, "lower bound rose: {} -> {}", w[0], w[1]);
        }
        for w in curve.pei_upper.windows(2) {
            assert!(w[1] >= w[0] - tol, "upper bound fell: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn small_b_adds_warning() {
        let data = synthetic(120, 3);
        let grid = GammaGrid::equally_spaced(1.0, 2.0, 2).unwrap();
        let opts = QbOptions {
            ci: Some(CiOptions { alpha: 0.1, b: 20, policy: BootstrapPolicy::Fast }),
            ..QbOptions::default()
        };
        let curve = bounds_curve(&data, &grid, &opts, 4).unwrap();
        assert!(curve.warnings.iter().any(|w| w.contains("B = 20")));
    }

    #[test]
    fn csv_has_contracted_columns() {
        let data = synthetic(150, 5);
        let grid = GammaGrid::equally_spaced(1.0, 4.0, 3).unwrap();
        let curve = bounds_curve(&data, &grid, &QbOptions::default(), 6).unwrap();
        let csv = curve.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "gamma,pei_lower,pei_upper,ci_lower,ci_upper,estimand,alpha,B"
        );
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(1).unwrap().contains("ATE"));
    }

    #[test]
    fn full_and_fast_policies_agree_roughly() {
        let data = synthetic(250, 7);
        let grid = GammaGrid::equally_spaced(1.0, 3.0, 2).unwrap();
        let mut opts = QbOptions {
            ci: Some(CiOptions { alpha: 0.05, b: 80, policy: BootstrapPolicy::Fast }),
            ..QbOptions::default()
        };
        let fast = bounds_curve(&data, &grid, &opts, 8).unwrap();
        opts.ci = Some(CiOptions { alpha: 0.05, b: 80, policy: BootstrapPolicy::FullRefit });
        let full = bounds_curve(&data, &grid, &opts, 8).unwrap();
        assert_eq!(fast.pei_lower, full.pei_lower);
        for g in 0..grid.len() {
            let (fl, fh) = fast.interval(g, IntervalKind::Ci).unwrap();
            let (gl, gh) = full.interval(g, IntervalKind::Ci).unwrap();
            assert!((fl - gl).abs() < 0.25 && (fh - gh).abs() < 0.25);
        }
    }
}
