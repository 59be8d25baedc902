//! Lower bound on the confounding strength from negative control outcomes:
//! the treatment has no effect on an NCO, so any apparent effect must be
//! explained away by confounding. Per NCO, scan the sensitivity bounds of
//! the apparent effect for the first Γ whose interval contains zero; the
//! lower bound is the maximum of those critical values.

use serde::Serialize;

use crate::bounds::{bounds_curve, critical_value, BoundsCurve, CiOptions, CriticalValue, Estimand, GammaGrid, IntervalKind, QbOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Serialize)]
pub struct NcoCurveRecord {
    pub nco_index: usize,
    pub critical: CriticalValue,
    pub curve: BoundsCurve,
}

#[derive(Debug, Clone, Serialize)]
pub struct NcoReport {
    pub per_nco: Vec<NcoCurveRecord>,
    /// max over NCOs of the per-NCO critical value (grid maximum when a
    /// scan never contained zero — see `any_beyond_grid`).
    pub gamma_lb: f64,
    pub any_beyond_grid: bool,
    pub interval: IntervalKind,
}

#[derive(Debug, Clone)]
pub struct NcoOptions {
    pub grid: GammaGrid,
    pub interval: IntervalKind,
    pub k_folds: usize,
    /// CI construction when `interval` is CI.
    pub ci: CiOptions,
}

impl Default for NcoOptions {
    fn default() -> Self {
        NcoOptions {
            grid: GammaGrid::calibration_default(None),
            interval: IntervalKind::Pei,
            k_folds: 5,
            ci: CiOptions::default(),
        }
    }
}

pub fn nco_lower_bound(obs: &Dataset, opts: &NcoOptions, seed: u64) -> Result<NcoReport> {
    let q = obs.n_ncos();
    if q == 0 {
        return Err(Error::invalid("no negative control outcome columns (w1..wq) in the data"));
    }
    let qb = QbOptions {
        k_folds: opts.k_folds,
        estimand: Estimand::Ate,
        ci: (opts.interval == IntervalKind::Ci).then_some(opts.ci),
    };
    let mut per_nco = Vec::with_capacity(q);
    for k in 0..q {
        let data_k = obs.with_outcome(obs.nco(k).to_vec())?;
        let curve = bounds_curve(&data_k, &opts.grid, &qb, derive_seed(seed, &[k as u64]))?;
        let critical = critical_value(&curve, 0.0, opts.interval)?;
        per_nco.push(NcoCurveRecord { nco_index: k, critical, curve });
    }
    let gamma_lb = per_nco
        .iter()
        .map(|r| r.critical.value_or_grid_max())
        .fold(f64::NEG_INFINITY, f64::max);
    let any_beyond_grid = per_nco.iter().any(|r| r.critical.is_beyond_grid());
    Ok(NcoReport { per_nco, gamma_lb, any_beyond_grid, interval: opts.interval })
}
