//! Containment percentages: how often the bootstrap CI of the ATE bounds
//! contains the null effect and the true ATE at selected Γ values.

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{bounds_curve, BootstrapPolicy, CiOptions, Estimand, GammaGrid, IntervalKind, QbOptions};
use crate::error::Result;
use crate::rng::{derive_seed, stage};
use crate::sim::sample_pair;

use super::{ExperimentResult, Method};

/// One Γ at which containment is evaluated.
#[derive(Debug, Clone, Serialize)]
pub struct GammaChoice {
    pub label: String,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustnessEntry {
    pub choice: GammaChoice,
    /// Percent of replicates whose CI contains 0.
    pub pct_null: f64,
    /// Percent of replicates whose CI contains the true ATE.
    pub pct_ate_star: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustnessTable {
    pub experiment_id: u8,
    pub replicates: usize,
    pub b: usize,
    pub entries: Vec<RobustnessEntry>,
}

#[derive(Debug, Clone, Copy)]
pub struct RobustnessOptions {
    pub b: usize,
    pub alpha: f64,
    pub policy: BootstrapPolicy,
}

impl Default for RobustnessOptions {
    fn default() -> Self {
        RobustnessOptions { b: 500, alpha: 0.05, policy: BootstrapPolicy::Fast }
    }
}

/// Default Γ choices: ignorability, the per-method medians, and the true
/// confounding strength.
pub fn default_gamma_choices(result: &ExperimentResult) -> Vec<GammaChoice> {
    let mut choices = vec![GammaChoice { label: "gamma_1".into(), gamma: 1.0 }];
    for method in Method::ALL {
        if let Some(summary) = result.summary_for(method) {
            choices.push(GammaChoice { label: format!("{}_median", method.tag()), gamma: summary.median });
        }
    }
    choices.push(GammaChoice { label: "gamma_star".into(), gamma: result.config.gamma_star });
    choices
}

/// Recompute, per successful replicate and per Γ choice, the ATE CI on the
/// replicate's (regenerated) observational data and count containment of 0
/// and of the true ATE.
pub fn robustness_table(
    result: &ExperimentResult,
    choices: &[GammaChoice],
    opts: &RobustnessOptions,
    seed: u64,
) -> Result<RobustnessTable> {
    let config = &result.config;
    let seeds: Vec<u64> = result.records.iter().filter(|r| r.error.is_none()).map(|r| r.seed).collect();

    // Containment flags per (replicate, choice): (null, ate_star).
    let flags: Vec<Vec<(bool, bool)>> = seeds
        .par_iter()
        .map(|&rep_seed| {
            let pair = sample_pair(config, rep_seed)?;
            choices
                .iter()
                .enumerate()
                .map(|(c, choice)| {
                    let grid = GammaGrid::new(vec![choice.gamma.max(1.0)])?;
                    let qb = QbOptions {
                        k_folds: 5,
                        estimand: Estimand::Ate,
                        ci: Some(CiOptions { alpha: opts.alpha, b: opts.b, policy: opts.policy }),
                    };
                    let curve = bounds_curve(
                        &pair.obs,
                        &grid,
                        &qb,
                        derive_seed(seed, &[stage::ROBUSTNESS, rep_seed, c as u64]),
                    )?;
                    let (lo, hi) = curve.interval(0, IntervalKind::Ci)?;
                    Ok((lo <= 0.0 && 0.0 <= hi, lo <= config.ate_star && config.ate_star <= hi))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let n = flags.len().max(1) as f64;
    let entries = choices
        .iter()
        .enumerate()
        .map(|(c, choice)| {
            let null_hits = flags.iter().filter(|f| f[c].0).count() as f64;
            let ate_hits = flags.iter().filter(|f| f[c].1).count() as f64;
            RobustnessEntry {
                choice: choice.clone(),
                pct_null: 100.0 * null_hits / n,
                pct_ate_star: 100.0 * ate_hits / n,
            }
        })
        .collect();

    Ok(RobustnessTable {
        experiment_id: result.experiment_id,
        replicates: flags.len(),
        b: opts.b,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_experiment, CurveMode, ExperimentOptions, Scale};

    #[test]
    fn containment_percentages_are_consistent() {
        let opts = ExperimentOptions {
            replicates: 2,
            base_seed: 1,
            scale: Scale::Desk,
            interval: None,
            curve: CurveMode::Skip,
        };
        let result = run_experiment(9, &opts).unwrap();
        let choices = default_gamma_choices(&result);
        assert_eq!(choices.first().unwrap().gamma, 1.0);
        assert_eq!(choices.last().unwrap().gamma, 8.0);
        assert_eq!(choices.len(), 6);

        let table = robustness_table(
            &result,
            &choices,
            &RobustnessOptions { b: 60, alpha: 0.05, policy: crate::bounds::BootstrapPolicy::Fast },
            7,
        )
        .unwrap();
        assert_eq!(table.replicates, 2);
        for entry in &table.entries {
            assert!((0.0..=100.0).contains(&entry.pct_null));
            assert!((0.0..=100.0).contains(&entry.pct_ate_star));
        }
        // At gamma_star the interval spans both targets for this preset.
        let wide = table.entries.last().unwrap();
        assert_eq!(wide.pct_ate_star, 100.0);
    }
}
