//! Experiment orchestration: Monte Carlo replication of the simulation
//! presets, all four calibrators per replicate, summary statistics, the
//! robustness (containment) tables, and plot-data emission.

pub mod output;
pub mod robustness;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{bounds_curve, BootstrapPolicy, BoundsCurve, CiOptions, Estimand, GammaGrid, IntervalKind, QbOptions};
use crate::calibrate::{informal_benchmark, nco_lower_bound, rct_lower_bound, BenchmarkOptions, BenchmarkReport, NcoOptions, NcoReport, OmissionMode, PropensityEstimator, RctOptions, RctTestTrace};
use crate::error::Result;
use crate::nuisance::ForestHyperParams;
use crate::rng::{derive_seed, stage};
use crate::sim::{make_config_with_seed, sample_pair, Diagnostics, SimulationConfig};
use crate::stats;

pub use robustness::{default_gamma_choices, robustness_table, GammaChoice, RobustnessEntry, RobustnessOptions, RobustnessTable};

/// Paper scale runs the published sample sizes and bootstrap budgets; desk
/// scale caps n at 500, drops B to 200, tunes forests over an 8-point
/// subgrid, and swaps bootstrap refits for the fast policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scale {
    Paper,
    Desk,
}

impl Scale {
    pub fn tag(self) -> &'static str {
        match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        }
    }

    pub fn bootstrap_b(self) -> usize {
        match self {
            Scale::Paper => 500,
            Scale::Desk => 200,
        }
    }

    pub fn bootstrap_policy(self) -> BootstrapPolicy {
        match self {
            Scale::Paper => BootstrapPolicy::FullRefit,
            Scale::Desk => BootstrapPolicy::Fast,
        }
    }

    /// Forest tuning grid for `p` covariates; `None` means the full
    /// 81-point grid.
    pub fn forest_grid(self, p: usize) -> Option<Vec<ForestHyperParams>> {
        match self {
            Scale::Paper => None,
            Scale::Desk => {
                // Documented desk subgrid: the corners of the tree-count,
                // node-size and subsample axes at the default mtry.
                let mut grid = Vec::with_capacity(8);
                for &num_trees in &[30usize, 50] {
                    for &min_node_size in &[5usize, 20] {
                        for &sample_fraction in &[0.1f64, 0.5] {
                            grid.push(ForestHyperParams {
                                num_trees,
                                min_node_size,
                                sample_fraction,
                                mtry: ForestHyperParams::default_mtry(p),
                            });
                        }
                    }
                }
                Some(grid)
            }
        }
    }

    fn cap_n(self, n: usize) -> usize {
        match self {
            Scale::Paper => n,
            Scale::Desk => n.min(500),
        }
    }
}

/// Whether each replicate also computes the sensitivity-analysis curve for
/// the plot data, and with which interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CurveMode {
    Skip,
    Pei,
    WithCi,
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub replicates: usize,
    pub base_seed: u64,
    pub scale: Scale,
    /// Override the preset's interval choice for the calibration algorithms.
    pub interval: Option<IntervalKind>,
    pub curve: CurveMode,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            replicates: 20,
            base_seed: crate::sim::DEFAULT_BASE_SEED,
            scale: Scale::Paper,
            interval: None,
            curve: CurveMode::WithCi,
        }
    }
}

/// Everything one replicate produced.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub diagnostics: Option<Diagnostics>,
    pub ib_logistic: Option<BenchmarkReport>,
    pub ib_forest: Option<BenchmarkReport>,
    pub rct: Option<RctTestTrace>,
    pub nco: Option<NcoReport>,
    pub curve: Option<BoundsCurve>,
    pub error: Option<String>,
}

impl ReplicateRecord {
    pub fn method_value(&self, method: Method) -> Option<f64> {
        match method {
            Method::IbLogistic => self.ib_logistic.as_ref().map(|r| r.gamma_ib()),
            Method::IbForest => self.ib_forest.as_ref().map(|r| r.gamma_ib()),
            Method::LbRct => self.rct.as_ref().map(|r| r.gamma_lb),
            Method::LbNco => self.nco.as_ref().map(|r| r.gamma_lb),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    IbLogistic,
    IbForest,
    LbRct,
    LbNco,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::IbLogistic, Method::IbForest, Method::LbRct, Method::LbNco];

    pub fn tag(self) -> &'static str {
        match self {
            Method::IbLogistic => "ib_logistic",
            Method::IbForest => "ib_forest",
            Method::LbRct => "lb_rct",
            Method::LbNco => "lb_nco",
        }
    }
}

/// Min / median / max over the successful replicates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MethodSummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub n: usize,
}

impl MethodSummary {
    pub fn from_values(values: &[f64]) -> Option<MethodSummary> {
        if values.is_empty() {
            return None;
        }
        Some(MethodSummary {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            median: stats::median(values),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub experiment_id: u8,
    pub scale: Scale,
    pub base_seed: u64,
    pub config: SimulationConfig,
    pub records: Vec<ReplicateRecord>,
    pub replicates_requested: usize,
    pub replicates_failed: usize,
    pub summary: Vec<(Method, Option<MethodSummary>)>,
}

impl ExperimentResult {
    pub fn method_values(&self, method: Method) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.method_value(method)).collect()
    }

    pub fn summary_for(&self, method: Method) -> Option<MethodSummary> {
        self.summary.iter().find(|(m, _)| *m == method).and_then(|(_, s)| *s)
    }
}

/// Desk scale caps the generated sample sizes.
pub fn scaled_config(id: u8, base_seed: u64, scale: Scale) -> Result<SimulationConfig> {
    let mut config = make_config_with_seed(id, base_seed)?;
    config.n_rct = scale.cap_n(config.n_rct);
    config.n_obs = scale.cap_n(config.n_obs);
    Ok(config)
}

const CAL_IB_LOG: u64 = 1;
const CAL_IB_FOREST: u64 = 2;
const CAL_RCT: u64 = 3;
const CAL_NCO: u64 = 4;
const CAL_CURVE: u64 = 5;

fn run_replicate(
    config: &SimulationConfig,
    opts: &ExperimentOptions,
    replicate: usize,
    seed: u64,
) -> Result<ReplicateRecord> {
    let pair = sample_pair(config, seed)?;
    let interval = opts.interval.unwrap_or(config.interval);
    let ci = CiOptions {
        alpha: 0.05,
        b: opts.scale.bootstrap_b(),
        policy: opts.scale.bootstrap_policy(),
    };
    let grid = config.calibration_grid();

    let mut ib_opts = BenchmarkOptions::new(PropensityEstimator::Logistic, OmissionMode::LeaveMultipleOut);
    let ib_logistic = informal_benchmark(&pair.obs, &ib_opts, derive_seed(seed, &[CAL_IB_LOG]))?;

    ib_opts.estimator = PropensityEstimator::Forest;
    ib_opts.forest_grid = opts.scale.forest_grid(config.p_x);
    let ib_forest = informal_benchmark(&pair.obs, &ib_opts, derive_seed(seed, &[CAL_IB_FOREST]))?;

    let rct_opts = RctOptions {
        grid: grid.clone(),
        interval,
        ci,
        ..RctOptions::default()
    };
    let rct = rct_lower_bound(&pair.rct, &pair.obs, &rct_opts, derive_seed(seed, &[CAL_RCT]))?;

    let nco_opts = NcoOptions { grid, interval, k_folds: 5, ci };
    let nco = nco_lower_bound(&pair.obs, &nco_opts, derive_seed(seed, &[CAL_NCO]))?;

    let curve = match opts.curve {
        CurveMode::Skip => None,
        mode => {
            let qb = QbOptions {
                k_folds: 5,
                estimand: Estimand::Ate,
                ci: (mode == CurveMode::WithCi).then_some(ci),
            };
            Some(bounds_curve(&pair.obs, &GammaGrid::sensitivity_default(), &qb, derive_seed(seed, &[CAL_CURVE]))?)
        }
    };

    Ok(ReplicateRecord {
        replicate,
        seed,
        diagnostics: Some(pair.diagnostics),
        ib_logistic: Some(ib_logistic),
        ib_forest: Some(ib_forest),
        rct: Some(rct),
        nco: Some(nco),
        curve,
        error: None,
    })
}

/// Run one experiment preset. A replicate failure is recorded in its record
/// and never aborts the others; summaries cover the successes and disclose
/// the counts.
pub fn run_experiment(id: u8, opts: &ExperimentOptions) -> Result<ExperimentResult> {
    let config = scaled_config(id, opts.base_seed, opts.scale)?;
    let records: Vec<ReplicateRecord> = (0..opts.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(opts.base_seed, &[stage::REPLICATE, id as u64, r as u64]);
            run_replicate(&config, opts, r, seed).unwrap_or_else(|err| ReplicateRecord {
                replicate: r,
                seed,
                diagnostics: None,
                ib_logistic: None,
                ib_forest: None,
                rct: None,
                nco: None,
                curve: None,
                error: Some(err.to_string()),
            })
        })
        .collect();

    let replicates_failed = records.iter().filter(|r| r.error.is_some()).count();
    let summary = Method::ALL
        .iter()
        .map(|&m| {
            let values: Vec<f64> = records.iter().filter_map(|r| r.method_value(m)).collect();
            (m, MethodSummary::from_values(&values))
        })
        .collect();

    Ok(ExperimentResult {
        experiment_id: id,
        scale: opts.scale,
        base_seed: opts.base_seed,
        config,
        records,
        replicates_requested: opts.replicates,
        replicates_failed,
        summary,
    })
}
