//! Experiment presets: dimensions, sample sizes, correlation regimes, true
//! confounding strength, and the frozen coefficient draws.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::IntervalKind;
use crate::error::{Error, Result};
use crate::rng::{derive_rng, stage};

/// Base seed used by the experiment suite.
pub const DEFAULT_BASE_SEED: u64 = 1;

/// Negative-control-outcome regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NcoCase {
    /// The NCO shares all unobserved confounders with the outcome.
    Ideal,
    /// One confounder drives treatment and the NCOs but not the outcome,
    /// so the NCO lower bound tends to overestimate.
    Case1,
    /// One confounder drives treatment and the outcome but not the NCOs,
    /// so the NCO lower bound tends to underestimate.
    Case2,
}

/// Uniform draw bounds for one coefficient family.
pub type Range = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRanges {
    pub beta: Range,
    pub theta1: Range,
    pub theta2: Range,
    pub theta3: Range,
    pub theta4: Range,
    pub delta: Range,
}

/// One experiment's full parameterization, with coefficient vectors drawn
/// once and frozen: Monte Carlo replicates vary only the data sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub experiment_id: Option<u8>,
    pub p_x: usize,
    pub p_u: usize,
    pub p_w: usize,
    pub n_rct: usize,
    pub n_obs: usize,
    pub ate_star: f64,
    pub gamma_star: f64,
    pub lambda: f64,
    pub ranges: CoefficientRanges,
    pub sigma_y: f64,
    pub sigma_w: f64,
    pub nco_case: NcoCase,
    /// U component removed by the NCO cases (0-based). The experiment
    /// presets drop the last one.
    pub dropped_component: usize,
    /// Sensitivity interval the calibration algorithms read.
    pub interval: IntervalKind,
    /// Frozen draws.
    pub beta: Vec<Vec<f64>>,   // p_u rows of length p_x
    pub theta1: Vec<f64>,      // p_x
    pub theta2: Vec<f64>,      // p_u
    pub theta3: Vec<Vec<f64>>, // p_w rows of length p_x
    pub theta4: Vec<Vec<f64>>, // p_w rows of length p_u
    pub delta: Vec<f64>,       // p_x
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_x == 0 || self.p_u == 0 || self.n_rct == 0 || self.n_obs == 0 {
            return Err(Error::invalid("dimensions and sample sizes must be positive"));
        }
        if self.gamma_star < 1.0 {
            return Err(Error::invalid("gamma_star must be >= 1"));
        }
        if !(0.0 < self.lambda && self.lambda <= 1.0) {
            return Err(Error::invalid("lambda must lie in (0, 1]"));
        }
        for r in [
            self.ranges.beta,
            self.ranges.theta1,
            self.ranges.theta2,
            self.ranges.theta3,
            self.ranges.theta4,
            self.ranges.delta,
        ] {
            if r.0 > r.1 {
                return Err(Error::invalid("coefficient range has low > high"));
            }
        }
        if self.nco_case != NcoCase::Ideal && self.p_u < 2 {
            return Err(Error::invalid("case1/case2 need p_u >= 2"));
        }
        if self.dropped_component >= self.p_u {
            return Err(Error::invalid("dropped_component out of range"));
        }
        let shapes_ok = self.beta.len() == self.p_u
            && self.beta.iter().all(|b| b.len() == self.p_x)
            && self.theta1.len() == self.p_x
            && self.theta2.len() == self.p_u
            && self.theta3.len() == self.p_w
            && self.theta3.iter().all(|t| t.len() == self.p_x)
            && self.theta4.len() == self.p_w
            && self.theta4.iter().all(|t| t.len() == self.p_u)
            && self.delta.len() == self.p_x;
        if !shapes_ok {
            return Err(Error::invalid("frozen coefficient shapes disagree with dimensions"));
        }
        Ok(())
    }

    /// Calibration grid for this experiment (wider when Γ* reaches 20).
    pub fn calibration_grid(&self) -> crate::bounds::GammaGrid {
        crate::bounds::GammaGrid::calibration_default(Some(self.gamma_star))
    }
}

struct Preset {
    p_x: usize,
    p_u: usize,
    n: (usize, usize),
    gamma_star: f64,
    lambda: f64,
    theta2: Range,
    theta4: Range,
    nco_case: NcoCase,
    interval: IntervalKind,
}

fn preset(id: u8) -> Result<Preset> {
    let mut p = Preset {
        p_x: 5,
        p_u: 2,
        n: (2000, 2000),
        gamma_star: 8.0,
        lambda: 1.0,
        theta2: (0.1, 0.2),
        theta4: (0.05, 0.1),
        nco_case: NcoCase::Ideal,
        interval: IntervalKind::Pei,
    };
    match id {
        1 => {}
        2 => {
            p.theta2 = (0.01, 0.02);
            p.theta4 = (0.01, 0.02);
        }
        3 => {
            p.theta2 = (0.5, 1.0);
            p.theta4 = (0.5, 1.0);
        }
        4 => {
            p.lambda = 0.85;
            p.theta2 = (0.01, 0.02);
            p.theta4 = (0.01, 0.02);
        }
        5 => {
            p.lambda = 0.85;
            p.theta2 = (0.7, 1.0);
            p.theta4 = (0.7, 1.0);
        }
        6 => {
            p.lambda = 0.2;
            p.theta2 = (0.7, 1.0);
            p.theta4 = (0.7, 1.0);
        }
        7 => p.gamma_star = 5.0,
        8 => p.gamma_star = 20.0,
        9 => p.n = (500, 500),
        10 => p.p_x = 10,
        11 => {
            p.p_u = 3;
            p.nco_case = NcoCase::Case1;
        }
        12 => {
            p.p_u = 3;
            p.nco_case = NcoCase::Case2;
        }
        13 => {
            p.p_u = 3;
            p.n = (200, 2000);
            p.lambda = 0.85;
            p.nco_case = NcoCase::Case1;
        }
        14 => p.interval = IntervalKind::Ci,
        _ => return Err(Error::invalid(format!("unknown experiment id {id} (expected 1..=14)"))),
    }
    Ok(p)
}

/// Experiment preset under the default base seed.
pub fn make_config(experiment_id: u8) -> Result<SimulationConfig> {
    make_config_with_seed(experiment_id, DEFAULT_BASE_SEED)
}

/// Experiment preset with frozen coefficients drawn from the stream
/// (base_seed, CONFIG, experiment_id).
pub fn make_config_with_seed(experiment_id: u8, base_seed: u64) -> Result<SimulationConfig> {
    let p = preset(experiment_id)?;
    let ranges = CoefficientRanges {
        beta: (1.5, 2.0),
        theta1: (0.1, 1.0),
        theta2: p.theta2,
        theta3: (0.1, 1.0),
        theta4: p.theta4,
        delta: (0.1, 0.5),
    };
    let p_w = 2;
    let mut rng = derive_rng(base_seed, &[stage::CONFIG, experiment_id as u64]);
    let mut draw_vec = |range: Range, len: usize| -> Vec<f64> {
        (0..len).map(|_| range.0 + rng.random::<f64>() * (range.1 - range.0)).collect()
    };
    let beta: Vec<Vec<f64>> = (0..p.p_u).map(|_| draw_vec(ranges.beta, p.p_x)).collect();
    let theta1 = draw_vec(ranges.theta1, p.p_x);
    let theta2 = draw_vec(ranges.theta2, p.p_u);
    let theta3: Vec<Vec<f64>> = (0..p_w).map(|_| draw_vec(ranges.theta3, p.p_x)).collect();
    let theta4: Vec<Vec<f64>> = (0..p_w).map(|_| draw_vec(ranges.theta4, p.p_u)).collect();
    let delta = draw_vec(ranges.delta, p.p_x);

    let config = SimulationConfig {
        experiment_id: Some(experiment_id),
        p_x: p.p_x,
        p_u: p.p_u,
        p_w,
        n_rct: p.n.0,
        n_obs: p.n.1,
        ate_star: 0.25,
        gamma_star: p.gamma_star,
        lambda: p.lambda,
        ranges,
        sigma_y: 0.1,
        sigma_w: 0.1,
        nco_case: p.nco_case,
        dropped_component: p.p_u - 1,
        interval: p.interval,
        beta,
        theta1,
        theta2,
        theta3,
        theta4,
        delta,
    };
    config.validate()?;
    Ok(config)
}
