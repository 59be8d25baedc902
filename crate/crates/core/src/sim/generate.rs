//! Paired RCT/observational data generation.
//!
//! Observed confounders are uniform boxes (the RCT box strictly inside the
//! observational one). Unobserved confounders are Gaussian given X with a
//! correlation controlled by lambda, and the observational treatment draws
//! from a two-point true propensity built so that (a) it marginalizes to
//! the nominal logistic propensity and (b) its odds ratio against the
//! nominal score is exactly 1/Γ* or Γ* for every unit.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::Result;
use crate::nuisance::design::logistic;
use crate::rng::{derive_rng, stage};
use crate::stats::pearson;

use super::config::{NcoCase, SimulationConfig};

const ARM_RCT: u64 = 0;
const ARM_OBS: u64 = 1;
// Per-purpose substreams, so changing lambda or the NCO case never shifts
// the draws of other quantities.
const STREAM_X: u64 = 1;
const STREAM_U: u64 = 2;
const STREAM_T: u64 = 3;
const STREAM_EPS_Y: u64 = 4;
const STREAM_EPS_W: u64 = 5;

/// Oracle-only columns, kept out of `Dataset` so calibration code cannot
/// read them.
#[derive(Debug, Clone, Serialize)]
pub struct HiddenTable {
    /// U components, `p_u` columns of length n.
    pub u: Vec<Vec<f64>>,
    pub u_bar: Vec<f64>,
    /// Nominal propensity e(X) (1/2 in the RCT arm).
    pub e_x: Vec<f64>,
    /// True propensity e(X, U).
    pub e_xu: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

impl HiddenTable {
    pub fn to_csv_string(&self) -> String {
        use std::fmt::Write as _;
        let p_u = self.u.len();
        let mut out = String::new();
        for j in 1..=p_u {
            let _ = write!(out, "u{},", j);
        }
        out.push_str("u_bar,e_x,e_xu,y0,y1\n");
        for i in 0..self.u_bar.len() {
            for col in &self.u {
                let _ = write!(out, "{},", col[i]);
            }
            let _ = writeln!(out, "{},{},{},{},{}", self.u_bar[i], self.e_x[i], self.e_xu[i], self.y0[i], self.y1[i]);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CorrelationBand {
    Low,
    Moderate,
    High,
}

/// Band edges at 0.3 and 0.7 (lower bounds closed).
pub fn correlation_band(rho: f64) -> CorrelationBand {
    let a = rho.abs();
    if a < 0.3 {
        CorrelationBand::Low
    } else if a < 0.7 {
        CorrelationBand::Moderate
    } else {
        CorrelationBand::High
    }
}

/// Empirical Pearson diagnostics of one generated pair (observational arm).
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    /// max over (X coordinate, U component) of |corr|.
    pub rho_xu: f64,
    /// |corr(U_bar, Y(0))|.
    pub rho_u_y0: f64,
    /// max over NCO columns of |corr(U_bar, W_k)|.
    pub rho_u_w: f64,
    pub band_xu: CorrelationBand,
    pub band_u_y0: CorrelationBand,
    pub band_u_w: CorrelationBand,
}

#[derive(Debug, Clone)]
pub struct GeneratedPair {
    pub rct: Dataset,
    pub obs: Dataset,
    pub rct_hidden: HiddenTable,
    pub obs_hidden: HiddenTable,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimArm {
    Rct,
    Obs,
}

/// Confounder draws for one arm: X uniform on the arm's box, U Gaussian
/// given X, U_bar their mean.
pub fn sample_confounders(
    config: &SimulationConfig,
    n: usize,
    arm: SimArm,
    seed: u64,
) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let arm_tag = match arm {
        SimArm::Rct => ARM_RCT,
        SimArm::Obs => ARM_OBS,
    };
    let half_width = match arm {
        SimArm::Rct => 0.9,
        SimArm::Obs => 1.0,
    };
    let mut x_rng = derive_rng(seed, &[stage::GENERATE, arm_tag, STREAM_X]);
    let mut u_rng = derive_rng(seed, &[stage::GENERATE, arm_tag, STREAM_U]);

    let mut x = Vec::with_capacity(n * config.p_x);
    for _ in 0..n * config.p_x {
        x.push((x_rng.random::<f64>() * 2.0 - 1.0) * half_width);
    }
    let mut u: Vec<Vec<f64>> = vec![Vec::with_capacity(n); config.p_u];
    let mut u_bar = Vec::with_capacity(n);
    for i in 0..n {
        let row = &x[i * config.p_x..(i + 1) * config.p_x];
        let mut sum = 0.0;
        for j in 0..config.p_u {
            let g: f64 = u_rng.sample(StandardNormal);
            let mean: f64 = config.beta[j].iter().zip(row).map(|(b, xv)| b * xv).sum::<f64>() * (1.0 - config.lambda);
            let uj = config.lambda * g + mean;
            u[j].push(uj);
            sum += uj;
        }
        u_bar.push(sum / config.p_u as f64);
    }
    (x, u, u_bar)
}

/// Nominal and true observational propensity for one unit.
///
/// The nominal score is logistic(delta' x + 1/2). The true score equals
/// l(x) above a threshold t(x) on U_bar and u(x) below it, where l and u
/// sit at odds ratio 1/Γ* and Γ* from the nominal score, and t(x) is the
/// Gaussian quantile that makes the mixture marginalize back to e(x).
pub fn true_propensity_obs_row(config: &SimulationConfig, x_row: &[f64], u_bar: f64) -> (f64, f64) {
    let e = logistic(config.delta.iter().zip(x_row).map(|(d, xv)| d * xv).sum::<f64>() + 0.5);
    if config.gamma_star == 1.0 {
        return (e, e);
    }
    let l = e / (e + (1.0 - e) * config.gamma_star);
    let u = e / (e + (1.0 - e) / config.gamma_star);
    let q = (e - l) / (u - l);
    let mean: f64 = (0..config.p_u)
        .map(|j| config.beta[j].iter().zip(x_row).map(|(b, xv)| b * xv).sum::<f64>())
        .sum::<f64>()
        * (1.0 - config.lambda)
        / config.p_u as f64;
    let sd = config.lambda / (config.p_u as f64).sqrt();
    let threshold = Normal::new(mean, sd).expect("sd > 0").inverse_cdf(q);
    let e_xu = if u_bar > threshold { l } else { u };
    (e, e_xu)
}

/// Vectorized form of [`true_propensity_obs_row`].
pub fn true_propensity_obs(
    config: &SimulationConfig,
    x: &[f64],
    u_bar: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = u_bar.len();
    let mut e_x = Vec::with_capacity(n);
    let mut e_xu = Vec::with_capacity(n);
    for i in 0..n {
        let (e, exu) = true_propensity_obs_row(config, &x[i * config.p_x..(i + 1) * config.p_x], u_bar[i]);
        e_x.push(e);
        e_xu.push(exu);
    }
    (e_x, e_xu)
}

fn generate_arm(config: &SimulationConfig, arm: SimArm, seed: u64) -> Result<(Dataset, HiddenTable)> {
    let arm_tag = match arm {
        SimArm::Rct => ARM_RCT,
        SimArm::Obs => ARM_OBS,
    };
    let n = match arm {
        SimArm::Rct => config.n_rct,
        SimArm::Obs => config.n_obs,
    };
    let (x, u, u_bar) = sample_confounders(config, n, arm, seed);

    let (e_x, e_xu) = match arm {
        SimArm::Rct => (vec![0.5; n], vec![0.5; n]),
        SimArm::Obs => true_propensity_obs(config, &x, &u_bar),
    };

    let mut t_rng = derive_rng(seed, &[stage::GENERATE, arm_tag, STREAM_T]);
    let t: Vec<u8> = (0..n).map(|i| (t_rng.random::<f64>() < e_xu[i]) as u8).collect();

    // Case 1 removes one U component from the outcome model; case 2 removes
    // one from every NCO model. The structural outcome model is shared by
    // both arms, so the CATE stays transportable.
    let mut theta2 = config.theta2.clone();
    if config.nco_case == NcoCase::Case1 {
        theta2[config.dropped_component] = 0.0;
    }
    let mut eps_rng = derive_rng(seed, &[stage::GENERATE, arm_tag, STREAM_EPS_Y]);
    let mut y0 = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row = &x[i * config.p_x..(i + 1) * config.p_x];
        let x_part: f64 = config.theta1.iter().zip(row).map(|(t1, xv)| t1 * xv).sum();
        let u_part: f64 = (0..config.p_u).map(|j| theta2[j] * u[j][i]).sum();
        let eps: f64 = eps_rng.sample::<f64, _>(StandardNormal) * config.sigma_y;
        let y0i = -x_part + u_part - config.ate_star / 2.0 + eps;
        let y1i = x_part + u_part + config.ate_star / 2.0 + eps;
        y0.push(y0i);
        y1.push(y1i);
        y.push(if t[i] == 1 { y1i } else { y0i });
    }

    let w = match arm {
        SimArm::Rct => Vec::new(),
        SimArm::Obs => {
            let mut theta4 = config.theta4.clone();
            if config.nco_case == NcoCase::Case2 {
                for row in &mut theta4 {
                    row[config.dropped_component] = 0.0;
                }
            }
            let mut w_rng = derive_rng(seed, &[stage::GENERATE, arm_tag, STREAM_EPS_W]);
            let mut w: Vec<Vec<f64>> = vec![Vec::with_capacity(n); config.p_w];
            for i in 0..n {
                let row = &x[i * config.p_x..(i + 1) * config.p_x];
                for k in 0..config.p_w {
                    let x_part: f64 = config.theta3[k].iter().zip(row).map(|(t3, xv)| t3 * xv).sum();
                    let u_part: f64 = (0..config.p_u).map(|j| theta4[k][j] * u[j][i]).sum();
                    let eps: f64 = w_rng.sample::<f64, _>(StandardNormal) * config.sigma_w;
                    w[k].push(x_part + u_part + eps);
                }
            }
            w
        }
    };

    let dataset = Dataset::new(x, config.p_x, t, y, w)?;
    Ok((dataset, HiddenTable { u, u_bar, e_x, e_xu, y0, y1 }))
}

/// Paired RCT and observational samples plus oracle side-tables and
/// correlation diagnostics.
pub fn sample_pair(config: &SimulationConfig, seed: u64) -> Result<GeneratedPair> {
    config.validate()?;
    let (rct, rct_hidden) = generate_arm(config, SimArm::Rct, seed)?;
    let (obs, obs_hidden) = generate_arm(config, SimArm::Obs, seed)?;
    let diagnostics = diagnostics(config, &obs, &obs_hidden);
    Ok(GeneratedPair { rct, obs, rct_hidden, obs_hidden, diagnostics })
}

/// Empirical Pearson correlations on the observational arm.
pub fn diagnostics(config: &SimulationConfig, obs: &Dataset, hidden: &HiddenTable) -> Diagnostics {
    let n = obs.n_rows();
    let mut rho_xu = 0.0f64;
    for j in 0..config.p_x {
        let col: Vec<f64> = (0..n).map(|i| obs.row(i)[j]).collect();
        for u_col in &hidden.u {
            rho_xu = rho_xu.max(pearson(&col, u_col).abs());
        }
    }
    let rho_u_y0 = pearson(&hidden.u_bar, &hidden.y0).abs();
    let mut rho_u_w = 0.0f64;
    for k in 0..obs.n_ncos() {
        rho_u_w = rho_u_w.max(pearson(&hidden.u_bar, obs.nco(k)).abs());
    }
    Diagnostics {
        rho_xu,
        rho_u_y0,
        rho_u_w,
        band_xu: correlation_band(rho_xu),
        band_u_y0: correlation_band(rho_u_y0),
        band_u_w: correlation_band(rho_u_w),
    }
}
