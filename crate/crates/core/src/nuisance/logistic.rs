//! Logistic regression via Newton iterations (IRLS), with a ridge fallback
//! when the data are separable or the information matrix is singular.

use crate::error::{Error, Result};
use crate::nuisance::design::{cholesky_solve, logistic, spd_inverse, DesignMatrix, LinearCoefficients};

const GRADIENT_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
/// Ridge penalty applied to the weights (not the intercept) on fallback.
const RIDGE_LAMBDA: f64 = 1e-4;
/// Probability clip used to detect saturation.
const CLIP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub coef: LinearCoefficients,
    /// The plain fit diverged or saturated and the reported coefficients come
    /// from a ridge-penalized refit.
    pub ridge_fallback: bool,
    /// The (possibly penalized) gradient tolerance was reached.
    pub converged: bool,
    /// Standard errors (intercept first) from the inverse information matrix;
    /// empty when the information matrix was singular at the solution.
    pub std_errors: Vec<f64>,
}

/// Maximum-likelihood logistic fit of a binary response on `x` plus an
/// intercept.
pub fn fit_logistic(x: &DesignMatrix, y: &[u8]) -> Result<LogisticFit> {
    let (n, p) = (x.n_rows(), x.n_features());
    if y.len() != n {
        return Err(Error::invalid("response length mismatch"));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::invalid("logistic response must be 0/1"));
    }
    if n < p + 1 {
        return Err(Error::invalid("logistic fit needs n >= p + 1"));
    }

    match irls(x, y, 0.0) {
        Some(fit) if fit.converged && !saturated(x, &fit.coef) => Ok(fit),
        _ => {
            let mut fit = irls(x, y, RIDGE_LAMBDA)
                .ok_or_else(|| Error::Numerical("logistic ridge refit failed".into()))?;
            fit.ridge_fallback = true;
            Ok(fit)
        }
    }
}

/// Separation symptom: more than 10% of fitted probabilities pinned to the
/// clip boundary.
fn saturated(x: &DesignMatrix, coef: &LinearCoefficients) -> bool {
    let n = x.n_rows();
    let mut boundary = 0usize;
    for i in 0..n {
        let p = coef.predict_probability(x.row(i));
        if p <= CLIP || p >= 1.0 - CLIP {
            boundary += 1;
        }
    }
    boundary * 10 > n
}

fn irls(x: &DesignMatrix, y: &[u8], lambda: f64) -> Option<LogisticFit> {
    let (n, p) = (x.n_rows(), x.n_features());
    let d = p + 1;
    let mut beta = vec![0.0f64; d];
    let mut converged = false;

    let objective = |beta: &[f64]| -> f64 {
        // Penalized log-likelihood; intercept unpenalized.
        let mut ll = 0.0;
        for i in 0..n {
            let z = eta(x, beta, i);
            // log sigma(z) if y=1 else log(1 - sigma(z)), written stably.
            let t = if y[i] == 1 { z } else { -z };
            ll += if t > 0.0 { -(-t).exp().ln_1p() } else { t - t.exp().ln_1p() };
        }
        ll - 0.5 * lambda * beta[1..].iter().map(|b| b * b).sum::<f64>()
    };

    let mut obj = objective(&beta);
    for _ in 0..MAX_ITER {
        let mut grad = vec![0.0f64; d];
        let mut info = vec![0.0f64; d * d];
        for i in 0..n {
            let z = eta(x, &beta, i);
            let pi = logistic(z);
            let resid = y[i] as f64 - pi;
            let w = (pi * (1.0 - pi)).max(1e-12);
            let row = x.row(i);
            grad[0] += resid;
            info[0] += w;
            for a in 0..p {
                grad[a + 1] += resid * row[a];
                info[a + 1] += w * row[a];
                let wa = w * row[a];
                for b in a..p {
                    info[(a + 1) * d + (b + 1)] += wa * row[b];
                }
            }
        }
        for a in 1..d {
            grad[a] -= lambda * beta[a];
            info[a * d + a] += lambda;
        }
        for a in 0..d {
            for b in (a + 1)..d {
                info[b * d + a] = info[a * d + b];
            }
        }

        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < GRADIENT_TOL {
            converged = true;
            break;
        }

        let step = cholesky_solve(&mut info.clone(), &grad)?;
        // Step halving keeps the penalized likelihood non-decreasing.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let cand_obj = objective(&cand);
            if cand_obj.is_finite() && cand_obj >= obj - 1e-12 {
                beta = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let coef = LinearCoefficients { intercept: beta[0], weights: beta[1..].to_vec() };
    if !coef.is_finite() {
        return None;
    }
    let std_errors = information_matrix(x, &beta, lambda)
        .and_then(|info| spd_inverse(&info, d))
        .map(|inv| (0..d).map(|j| inv[j * d + j].max(0.0).sqrt()).collect())
        .unwrap_or_default();
    Some(LogisticFit { coef, ridge_fallback: false, converged, std_errors })
}

fn eta(x: &DesignMatrix, beta: &[f64], i: usize) -> f64 {
    beta[0] + x.row(i).iter().zip(&beta[1..]).map(|(v, b)| v * b).sum::<f64>()
}

fn information_matrix(x: &DesignMatrix, beta: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let (n, p) = (x.n_rows(), x.n_features());
    let d = p + 1;
    let mut info = vec![0.0f64; d * d];
    for i in 0..n {
        let pi = logistic(eta(x, beta, i));
        let w = pi * (1.0 - pi);
        let row = x.row(i);
        info[0] += w;
        for a in 0..p {
            info[a + 1] += w * row[a];
            for b in a..p {
                info[(a + 1) * d + (b + 1)] += w * row[a] * row[b];
            }
        }
    }
    for a in 1..d {
        info[a * d + a] += lambda;
    }
    for a in 0..d {
        for b in (a + 1)..d {
            info[b * d + a] = info[a * d + b];
        }
    }
    Some(info)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn symmetric_data_gives_zero_coefficients() {
        let x = DesignMatrix::new(vec![0.0; 10], 1).unwrap();
        let y = vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let fit = fit_logistic(&x, &y).unwrap();
        assert!(fit.coef.intercept.abs() < 1e-8);
        assert!(fit.coef.weights[0].abs() < 1e-8);
        assert!(fit.converged);
        assert!(!fit.ridge_fallback);
    }

    #[test]
    fn separated_data_triggers_ridge_fallback() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 - 9.5).collect();
        let y: Vec<u8> = xs.iter().map(|&v| (v > 0.0) as u8).collect();
        let x = DesignMatrix::new(xs, 1).unwrap();
        let fit = fit_logistic(&x, &y).unwrap();
        assert!(fit.ridge_fallback);
        assert!(fit.coef.is_finite());
    }

    // Independent oracle: plain gradient ascent with backtracking on the
    // unpenalized log-likelihood, run to a 1e-10 gradient norm.
    fn gradient_ascent_oracle(x: &DesignMatrix, y: &[u8]) -> Vec<f64> {
        let (n, p) = (x.n_rows(), x.n_features());
        let d = p + 1;
        let mut beta = vec![0.0f64; d];
        let ll = |beta: &[f64]| -> f64 {
            (0..n)
                .map(|i| {
                    let z = beta[0]
                        + x.row(i).iter().zip(&beta[1..]).map(|(v, b)| v * b).sum::<f64>();
                    let t = if y[i] == 1 { z } else { -z };
                    if t > 0.0 {
                        -(-t).exp().ln_1p()
                    } else {
                        t - t.exp().ln_1p()
                    }
                })
                .sum()
        };
        for _ in 0..200_000 {
            let mut grad = vec![0.0f64; d];
            for i in 0..n {
                let z = beta[0] + x.row(i).iter().zip(&beta[1..]).map(|(v, b)| v * b).sum::<f64>();
                let resid = y[i] as f64 - logistic(z);
                grad[0] += resid;
                for a in 0..p {
                    grad[a + 1] += resid * x.row(i)[a];
                }
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm < 1e-10 {
                break;
            }
            let base = ll(&beta);
            let mut step = 1.0;
            loop {
                let cand: Vec<f64> =
                    beta.iter().zip(&grad).map(|(b, g)| b + step * g / (n as f64)).collect();
                if ll(&cand) > base {
                    beta = cand;
                    break;
                }
                step *= 0.5;
                if step < 1e-18 {
                    return beta;
                }
            }
        }
        beta
    }

    #[test]
    fn recovers_true_model_and_matches_gradient_oracle() {
        let mut rng = crate::rng::derive_rng(11, &[200]);
        let n = 200;
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let y: Vec<u8> = xs
            .iter()
            .map(|&v| (rng.random::<f64>() < logistic(0.5 + 0.3 * v)) as u8)
            .collect();
        let x = DesignMatrix::new(xs, 1).unwrap();
        let fit = fit_logistic(&x, &y).unwrap();
        assert!(fit.converged && !fit.ridge_fallback);
        assert!((fit.coef.intercept - 0.5).abs() < 0.3, "intercept {}", fit.coef.intercept);

        let oracle = gradient_ascent_oracle(&x, &y);
        assert!((fit.coef.intercept - oracle[0]).abs() < 1e-6);
        assert!((fit.coef.weights[0] - oracle[1]).abs() < 1e-6);
    }

    #[test]
    fn gradient_norm_below_tolerance_at_solution() {
        let mut rng = crate::rng::derive_rng(12, &[201]);
        let n = 300;
        let p = 3;
        let data: Vec<f64> = (0..n * p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let x = DesignMatrix::new(data, p).unwrap();
        let y: Vec<u8> = (0..n)
            .map(|i| {
                let z = 0.2 + x.row(i).iter().sum::<f64>() * 0.4;
                (rng.random::<f64>() < logistic(z)) as u8
            })
            .collect();
        let fit = fit_logistic(&x, &y).unwrap();
        assert!(fit.converged && !fit.ridge_fallback);
        // Recompute the gradient independently of the solver loop.
        let mut grad = vec![0.0f64; p + 1];
        for i in 0..n {
            let resid = y[i] as f64 - fit.coef.predict_probability(x.row(i));
            grad[0] += resid;
            for a in 0..p {
                grad[a + 1] += resid * x.row(i)[a];
            }
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-8, "gradient norm {norm}");
        assert_eq!(fit.std_errors.len(), p + 1);
    }

    #[test]
    fn duplicated_columns_fall_back_and_stay_finite() {
        let mut rng = crate::rng::derive_rng(13, &[202]);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..60 {
            let v: f64 = rng.random::<f64>() * 2.0 - 1.0;
            data.extend_from_slice(&[v, v]);
            y.push((rng.random::<f64>() < logistic(v)) as u8);
        }
        let x = DesignMatrix::new(data, 2).unwrap();
        let fit = fit_logistic(&x, &y).unwrap();
        assert!(fit.coef.is_finite());
    }
}
