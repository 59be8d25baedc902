//! Linear quantile regression by minimizing a smoothed (Huberized) check
//! loss with damped Newton steps, followed by an active-set polish.
//!
//! The exact check-loss minimizer sits at a vertex interpolating p + 1 data
//! points. Smoothing alone leaves an O(smoothing) gap to that vertex, so
//! after the smoothed solve we re-solve the interpolation through the rows
//! with the smallest residuals and keep whichever candidate has the lower
//! exact pinball loss.

use crate::error::{Error, Result};
use crate::nuisance::design::{cholesky_solve, DesignMatrix, LinearCoefficients};

#[derive(Debug, Clone)]
pub struct QuantileFit {
    pub coef: LinearCoefficients,
    /// Exact (unsmoothed) pinball loss at the returned coefficients.
    pub pinball_loss: f64,
}

/// Fits the tau-th conditional quantile of `y` on `x` plus an intercept.
pub fn fit_quantile_regression(x: &DesignMatrix, y: &[f64], tau: f64) -> Result<QuantileFit> {
    let (n, p) = (x.n_rows(), x.n_features());
    let d = p + 1;
    if !(0.0 < tau && tau < 1.0) {
        return Err(Error::invalid("tau must lie in (0, 1)"));
    }
    if y.len() != n {
        return Err(Error::invalid("outcome length mismatch"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite outcome"));
    }
    if n < p + 2 {
        return Err(Error::invalid("quantile regression needs n >= p + 2"));
    }

    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo == 0.0 {
        // Degenerate outcome: any tau-quantile plane is the constant itself.
        return Ok(QuantileFit { coef: LinearCoefficients { intercept: lo, weights: vec![0.0; p] }, pinball_loss: 0.0 });
    }

    let scale = iqr(y).max(1e-3 * (hi - lo));
    let mut beta = warm_start(x, y);
    // Continuation: the spec smoothing 1e-4 * IQR first, then tightened so
    // the smoothed optimum tracks the exact vertex.
    for stage in 0..4 {
        let h = 1e-4 * scale * 1e-2f64.powi(stage);
        beta = smoothed_newton(x, y, tau, h, beta);
    }
    let mut best = beta.clone();
    let mut best_loss = pinball_loss(x, y, tau, &best);

    // Active-set polish: interpolate d rows chosen among the smallest
    // absolute residuals; accept only improvements.
    for _round in 0..6 {
        let mut improved = false;
        let resid: Vec<f64> = (0..n).map(|i| y[i] - predict(x.row(i), &best)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| resid[a].abs().total_cmp(&resid[b].abs()).then(a.cmp(&b)));
        let pool: Vec<usize> = order.into_iter().take((d + 3).min(n)).collect();
        for subset in combinations(&pool, d) {
            if let Some(cand) = interpolate(x, y, &subset) {
                let loss = pinball_loss(x, y, tau, &cand);
                if loss < best_loss - 1e-15 * (1.0 + best_loss) {
                    best = cand;
                    best_loss = loss;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }

    let coef = LinearCoefficients { intercept: best[0], weights: best[1..].to_vec() };
    if !coef.is_finite() {
        return Err(Error::Numerical("quantile regression produced non-finite coefficients".into()));
    }
    Ok(QuantileFit { coef, pinball_loss: best_loss })
}

fn warm_start(x: &DesignMatrix, y: &[f64]) -> Vec<f64> {
    match crate::nuisance::linear::fit_least_squares(x, y) {
        Ok(fit) => {
            let mut beta = vec![fit.coef.intercept];
            beta.extend_from_slice(&fit.coef.weights);
            beta
        }
        Err(_) => vec![0.0; x.n_features() + 1],
    }
}

fn predict(row: &[f64], beta: &[f64]) -> f64 {
    beta[0] + row.iter().zip(&beta[1..]).map(|(v, b)| v * b).sum::<f64>()
}

/// Exact pinball loss sum_i rho_tau(y_i - x_i' beta).
pub fn pinball_loss(x: &DesignMatrix, y: &[f64], tau: f64, beta: &[f64]) -> f64 {
    (0..x.n_rows())
        .map(|i| {
            let r = y[i] - predict(x.row(i), beta);
            if r >= 0.0 {
                tau * r
            } else {
                (tau - 1.0) * r
            }
        })
        .sum()
}

fn smoothed_loss(x: &DesignMatrix, y: &[f64], tau: f64, h: f64, beta: &[f64]) -> f64 {
    (0..x.n_rows())
        .map(|i| {
            let r = y[i] - predict(x.row(i), beta);
            if r > h {
                tau * r
            } else if r < -h {
                (tau - 1.0) * r
            } else {
                r * r / (4.0 * h) + (tau - 0.5) * r + h / 4.0
            }
        })
        .sum()
}

fn smoothed_newton(x: &DesignMatrix, y: &[f64], tau: f64, h: f64, mut beta: Vec<f64>) -> Vec<f64> {
    let (n, p) = (x.n_rows(), x.n_features());
    let d = p + 1;
    let mut obj = smoothed_loss(x, y, tau, h, &beta);
    let grad_tol = 1e-12 * (n as f64) * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs())));

    for _ in 0..200 {
        let mut grad = vec![0.0f64; d];
        let mut hess = vec![0.0f64; d * d];
        let mut band = 0usize;
        for i in 0..n {
            let row = x.row(i);
            let r = y[i] - predict(row, &beta);
            let psi = if r > h {
                tau
            } else if r < -h {
                tau - 1.0
            } else {
                r / (2.0 * h) + (tau - 0.5)
            };
            grad[0] -= psi;
            for a in 0..p {
                grad[a + 1] -= psi * row[a];
            }
            if r.abs() <= h {
                band += 1;
                let w = 1.0 / (2.0 * h);
                hess[0] += w;
                for a in 0..p {
                    hess[a + 1] += w * row[a];
                    for b in a..p {
                        hess[(a + 1) * d + (b + 1)] += w * row[a] * row[b];
                    }
                }
            }
        }
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm <= grad_tol {
            break;
        }
        // Levenberg damping; heavier when the band is thin or empty.
        let diag_scale = (0..d).map(|j| hess[j * d + j]).fold(0.0f64, f64::max).max(1.0 / (2.0 * h));
        let damping = if band >= d { 1e-10 } else { 1e-4 };
        for j in 0..d {
            hess[j * d + j] += damping * diag_scale;
        }
        for a in 0..d {
            for b in (a + 1)..d {
                hess[b * d + a] = hess[a * d + b];
            }
        }
        let Some(step) = cholesky_solve(&mut hess, &grad.iter().map(|g| -g).collect::<Vec<_>>()) else {
            break;
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let cand_obj = smoothed_loss(x, y, tau, h, &cand);
            if cand_obj < obj - 1e-16 * (1.0 + obj.abs()) {
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
    beta
}

/// Solve the square interpolation system through the given rows. `None` when
/// the system is singular.
fn interpolate(x: &DesignMatrix, y: &[f64], rows: &[usize]) -> Option<Vec<f64>> {
    let d = rows.len();
    let mut a = vec![0.0f64; d * d];
    let mut b = vec![0.0f64; d];
    for (r, &i) in rows.iter().enumerate() {
        a[r * d] = 1.0;
        a[r * d + 1..r * d + d].copy_from_slice(x.row(i));
        b[r] = y[i];
    }
    solve_square(&mut a, &mut b, d)
}

/// Gaussian elimination with partial pivoting.
fn solve_square(a: &mut [f64], b: &mut [f64], d: usize) -> Option<Vec<f64>> {
    for col in 0..d {
        let pivot = (col..d).max_by(|&i, &j| a[i * d + col].abs().total_cmp(&a[j * d + col].abs()))?;
        if a[pivot * d + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for c in 0..d {
                a.swap(col * d + c, pivot * d + c);
            }
            b.swap(col, pivot);
        }
        for r in (col + 1)..d {
            let f = a[r * d + col] / a[col * d + col];
            for c in col..d {
                a[r * d + c] -= f * a[col * d + c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0f64; d];
    for r in (0..d).rev() {
        let mut v = b[r];
        for c in (r + 1)..d {
            v -= a[r * d + c] * x[c];
        }
        x[r] = v / a[r * d + r];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// All size-k combinations of `pool`, in lexicographic order.
fn combinations(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > pool.len() {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| pool[i]).collect());
        // Advance the combination indices.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + pool.len() - k {
                break;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn iqr(y: &[f64]) -> f64 {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let q = |frac: f64| -> f64 {
        let pos = frac * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    };
    q(0.75) - q(0.25)
}
