//! Ordinary least squares with a ridge fallback for rank-deficient designs.

use crate::error::{Error, Result};
use crate::nuisance::design::{cholesky_solve, DesignMatrix, LinearCoefficients};

#[derive(Debug, Clone)]
pub struct LinearFit {
    pub coef: LinearCoefficients,
    /// Set when the normal equations were singular and a small ridge was
    /// added to make them solvable.
    pub ridge_fallback: bool,
}

/// Minimizes the residual sum of squares of `y` on `x` plus an intercept.
pub fn fit_least_squares(x: &DesignMatrix, y: &[f64]) -> Result<LinearFit> {
    let (n, p) = (x.n_rows(), x.n_features());
    let d = p + 1;
    if y.len() != n {
        return Err(Error::invalid("outcome length mismatch"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite outcome"));
    }
    if n < d {
        return Err(Error::invalid("least squares needs n >= p + 1"));
    }

    let (gram, xty) = normal_equations(x, y, |_| 1.0);
    let mut ridge_fallback = false;
    let mut solution = cholesky_solve(&mut gram.clone(), &xty);
    if solution.is_none() {
        ridge_fallback = true;
        let mut ridged = gram.clone();
        let scale = (0..d).map(|j| gram[j * d + j]).fold(0.0f64, f64::max).max(1.0);
        for j in 0..d {
            ridged[j * d + j] += 1e-6 * scale;
        }
        solution = cholesky_solve(&mut ridged, &xty);
    }
    let mut beta = solution.ok_or_else(|| Error::Numerical("least squares system unsolvable".into()))?;

    if !ridge_fallback {
        // One step of iterative refinement keeps the normal-equation
        // residual far below the 1e-8 * ||y||_inf contract.
        let mut resid = xty.clone();
        for (j, r) in resid.iter_mut().enumerate() {
            for k in 0..d {
                *r -= gram[j * d + k] * beta[k];
            }
        }
        if let Some(delta) = cholesky_solve(&mut gram.clone(), &resid) {
            for (b, dlt) in beta.iter_mut().zip(&delta) {
                *b += dlt;
            }
        }
    }

    let coef = LinearCoefficients { intercept: beta[0], weights: beta[1..].to_vec() };
    if !coef.is_finite() {
        return Err(Error::Numerical("least squares produced non-finite coefficients".into()));
    }
    Ok(LinearFit { coef, ridge_fallback })
}

/// Weighted gram matrix and right-hand side with an intercept column first.
pub(crate) fn normal_equations(
    x: &DesignMatrix,
    y: &[f64],
    weight: impl Fn(usize) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let (n, p) = (x.n_rows(), x.n_features());
    let d = p + 1;
    let mut gram = vec![0.0; d * d];
    let mut xty = vec![0.0; d];
    for i in 0..n {
        let wi = weight(i);
        if wi == 0.0 {
            continue;
        }
        let row = x.row(i);
        gram[0] += wi;
        for a in 0..p {
            gram[a + 1] += wi * row[a];
        }
        for a in 0..p {
            let wa = wi * row[a];
            for b in a..p {
                gram[(a + 1) * d + (b + 1)] += wa * row[b];
            }
        }
        xty[0] += wi * y[i];
        for a in 0..p {
            xty[a + 1] += wi * row[a] * y[i];
        }
    }
    // Mirror the upper triangle (column 0 of each row mirrors row 0).
    for a in 0..d {
        for b in (a + 1)..d {
            gram[b * d + a] = gram[a * d + b];
        }
    }
    (gram, xty)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_outcome_gives_intercept_only() {
        let x = DesignMatrix::new((0..20).map(|i| i as f64).collect(), 1).unwrap();
        let fit = fit_least_squares(&x, &vec![3.0; 20]).unwrap();
        assert!((fit.coef.intercept - 3.0).abs() < 1e-12);
        assert!(fit.coef.weights[0].abs() < 1e-12);
        assert!(!fit.ridge_fallback);
    }

    #[test]
    fn exact_line_is_interpolated() {
        let xs: Vec<f64> = vec![-2.0, -1.0, 0.5, 1.0, 3.0];
        let y: Vec<f64> = xs.iter().map(|v| 2.0 * v + 1.0).collect();
        let x = DesignMatrix::new(xs, 1).unwrap();
        let fit = fit_least_squares(&x, &y).unwrap();
        assert!((fit.coef.intercept - 1.0).abs() < 1e-10);
        assert!((fit.coef.weights[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn duplicated_column_falls_back_to_ridge() {
        let mut data = Vec::new();
        for i in 0..10 {
            let v = i as f64;
            data.extend_from_slice(&[v, v]);
        }
        let x = DesignMatrix::new(data, 2).unwrap();
        let y: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        let fit = fit_least_squares(&x, &y).unwrap();
        assert!(fit.ridge_fallback);
        assert!(fit.coef.is_finite());
    }

    // Independent oracle: pseudo-inverse of the augmented design via
    // Gauss-Jordan inversion of the gram matrix, computed without touching
    // the Cholesky path used by the implementation.
    fn pseudo_inverse_oracle(x: &DesignMatrix, y: &[f64]) -> Vec<f64> {
        let (n, p) = (x.n_rows(), x.n_features());
        let d = p + 1;
        let aug = |i: usize, j: usize| -> f64 {
            if j == 0 {
                1.0
            } else {
                x.row(i)[j - 1]
            }
        };
        let mut a = vec![0.0; d * d];
        let mut b = vec![0.0; d];
        for i in 0..n {
            for r in 0..d {
                b[r] += aug(i, r) * y[i];
                for c in 0..d {
                    a[r * d + c] += aug(i, r) * aug(i, c);
                }
            }
        }
        // Gauss-Jordan with partial pivoting on [A | b].
        let mut rows: Vec<Vec<f64>> = (0..d)
            .map(|r| {
                let mut row: Vec<f64> = a[r * d..(r + 1) * d].to_vec();
                row.push(b[r]);
                row
            })
            .collect();
        for col in 0..d {
            let pivot = (col..d).max_by(|&i, &j| rows[i][col].abs().total_cmp(&rows[j][col].abs())).unwrap();
            rows.swap(col, pivot);
            let pv = rows[col][col];
            assert!(pv.abs() > 1e-12, "oracle hit a singular system");
            for c in col..=d {
                rows[col][c] /= pv;
            }
            for r in 0..d {
                if r != col {
                    let f = rows[r][col];
                    for c in col..=d {
                        rows[r][c] -= f * rows[col][c];
                    }
                }
            }
        }
        rows.iter().map(|r| r[d]).collect()
    }

    #[test]
    fn matches_pseudo_inverse_oracle_on_random_instances() {
        use rand::Rng;
        let mut rng = crate::rng::derive_rng(7, &[100]);
        for _ in 0..50 {
            let n = 20 + (rng.random::<u32>() % 81) as usize;
            let p = 1 + (rng.random::<u32>() % 5) as usize;
            let data: Vec<f64> = (0..n * p).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let x = DesignMatrix::new(data, p).unwrap();
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect();
            let fit = fit_least_squares(&x, &y).unwrap();
            let oracle = pseudo_inverse_oracle(&x, &y);
            assert!((fit.coef.intercept - oracle[0]).abs() < 1e-8);
            for (w, o) in fit.coef.weights.iter().zip(&oracle[1..]) {
                assert!((w - o).abs() < 1e-8, "coefficient off: {w} vs {o}");
            }
        }
    }

    #[test]
    fn residual_orthogonality_holds() {
        use rand::Rng;
        let mut rng = crate::rng::derive_rng(8, &[101]);
        let n = 100;
        let p = 3;
        let data: Vec<f64> = (0..n * p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let x = DesignMatrix::new(data, p).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
        let fit = fit_least_squares(&x, &y).unwrap();
        let y_inf = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut grad_inf = 0.0f64;
        for j in 0..=p {
            let mut g = 0.0;
            for i in 0..n {
                let r = y[i] - fit.coef.linear_predictor(x.row(i));
                g += r * if j == 0 { 1.0 } else { x.row(i)[j - 1] };
            }
            grad_inf = grad_inf.max(g.abs());
        }
        assert!(grad_inf < 1e-8 * y_inf, "orthogonality residual {grad_inf}");
    }
}
