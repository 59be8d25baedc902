//! Design matrix and fitted linear coefficients.
//!
//! Models prepend a constant column internally, so `DesignMatrix` holds raw
//! features only and `LinearCoefficients` keeps the intercept separate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major feature matrix, `n x p`, no intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(data: Vec<f64>, p: usize) -> Result<Self> {
        if p == 0 || data.is_empty() || data.len() % p != 0 {
            return Err(Error::invalid("design matrix shape mismatch"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite entry in design matrix"));
        }
        Ok(DesignMatrix { n: data.len() / p, p, data })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    /// Copy of the rows at `idx`, keeping feature count.
    pub fn select_rows(&self, idx: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        DesignMatrix { n: idx.len(), p: self.p, data }
    }

    /// Copy with the feature columns in `keep` (in the given order).
    pub fn select_columns(&self, keep: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(self.n * keep.len());
        for i in 0..self.n {
            let row = self.row(i);
            for &j in keep {
                data.push(row[j]);
            }
        }
        DesignMatrix { n: self.n, p: keep.len(), data }
    }
}

/// Intercept plus one weight per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCoefficients {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl LinearCoefficients {
    pub fn zeros(p: usize) -> Self {
        LinearCoefficients { intercept: 0.0, weights: vec![0.0; p] }
    }

    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.weights.len());
        self.intercept + row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>()
    }

    pub fn predict_probability(&self, row: &[f64]) -> f64 {
        logistic(self.linear_predictor(row))
    }

    pub fn is_finite(&self) -> bool {
        self.intercept.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Solve the symmetric positive-definite system `a * x = b` in place via
/// Cholesky. `a` is `d x d` row-major and gets overwritten by its factor.
/// Returns `None` when a pivot is not strictly positive (rank deficiency).
pub(crate) fn cholesky_solve(a: &mut [f64], b: &[f64]) -> Option<Vec<f64>> {
    let d = b.len();
    debug_assert_eq!(a.len(), d * d);
    // Factor: a = L L^T, L stored in the lower triangle.
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return None;
        }
        let diag = diag.sqrt();
        a[j * d + j] = diag;
        for i in (j + 1)..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = v / diag;
        }
    }
    // Forward then backward substitution.
    let mut x = b.to_vec();
    for i in 0..d {
        for k in 0..i {
            x[i] -= a[i * d + k] * x[k];
        }
        x[i] /= a[i * d + i];
    }
    for i in (0..d).rev() {
        for k in (i + 1)..d {
            x[i] -= a[k * d + i] * x[k];
        }
        x[i] /= a[i * d + i];
    }
    Some(x)
}

/// Invert a symmetric positive-definite matrix via Cholesky (used for
/// logistic standard errors). Returns row-major `d x d`.
pub(crate) fn spd_inverse(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; d * d];
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        let col = cholesky_solve(&mut a.to_vec(), &e)?;
        for i in 0..d {
            inv[i * d + j] = col[i];
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_small_system() {
        // a = [[4,2],[2,3]], b = [10, 9] -> x = [1.5, 2]
        let mut a = vec![4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&mut a, &[10.0, 9.0]).unwrap();
        assert!((x[0] - 1.5).abs() < 1e-12);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_singular() {
        let mut a = vec![1.0, 1.0, 1.0, 1.0];
        assert!(cholesky_solve(&mut a, &[1.0, 1.0]).is_none());
    }

    #[test]
    fn logistic_is_symmetric_and_bounded() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(3.0) + logistic(-3.0) - 1.0).abs() < 1e-15);
        assert!(logistic(800.0) <= 1.0 && logistic(-800.0) >= 0.0);
    }

    #[test]
    fn column_selection_keeps_order() {
        let m = DesignMatrix::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3).unwrap();
        let s = m.select_columns(&[2, 0]);
        assert_eq!(s.row(0), &[3.0, 1.0]);
        assert_eq!(s.row(1), &[6.0, 4.0]);
    }
}
