//! Critical confounding strength: the smallest grid Γ whose sensitivity
//! interval contains a target value.

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::curve::{BoundsCurve, IntervalKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CriticalValue {
    /// First grid Γ whose interval contains the target.
    AtGamma(f64),
    /// No grid interval contains the target; by convention the critical
    /// value is +infinity, reported as "greater than the grid maximum".
    BeyondGrid { grid_max: f64 },
}

impl CriticalValue {
    /// Numeric stand-in: the grid maximum when the scan never contained the
    /// target (grid search cannot certify beyond its range).
    pub fn value_or_grid_max(self) -> f64 {
        match self {
            CriticalValue::AtGamma(g) => g,
            CriticalValue::BeyondGrid { grid_max } => grid_max,
        }
    }

    pub fn is_beyond_grid(self) -> bool {
        matches!(self, CriticalValue::BeyondGrid { .. })
    }
}

/// Scan the curve in grid order and return the first Γ whose selected
/// interval (PEI or CI) contains `target`.
pub fn critical_value(curve: &BoundsCurve, target: f64, kind: IntervalKind) -> Result<CriticalValue> {
    for (i, &gamma) in curve.grid.values().iter().enumerate() {
        let (lo, hi) = curve.interval(i, kind)?;
        if lo <= target && target <= hi {
            return Ok(CriticalValue::AtGamma(gamma));
        }
    }
    Ok(CriticalValue::BeyondGrid { grid_max: curve.grid.max() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::curve::{Estimand, GammaGrid};

    fn curve(grid: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> BoundsCurve {
        BoundsCurve {
            grid: GammaGrid::new(grid).unwrap(),
            pei_lower: lower,
            pei_upper: upper,
            ci_lower: None,
            ci_upper: None,
            estimand: Estimand::Ate,
            alpha: None,
            b: None,
            warnings: Vec::new(),
        }
    }

    #[test]
    fn contained_at_one_gives_one() {
        let c = curve(vec![1.0, 2.0], vec![-0.1, -0.2], vec![0.1, 0.2]);
        assert_eq!(critical_value(&c, 0.0, IntervalKind::Pei).unwrap(), CriticalValue::AtGamma(1.0));
    }

    #[test]
    fn never_contained_is_beyond_grid() {
        let c = curve(vec![1.0, 2.0, 3.0], vec![0.5, 0.4, 0.3], vec![0.9, 1.0, 1.1]);
        let cv = critical_value(&c, 0.0, IntervalKind::Pei).unwrap();
        assert_eq!(cv, CriticalValue::BeyondGrid { grid_max: 3.0 });
        assert_eq!(cv.value_or_grid_max(), 3.0);
        assert!(cv.is_beyond_grid());
    }

    #[test]
    fn first_containment_between_grid_points() {
        // Monotone curve crossing zero between gamma = 4.0 and 4.5.
        let c = curve(
            vec![3.5, 4.0, 4.5, 5.0],
            vec![0.30, 0.10, -0.05, -0.20],
            vec![0.90, 1.00, 1.10, 1.20],
        );
        assert_eq!(critical_value(&c, 0.0, IntervalKind::Pei).unwrap(), CriticalValue::AtGamma(4.5));
    }

    #[test]
    fn ci_scan_requires_ci_columns() {
        let c = curve(vec![1.0], vec![0.0], vec![1.0]);
        assert!(critical_value(&c, 0.5, IntervalKind::Ci).is_err());
    }

    #[test]
    fn widening_the_curve_never_increases_the_critical_value() {
        let base = curve(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![0.4, 0.3, 0.1, -0.1],
            vec![0.6, 0.7, 0.8, 0.9],
        );
        let widened = curve(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![0.3, 0.1, -0.1, -0.3],
            vec![0.7, 0.9, 1.0, 1.1],
        );
        let a = critical_value(&base, 0.0, IntervalKind::Pei).unwrap().value_or_grid_max();
        let b = critical_value(&widened, 0.0, IntervalKind::Pei).unwrap().value_or_grid_max();
        assert!(b <= a);
    }
}
