//! Closed-form adversarial propensities of the quantile-balancing bounds.
//!
//! For confounding strength Γ, the propensity scores that attain the lower
//! and upper bound of the partially identified set are two-point: per row,
//!
//!   E- = (1 + ((1-e)/e) * Γ^{-sign(y - q_low)})^{-1},   q_low  = Q_{1-γ}
//!   E+ = (1 + ((1-e)/e) * Γ^{ sign(y - q_high)})^{-1},  q_high = Q_γ
//!
//! with γ = Γ/(1+Γ) and sign(0) taken as +1. Both satisfy
//! OR(E±, e) ∈ {1/Γ, Γ} exactly, and Γ = 1 collapses them to e.

use crate::error::{Error, Result};

/// OR(a, b) = (a/(1-a)) / (b/(1-b)).
pub fn odds_ratio(a: f64, b: f64) -> Result<f64> {
    if !(0.0 < a && a < 1.0) || !(0.0 < b && b < 1.0) {
        return Err(Error::invalid("odds_ratio needs probabilities strictly inside (0, 1)"));
    }
    Ok((a / (1.0 - a)) / (b / (1.0 - b)))
}

/// γ = Γ/(1+Γ) ∈ [0.5, 1).
pub fn gamma_frac(gamma: f64) -> Result<f64> {
    if !(gamma >= 1.0) {
        return Err(Error::invalid("gamma must be >= 1"));
    }
    Ok(gamma / (1.0 + gamma))
}

/// Per-row adversarial propensities for one treatment arm.
#[derive(Debug, Clone)]
pub struct AdversarialWeights {
    pub e_minus: Vec<f64>,
    pub e_plus: Vec<f64>,
    pub gamma: f64,
    pub gamma_frac: f64,
}

pub fn adversarial_weights(
    ehat: &[f64],
    y: &[f64],
    q_low: &[f64],
    q_high: &[f64],
    gamma: f64,
) -> Result<AdversarialWeights> {
    let n = ehat.len();
    if y.len() != n || q_low.len() != n || q_high.len() != n {
        return Err(Error::invalid("adversarial weight inputs disagree in length"));
    }
    let gf = gamma_frac(gamma)?;
    if ehat.iter().any(|&e| !(0.0 < e && e < 1.0)) {
        return Err(Error::invalid("propensities must be clipped into (0, 1)"));
    }

    // Γ = 1 collapses both weights to the nominal propensity; taking that
    // branch literally keeps the collapse bit-exact.
    if gamma == 1.0 {
        return Ok(AdversarialWeights {
            e_minus: ehat.to_vec(),
            e_plus: ehat.to_vec(),
            gamma,
            gamma_frac: gf,
        });
    }

    let mut e_minus = Vec::with_capacity(n);
    let mut e_plus = Vec::with_capacity(n);
    for i in 0..n {
        let odds_inv = (1.0 - ehat[i]) / ehat[i];
        e_minus.push(1.0 / (1.0 + odds_inv * gamma_pow(gamma, -sign(y[i] - q_low[i]))));
        e_plus.push(1.0 / (1.0 + odds_inv * gamma_pow(gamma, sign(y[i] - q_high[i]))));
    }
    Ok(AdversarialWeights { e_minus, e_plus, gamma, gamma_frac: gf })
}

#[inline]
fn sign(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

/// Γ^{±1} computed exactly (so Γ = 1 collapses bit-for-bit).
#[inline]
fn gamma_pow(gamma: f64, s: i8) -> f64 {
    if s >= 0 {
        gamma
    } else {
        1.0 / gamma
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odds_ratio_examples() {
        assert_eq!(odds_ratio(0.5, 0.5).unwrap(), 1.0);
        assert!((odds_ratio(2.0 / 3.0, 0.5).unwrap() - 2.0).abs() < 1e-12);
        assert!((odds_ratio(0.1, 0.9).unwrap() - 1.0 / 81.0).abs() < 1e-15);
        assert!(odds_ratio(0.0, 0.5).is_err());
        assert!(odds_ratio(0.5, 1.0).is_err());
    }

    #[test]
    fn gamma_frac_examples() {
        assert_eq!(gamma_frac(1.0).unwrap(), 0.5);
        assert_eq!(gamma_frac(3.0).unwrap(), 0.75);
        assert!((gamma_frac(8.0).unwrap() - 8.0 / 9.0).abs() < 1e-15);
        assert!(gamma_frac(0.9).is_err());
    }

    #[test]
    fn gamma_one_collapses_to_ehat() {
        let ehat = [0.2, 0.5, 0.9];
        let y = [1.0, -2.0, 0.5];
        let q = [0.0, 0.0, 0.0];
        let w = adversarial_weights(&ehat, &y, &q, &q, 1.0).unwrap();
        for i in 0..3 {
            assert_eq!(w.e_minus[i], ehat[i]);
            assert_eq!(w.e_plus[i], ehat[i]);
        }
    }

    #[test]
    fn plug_in_values_at_gamma_two() {
        // ehat = 0.5, y above q_high: E+ = 1/(1 + 1*2) = 1/3.
        let w = adversarial_weights(&[0.5], &[2.0], &[-1.0], &[1.0], 2.0).unwrap();
        assert!((w.e_plus[0] - 1.0 / 3.0).abs() < 1e-15);
        // y below q_low: E- = 1/(1 + 1*2) = 1/3.
        let w = adversarial_weights(&[0.5], &[-2.0], &[-1.0], &[1.0], 2.0).unwrap();
        assert!((w.e_minus[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn two_point_odds_ratio_membership() {
        let ehat = [0.3, 0.62, 0.95, 0.07];
        let y = [0.4, -0.2, 1.7, 0.0];
        let q_low = [0.0, 0.0, 2.0, 0.0];
        let q_high = [0.1, -1.0, 2.5, 0.3];
        for gamma in [1.5, 4.0, 20.0] {
            let w = adversarial_weights(&ehat, &y, &q_low, &q_high, gamma).unwrap();
            for i in 0..4 {
                for e in [w.e_minus[i], w.e_plus[i]] {
                    let or = odds_ratio(e, ehat[i]).unwrap();
                    let dist = (or - gamma).abs().min((or - 1.0 / gamma).abs());
                    assert!(dist < 1e-12 * gamma, "OR {or} not at {{1/Γ, Γ}}");
                }
            }
        }
    }
}
