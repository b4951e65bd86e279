//! Gaussian hypergeometric series and Gamma-function helpers.

use statrs::function::gamma::{digamma as statrs_digamma, ln_gamma as statrs_ln_gamma};

use crate::error::{Error, Result};

/// Hard cap on the number of series terms before giving up.
const MAX_TERMS: usize = 2_000_000;

pub fn ln_gamma(x: f64) -> f64 {
    statrs_ln_gamma(x)
}

pub fn digamma(x: f64) -> f64 {
    statrs_digamma(x)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Sum of the ₂F₁ power series and the number of terms used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSum {
    pub value: f64,
    pub terms: usize,
}

/// `₂F₁(a, b; c; z)` for `0 ≤ z < 1` and positive parameters.
///
/// The series has positive terms here, so truncation stops once a geometric
/// bound on the remaining tail falls below `rel_tol` of the partial sum.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64, rel_tol: f64) -> Result<SeriesSum> {
    if !(0.0..1.0).contains(&z) {
        return Err(Error::Domain(format!("2F1 series needs 0 <= z < 1, got {z}")));
    }
    if a <= 0.0 || b <= 0.0 || c <= 0.0 {
        return Err(Error::Domain(format!(
            "2F1 series implemented for positive parameters, got ({a}, {b}; {c})"
        )));
    }
    let mut sum = 1.0;
    let mut term = 1.0;
    if z == 0.0 {
        return Ok(SeriesSum { value: 1.0, terms: 1 });
    }
    for n in 0..MAX_TERMS {
        let nf = n as f64;
        let ratio = (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * z;
        term *= ratio;
        sum += term;
        // From here on successive ratios are monotone and tend to z; bound
        // the tail by a geometric series with the larger of the two.
        let next = (a + nf + 1.0) * (b + nf + 1.0) / ((c + nf + 1.0) * (nf + 2.0)) * z;
        let q = next.max(z);
        if q < 1.0 {
            let tail = term * next / (1.0 - q);
            if tail <= rel_tol * sum {
                return Ok(SeriesSum {
                    value: sum,
                    terms: n + 2,
                });
            }
        }
    }
    Err(Error::NonConvergence(format!(
        "2F1({a}, {b}; {c}; {z}) series did not converge in {MAX_TERMS} terms"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn elementary_reductions() {
        // 2F1(1, 1; 2; z) = -ln(1 - z)/z
        let z = 0.7;
        let s = hyp2f1(1.0, 1.0, 2.0, z, 1e-15).unwrap();
        assert_relative_eq!(s.value, -(1.0 - z as f64).ln() / z, max_relative = 1e-13);
        // 2F1(a, b; b; z) = (1 - z)^-a
        let s = hyp2f1(2.5, 3.0, 3.0, 0.4, 1e-15).unwrap();
        assert_relative_eq!(s.value, 0.6f64.powf(-2.5), max_relative = 1e-13);
    }

    #[test]
    fn value_from_mpmath() {
        // mpmath.hyp2f1(2, 3, 11, 0.5)
        let s = hyp2f1(2.0, 3.0, 11.0, 0.5, 1e-15).unwrap();
        assert_relative_eq!(s.value, 1.364_937_345_137_000_8, max_relative = 1e-13);
    }

    #[test]
    fn near_one_converges() {
        let s = hyp2f1(2.0, 3.0, 11.0, 1.0 - 1e-6, 1e-14).unwrap();
        // Gauss: 2F1(a,b;c;1) = Γ(c)Γ(c-a-b)/(Γ(c-a)Γ(c-b))
        let gauss = (ln_gamma(11.0) + ln_gamma(6.0) - ln_gamma(9.0) - ln_gamma(8.0)).exp();
        assert_relative_eq!(s.value, gauss, max_relative = 1e-4);
    }

    #[test]
    fn rejects_outside_disc() {
        assert!(hyp2f1(1.0, 1.0, 2.0, 1.0, 1e-14).is_err());
    }
}
