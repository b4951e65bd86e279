//! Bracketing bisection for monotone scalar equations.

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub iterations: usize,
    /// `|f(x)|` at the returned point.
    pub residual: f64,
}

/// Finds a sign change of `f` on `[lo, hi]` by bisection, stopping once the
/// bracket is narrower than `tol`. Errors propagate from `f` unchanged.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a)?;
    let fb = f(b)?;
    if fa == 0.0 {
        return Ok(Root {
            x: a,
            iterations: 0,
            residual: 0.0,
        });
    }
    if fb == 0.0 {
        return Ok(Root {
            x: b,
            iterations: 0,
            residual: 0.0,
        });
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::NoRoot(format!(
            "no sign change on [{a}, {b}]: f = {fa:e}, {fb:e}"
        )));
    }
    for it in 1..=max_iter {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(Root {
                x: m,
                iterations: it,
                residual: 0.0,
            });
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if b - a <= tol {
            let x = 0.5 * (a + b);
            let residual = f(x)?.abs();
            return Ok(Root {
                x,
                iterations: it,
                residual,
            });
        }
    }
    if b - a <= tol.max(4.0 * f64::EPSILON * a.abs().max(b.abs())) {
        let x = 0.5 * (a + b);
        let residual = f(x)?.abs();
        return Ok(Root {
            x,
            iterations: max_iter,
            residual,
        });
    }
    Err(Error::NonConvergence(format!(
        "bisection bracket [{a}, {b}] still wider than {tol:e} after {max_iter} iterations"
    )))
}

/// Solves `f(x) = target` for a nondecreasing `f` by expanding a bracket
/// around `start` until it straddles the target, then bisecting.
pub fn invert_increasing<F>(mut f: F, target: f64, start: f64, tol: f64) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut step = 1.0f64.max(start.abs());
    let mut lo = start;
    let mut hi = start;
    let f0 = f(start)? - target;
    if f0 == 0.0 {
        return Ok(Root {
            x: start,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut expansions = 0;
    if f0 < 0.0 {
        loop {
            hi = lo + step;
            if f(hi)? - target >= 0.0 {
                break;
            }
            lo = hi;
            step *= 2.0;
            expansions += 1;
            if expansions > 60 {
                return Err(Error::Range {
                    what: "monotone map (above)",
                    value: target,
                });
            }
        }
    } else {
        loop {
            lo = hi - step;
            if f(lo)? - target <= 0.0 {
                break;
            }
            hi = lo;
            step *= 2.0;
            expansions += 1;
            if expansions > 60 {
                return Err(Error::Range {
                    what: "monotone map (below)",
                    value: target,
                });
            }
        }
    }
    bisect(|x| Ok(f(x)? - target), lo, hi, tol, DEFAULT_MAX_ITER)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = bisect(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-12, 200).unwrap();
        assert!((r.x - 2f64.sqrt()).abs() < 1e-12);
        assert!(r.iterations <= 42);
    }

    #[test]
    fn no_sign_change_is_reported() {
        assert!(matches!(
            bisect(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-10, 200),
            Err(Error::NoRoot(_))
        ));
    }

    #[test]
    fn inversion_expands_bracket() {
        let r = invert_increasing(|x| Ok(x.powi(3)), 1e6, 0.0, 1e-12).unwrap();
        assert!((r.x - 100.0).abs() < 1e-9);
        let r = invert_increasing(|x| Ok(x.powi(3)), -8.0, 5.0, 1e-12).unwrap();
        assert!((r.x + 2.0).abs() < 1e-9);
    }

    #[test]
    fn bounded_map_reports_range() {
        let r = invert_increasing(|x: f64| Ok(x.atan()), 2.0, 0.0, 1e-12);
        assert!(matches!(r, Err(Error::Range { .. })));
    }
}
