//! Smooth strictly concave margin `g` (one asset).

use super::{check_corner, finish, solve_kappa, CaseLabel, Retention, RootLog, SolveOptions, SolveReport};
use crate::error::{Error, Result};
use crate::model::{Friction, Policy, Problem};
use crate::roots::invert_increasing;

const PI_TOL: f64 = 1e-12;

pub fn solve_smooth_g(problem: &Problem, opts: &SolveOptions) -> Result<SolveReport> {
    let Friction::SmoothG { premium, g } = &problem.friction else {
        return Err(Error::Unsupported("solve_smooth_g needs a smooth-g friction".into()));
    };
    let m = &problem.market;
    let (sigma, rho, b) = (m.sigma_scalar(), m.rho_scalar(), m.b());
    let eta = problem.eta();
    let excess = m.mu_scalar() - m.r();
    let merton = excess / (eta * sigma * sigma);

    // Q(π) = ησ²π − g′(π) is strictly increasing; π(κ) = Q⁻¹(μ − r + ησρbκ).
    let pi_of = |kappa: f64| -> Result<f64> {
        let target = excess + eta * sigma * rho * b * kappa;
        let root = invert_increasing(|p| Ok(eta * sigma * sigma * p - g.d1(p)), target, merton, PI_TOL)?;
        Ok(root.x)
    };
    let ks = solve_kappa(problem, |k| {
        let pi = pi_of(k)?;
        let jump = if problem.lambda() > 0.0 {
            problem.lambda() * problem.functionals().psi(k, eta)?
        } else {
            0.0
        };
        Ok(eta * b * (sigma * rho * pi - b * k) - jump - premium.slope(k))
    })?;
    let pi = pi_of(ks.kappa)?;
    let case = CaseLabel::SmoothG(match ks.retention {
        Retention::Interior => 1,
        Retention::Zero => 2,
        Retention::Full => 3,
    });
    let roots = ks.root.iter().map(|rt| RootLog::new("kappa", rt)).collect();
    let report = finish(problem, Policy::scalar(pi, ks.kappa), case, None, roots, opts)?;
    check_corner(problem, &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpDist, JumpLaw, MarketModel, PremiumSchedule, QuadraticMargin, Utility};
    use std::sync::Arc;

    fn problem(c: f64, b: f64, lambda: f64, q: f64) -> Problem {
        Problem::new(
            MarketModel::scalar(0.10, 0.2, 0.03, 0.03, 0.3, b),
            JumpLaw::new(lambda, JumpDist::beta(2.0, 8.0)),
            Friction::SmoothG {
                premium: PremiumSchedule::Linear { q },
                g: Arc::new(QuadraticMargin { c }),
            },
            Utility::new(2.0),
        )
        .unwrap()
    }

    #[test]
    fn tiny_regulariser_gives_merton() {
        let rep = solve_smooth_g(&problem(1e-12, 0.0, 0.0, 0.01), &SolveOptions::default()).unwrap();
        let merton = 0.07 / (2.0 * 0.04);
        assert!((rep.policy.pi[0] - merton).abs() < 1e-9);
        assert_eq!(rep.policy.kappa, 1.0);
    }

    #[test]
    fn quadratic_margin_full_insurance() {
        // λE[Y] = 0.06 > q = 0.02 and b = 0: full insurance
        let rep = solve_smooth_g(&problem(0.5, 0.0, 0.3, 0.02), &SolveOptions::default()).unwrap();
        assert_eq!(rep.case, CaseLabel::SmoothG(2));
        assert_eq!(rep.policy.kappa, 0.0);
        assert!((rep.policy.pi[0] - 0.07 / (2.0 * 0.04 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn interior_case_certifies() {
        let rep = solve_smooth_g(&problem(0.2, 0.5, 0.3, 0.058), &SolveOptions::default()).unwrap();
        assert!(rep.policy.kappa > 0.0 && rep.policy.kappa < 1.0);
        assert!(rep.certificate.passed);
    }
}
