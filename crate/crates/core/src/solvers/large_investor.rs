//! Large investor with piecewise-constant price pressure (one asset).

use super::{check_corner, finish, roman, solve_kappa, CaseLabel, KappaSolution, RootLog, SolveOptions, SolveReport};
use crate::error::{Error, Result};
use crate::model::{Friction, Policy, PremiumSchedule, Problem};
use crate::roots::{bisect, DEFAULT_MAX_ITER};

const M_TOL: f64 = 1e-13;

fn kappa_of_m(problem: &Problem, premium: &PremiumSchedule, m: f64) -> Result<KappaSolution> {
    let mk = &problem.market;
    let (sigma, rho, b) = (mk.sigma_scalar(), mk.rho_scalar(), mk.b());
    let eta = problem.eta();
    let drive = b * rho / sigma * (mk.mu_scalar() + m - mk.r());
    let b2 = eta * b * b * (1.0 - rho * rho);
    solve_kappa(problem, |k| {
        let jump = if problem.lambda() > 0.0 {
            problem.lambda() * problem.functionals().psi(k, eta)?
        } else {
            0.0
        };
        Ok(drive - b2 * k - jump - premium.slope(k))
    })
}

/// `π(m) = (μ + m − r)/(ησ²) + ρbκ(m)/σ`
fn pi_of_m(problem: &Problem, m: f64, kappa: f64) -> f64 {
    let mk = &problem.market;
    let sigma = mk.sigma_scalar();
    (mk.mu_scalar() + m - mk.r()) / (problem.eta() * sigma * sigma) + mk.rho_scalar() * mk.b() * kappa / sigma
}

pub fn solve_large_investor(problem: &Problem, opts: &SolveOptions) -> Result<SolveReport> {
    let Friction::LargeInvestor {
        premium,
        m_plus,
        m_minus,
    } = &problem.friction
    else {
        return Err(Error::Unsupported("solve_large_investor needs a large-investor friction".into()));
    };
    let (m_plus, m_minus) = (*m_plus, *m_minus);
    let position = |m: f64| -> Result<(f64, KappaSolution)> {
        let ks = kappa_of_m(problem, premium, m)?;
        Ok((pi_of_m(problem, m, ks.kappa), ks))
    };
    let mut roots = Vec::new();
    let (pi_plus, k_plus) = position(m_plus)?;
    let (m, family, ks) = if pi_plus > 0.0 {
        (m_plus, 1, k_plus)
    } else {
        let (pi_minus, k_minus) = position(m_minus)?;
        if pi_minus < 0.0 {
            (m_minus, 2, k_minus)
        } else if m_plus == m_minus || pi_plus == 0.0 {
            (m_plus, 3, k_plus)
        } else {
            let root = bisect(|m| Ok(position(m)?.0), m_plus, m_minus, M_TOL, DEFAULT_MAX_ITER)?;
            roots.push(RootLog::new("m", &root));
            (root.x, 3, kappa_of_m(problem, premium, root.x)?)
        }
    };
    if let Some(rt) = &ks.root {
        roots.push(RootLog::new("kappa", rt));
    }
    let pi = if family == 3 { 0.0 } else { pi_of_m(problem, m, ks.kappa) };
    let policy = Policy::scalar(pi, ks.kappa);
    let report = finish(problem, policy, CaseLabel::Large(roman(family, ks.retention)), Some(m), roots, opts)?;
    check_corner(problem, &report)?;
    Ok(report)
}
