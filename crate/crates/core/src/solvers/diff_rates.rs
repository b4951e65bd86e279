//! Differential borrowing/lending rates (any `d`) and the frictionless case.

use nalgebra::DVector;
use serde::Serialize;

use super::{check_corner, finish, roman, solve_kappa, CaseLabel, KappaSolution, RootLog, SolveOptions, SolveReport};
use crate::error::{Error, Result};
use crate::model::{Friction, JumpDist, Policy, PremiumSchedule, Problem};
use crate::roots::{bisect, DEFAULT_MAX_ITER};

const XI_TOL: f64 = 1e-13;
const ETA_TOL: f64 = 1e-8;

fn premium(problem: &Problem) -> Result<&PremiumSchedule> {
    problem
        .friction
        .premium()
        .ok_or_else(|| Error::Unsupported(format!("{} friction has no premium schedule", problem.friction.name())))
}

/// `bρ⊤σ⁻¹(μ − ξ1)`
fn hedge_drive(problem: &Problem, xi: f64) -> f64 {
    let m = &problem.market;
    let excess = m.mu().add_scalar(-xi);
    m.b() * m.hedge_direction().dot(&excess)
}

/// `h(κ; ξ) = bρ⊤σ⁻¹(μ − ξ1) − ηb²(1 − |ρ|²)κ − λΨ(κ, η) − p′(κ)`
fn h(problem: &Problem, p: &PremiumSchedule, drive: f64, kappa: f64) -> Result<f64> {
    let m = &problem.market;
    let eta = problem.eta();
    let jump = if problem.lambda() > 0.0 {
        problem.lambda() * problem.functionals().psi(kappa, eta)?
    } else {
        0.0
    };
    let b2 = m.b() * m.b() * (1.0 - m.rho().norm_squared());
    Ok(drive - eta * b2 * kappa - jump - p.slope(kappa))
}

pub fn kappa_of_xi(problem: &Problem, xi: f64) -> Result<KappaSolution> {
    let p = premium(problem)?;
    let drive = hedge_drive(problem, xi);
    solve_kappa(problem, |k| h(problem, p, drive, k))
}

/// `π(ξ) = (1/η)(σσ⊤)⁻¹(μ − ξ1) + (σ⊤)⁻¹ρ bκ`
pub fn pi_of_xi(problem: &Problem, xi: f64, kappa: f64) -> DVector<f64> {
    let m = &problem.market;
    let excess = m.mu().add_scalar(-xi);
    m.cov_inv() * excess / problem.eta() + m.hedge_direction() * (m.b() * kappa)
}

fn allocation_sum(problem: &Problem, xi: f64) -> Result<(f64, KappaSolution)> {
    let ks = kappa_of_xi(problem, xi)?;
    Ok((pi_of_xi(problem, xi, ks.kappa).sum(), ks))
}

pub fn solve_frictionless(problem: &Problem, opts: &SolveOptions) -> Result<SolveReport> {
    let r = problem.market.r();
    let ks = kappa_of_xi(problem, r)?;
    let policy = Policy::new(pi_of_xi(problem, r, ks.kappa), ks.kappa);
    let roots = ks.root.iter().map(|rt| RootLog::new("kappa", rt)).collect();
    let report = finish(problem, policy, CaseLabel::Frictionless(ks.retention), None, roots, opts)?;
    check_corner(problem, &report)?;
    Ok(report)
}

pub fn solve_diff_rates(problem: &Problem, opts: &SolveOptions) -> Result<SolveReport> {
    if !matches!(problem.friction, Friction::DifferentialRates { .. }) {
        return Err(Error::Unsupported("solve_diff_rates needs a differential-rates friction".into()));
    }
    let (r, big_r) = (problem.market.r(), problem.market.r_borrow());
    let mut roots = Vec::new();

    let (s_r, k_r) = allocation_sum(problem, r)?;
    let (xi, family, ks) = if s_r < 1.0 {
        (r, 1, k_r)
    } else {
        let (s_big, k_big) = allocation_sum(problem, big_r)?;
        if s_big > 1.0 {
            (big_r, 2, k_big)
        } else {
            let root = bisect(
                |xi| Ok(allocation_sum(problem, xi)?.0 - 1.0),
                r,
                big_r,
                XI_TOL,
                DEFAULT_MAX_ITER,
            )?;
            roots.push(RootLog::new("xi", &root));
            (root.x, 3, kappa_of_xi(problem, root.x)?)
        }
    };
    if let Some(rt) = &ks.root {
        roots.push(RootLog::new("kappa", rt));
    }
    let policy = Policy::new(pi_of_xi(problem, xi, ks.kappa), ks.kappa);
    let case = CaseLabel::DiffRates(roman(family, ks.retention));
    let report = finish(problem, policy, case, Some(xi), roots, opts)?;
    check_corner(problem, &report)?;
    Ok(report)
}

/// `(η_R, η_r)`: risk aversions at which the allocation at rate `R`
/// (resp. `r`) sums to exactly one.
pub fn threshold_etas(problem: &Problem) -> Result<(f64, f64)> {
    let hi = match problem.jumps.dist {
        JumpDist::Beta { beta, .. } => beta - 1e-3,
        JumpDist::Discrete { .. } => 100.0,
    };
    let lo = 1e-3;
    let find = |xi: f64, name: &str| -> Result<f64> {
        let g = |eta: f64| -> Result<f64> {
            let p = problem.with_eta(eta)?;
            Ok(allocation_sum(&p, xi)?.0 - 1.0)
        };
        let (g_lo, g_hi) = (g(lo)?, g(hi)?);
        if g_lo.signum() == g_hi.signum() {
            return Err(Error::NoThreshold(format!(
                "pi({name}, eta)'1 - 1 has no sign change on ({lo}, {hi}): {g_lo:e}, {g_hi:e}"
            )));
        }
        Ok(bisect(g, lo, hi, ETA_TOL, DEFAULT_MAX_ITER)?.x)
    };
    let eta_big_r = find(problem.market.r_borrow(), "R")?;
    let eta_r = find(problem.market.r(), "r")?;
    Ok((eta_big_r, eta_r))
}

/// Test quantities for a corner case of the differential-rates solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CornerTest {
    pub case: &'static str,
    /// `−h(κ_c; ξ)` at the corner κ_c; the corner requires `≥ 0` for κ = 0
    /// and `< 0` for κ = 1.
    pub retention_margin: f64,
    /// `π(ξ)⊤1` at the corner κ.
    pub allocation: f64,
    pub holds: bool,
}

/// Sufficient conditions for the four corner cases iv, v, vi, vii.
pub fn corner_tests(problem: &Problem) -> Result<[CornerTest; 4]> {
    let p = premium(problem)?;
    let (r, big_r) = (problem.market.r(), problem.market.r_borrow());
    let test = |case: &'static str, xi: f64, kappa: f64| -> Result<CornerTest> {
        let margin = -h(problem, p, hedge_drive(problem, xi), kappa)?;
        let allocation = pi_of_xi(problem, xi, kappa).sum();
        let retention_ok = if kappa == 0.0 { margin >= 0.0 } else { margin < 0.0 };
        let alloc_ok = if xi == r { allocation < 1.0 } else { allocation > 1.0 };
        Ok(CornerTest {
            case,
            retention_margin: margin,
            allocation,
            holds: retention_ok && alloc_ok,
        })
    };
    Ok([
        test("iv", r, 0.0)?,
        test("v", big_r, 0.0)?,
        test("vi", r, 1.0)?,
        test("vii", big_r, 1.0)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpLaw, MarketModel, Utility};
    use nalgebra::DMatrix;

    fn set_a(s: f64, mu: [f64; 2], r: f64, big_r: f64, b: f64, q: f64, eta: f64) -> Problem {
        let sigma = DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.32 * s, 0.32 * (1.0 - s * s).sqrt()]);
        Problem::new(
            MarketModel::new(DVector::from_row_slice(&mu), sigma, r, big_r, DVector::from_vec(vec![0.2, -0.3]), b),
            JumpLaw::new(0.25, JumpDist::beta(2.0, 8.0)),
            Friction::DifferentialRates {
                premium: PremiumSchedule::Linear { q },
            },
            Utility::new(eta),
        )
        .unwrap()
    }

    fn a1(eta: f64) -> Problem {
        set_a(0.25, [0.08, 0.10], 0.02, 0.06, 0.4, 0.3, eta)
    }
    fn a2(eta: f64) -> Problem {
        set_a(0.05, [0.16, 0.08], 0.03, 0.10, 0.6, 0.8, eta)
    }

    #[test]
    fn a1_eta_one_is_all_risky() {
        let rep = solve_diff_rates(&a1(1.0), &SolveOptions::default()).unwrap();
        assert_eq!(rep.case, CaseLabel::DiffRates(super::super::Roman::III));
        assert!((rep.policy.pi.sum() - 1.0).abs() <= 1e-8);
        let xi = rep.xi_star.unwrap();
        assert!((0.02..=0.06).contains(&xi));
    }

    #[test]
    fn a2_eta_three_lends() {
        let rep = solve_diff_rates(&a2(3.0), &SolveOptions::default()).unwrap();
        assert!(matches!(rep.case, CaseLabel::DiffRates(super::super::Roman::I)));
        assert!(rep.policy.pi.sum() < 1.0);
        assert_eq!(rep.xi_star, Some(0.03));
    }

    #[test]
    fn a1_eta_three_certifies() {
        let rep = solve_diff_rates(&a1(3.0), &SolveOptions::default()).unwrap();
        assert!(rep.certificate.passed && rep.certificate.residual.abs() <= 1e-7);
    }

    #[test]
    fn no_background_risk_is_merton_without_insurance() {
        let sigma = DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.08, 0.30]);
        let p = Problem::new(
            MarketModel::new(DVector::from_vec(vec![0.03, 0.035]), sigma, 0.02, 0.06, DVector::from_vec(vec![0.2, -0.3]), 0.0),
            JumpLaw::new(0.0, JumpDist::beta(2.0, 8.0)),
            Friction::DifferentialRates {
                premium: PremiumSchedule::Linear { q: 0.1 },
            },
            Utility::new(3.0),
        )
        .unwrap();
        let rep = solve_diff_rates(&p, &SolveOptions::default()).unwrap();
        let merton = p.market.merton(3.0);
        assert!(merton.sum() < 1.0);
        assert!((&rep.policy.pi - merton).amax() < 1e-14);
        assert_eq!(rep.policy.kappa, 1.0);
    }

    #[test]
    fn thresholds_a1_a2() {
        let (er, e_r) = threshold_etas(&a1(1.0)).unwrap();
        assert!((er - 0.5915).abs() < 1e-3 && (e_r - 1.4742).abs() < 1e-3, "{er} {e_r}");
        let (er, e_r) = threshold_etas(&a2(1.0)).unwrap();
        assert!((er - 0.7081).abs() < 1e-3 && (e_r - 2.3538).abs() < 1e-3, "{er} {e_r}");
    }

    #[test]
    fn allocation_sum_decreases_in_xi() {
        let p = a1(1.0);
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let xi = 0.02 + 0.04 * i as f64 / 49.0;
            let s = allocation_sum(&p, xi).unwrap().0;
            assert!(s < prev);
            prev = s;
        }
    }
}
