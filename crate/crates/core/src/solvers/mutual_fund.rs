//! Two-fund separation across risk aversions under differential rates.

use serde::Serialize;

use super::{solve_diff_rates, CaseLabel, Retention, Roman, SolveOptions, SolveReport};
use crate::error::{Error, Result};
use crate::hamiltonian::eval_objective;
use crate::model::{Friction, Policy, Problem};
use crate::roots::{bisect, DEFAULT_MAX_ITER};

const DELTA_TOL: f64 = 1e-12;
const ENDPOINT_TOL: f64 = 1e-12;

/// Allocation family of a differential-rates case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseFamily {
    /// i, iv, vi: lending at `r`.
    OwnFunds,
    /// ii, v, vii: borrowing at `R`.
    Leveraged,
    /// iii: fully invested in risky assets.
    AllRisky,
}

impl CaseFamily {
    pub fn of(case: CaseLabel) -> Option<Self> {
        match case {
            CaseLabel::DiffRates(Roman::I | Roman::IV | Roman::VI) => Some(CaseFamily::OwnFunds),
            CaseLabel::DiffRates(Roman::II | Roman::V | Roman::VII) => Some(CaseFamily::Leveraged),
            CaseLabel::DiffRates(Roman::III) => Some(CaseFamily::AllRisky),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MutualFund {
    /// Weight on the η₁ fund.
    pub delta: f64,
    pub policy: Policy,
    pub family: CaseFamily,
    pub endpoints: [SolveReport; 2],
    pub iterations: usize,
}

fn retention_of(report: &SolveReport) -> Retention {
    match report.policy.kappa {
        k if k == 0.0 => Retention::Zero,
        k if k == 1.0 => Retention::Full,
        _ => Retention::Interior,
    }
}

/// Finds δ so that `δ(π₁, κ₁) + (1 − δ)(π₂, κ₂)` satisfies the optimality
/// condition at `η̄`, where `(πᵢ, κᵢ)` are optimal at `ηᵢ`.
pub fn mutual_fund_combine(problem: &Problem, eta1: f64, eta2: f64, eta_bar: f64) -> Result<MutualFund> {
    let Friction::DifferentialRates { premium } = &problem.friction else {
        return Err(Error::Unsupported("mutual-fund separation needs differential rates".into()));
    };
    let Some(q) = premium.is_linear().then(|| premium.rate()).flatten() else {
        return Err(Error::Unsupported("mutual-fund separation needs a linear premium".into()));
    };
    if !(eta1 < eta_bar && eta_bar < eta2) && eta_bar != eta1 && eta_bar != eta2 {
        return Err(Error::Domain(format!(
            "need eta1 < eta_bar < eta2, got {eta1}, {eta_bar}, {eta2}"
        )));
    }
    let opts = SolveOptions::default();
    let s1 = solve_diff_rates(&problem.with_eta(eta1)?, &opts)?;
    let s2 = solve_diff_rates(&problem.with_eta(eta2)?, &opts)?;
    let (f1, f2) = (CaseFamily::of(s1.case), CaseFamily::of(s2.case));
    let family = match (f1, f2) {
        (Some(a), Some(b)) if a == b => a,
        _ => return Err(Error::CaseMismatch(s1.case.to_string(), s2.case.to_string())),
    };
    let target = problem.with_eta(eta_bar)?;
    let r = target.market.r();
    let xi = match family {
        CaseFamily::OwnFunds => Some(r),
        CaseFamily::Leveraged => Some(target.market.r_borrow()),
        CaseFamily::AllRisky => None,
    };
    // When both endpoints sit at the same κ corner the κ-condition holds
    // with slack and drops out.
    let shared_corner = retention_of(&s1) == retention_of(&s2) && retention_of(&s1) != Retention::Interior;

    let combine = |delta: f64| -> Policy {
        Policy::new(
            &s1.policy.pi * delta + &s2.policy.pi * (1.0 - delta),
            delta * s1.policy.kappa + (1.0 - delta) * s2.policy.kappa,
        )
    };
    let l = |delta: f64| -> Result<f64> {
        let policy = combine(delta);
        let e = eval_objective(&target, &policy)?;
        let shift = match xi {
            Some(x) => x - r,
            None => e.grad_pi.mean(),
        };
        let alloc = policy.pi.dot(&e.grad_pi.add_scalar(-shift));
        let retention = if shared_corner {
            0.0
        } else {
            policy.kappa * (e.dh_dkappa + q)
        };
        Ok(alloc + retention)
    };

    let (l0, l1) = (l(0.0)?, l(1.0)?);
    let (delta, iterations) = if l1.abs() <= ENDPOINT_TOL {
        (1.0, 0)
    } else if l0.abs() <= ENDPOINT_TOL {
        (0.0, 0)
    } else if l0.signum() == l1.signum() {
        return Err(Error::NoRoot(format!(
            "L(delta) keeps its sign on [0, 1]: L(0) = {l0:e}, L(1) = {l1:e}"
        )));
    } else {
        let root = bisect(l, 0.0, 1.0, DELTA_TOL, DEFAULT_MAX_ITER)?;
        (root.x, root.iterations)
    };
    Ok(MutualFund {
        delta,
        policy: combine(delta),
        family,
        endpoints: [s1, s2],
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpDist, JumpLaw, MarketModel, PremiumSchedule, Utility};
    use nalgebra::{DMatrix, DVector};

    fn a2() -> Problem {
        let s: f64 = 0.05;
        let sigma = DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.32 * s, 0.32 * (1.0 - s * s).sqrt()]);
        Problem::new(
            MarketModel::new(DVector::from_vec(vec![0.16, 0.08]), sigma, 0.03, 0.10, DVector::from_vec(vec![0.2, -0.3]), 0.6),
            JumpLaw::new(0.25, JumpDist::beta(2.0, 8.0)),
            Friction::DifferentialRates {
                premium: PremiumSchedule::Linear { q: 0.8 },
            },
            Utility::new(1.5),
        )
        .unwrap()
    }

    #[test]
    fn a2_case_iii_triple_combines_to_direct_solve() {
        let p = a2();
        let mf = mutual_fund_combine(&p, 1.0, 2.0, 1.5).unwrap();
        assert_eq!(mf.family, CaseFamily::AllRisky);
        assert!((mf.delta - 1.0 / 3.0).abs() < 1e-9, "{}", mf.delta);
        assert!((mf.policy.pi.sum() - 1.0).abs() < 1e-6);
        let direct = solve_diff_rates(&p, &SolveOptions::default()).unwrap();
        assert!(mf.policy.max_distance(&direct.policy) <= 1e-5);
    }

    #[test]
    fn eta_bar_at_endpoint_gives_delta_one() {
        let mf = mutual_fund_combine(&a2(), 1.0, 2.0, 1.0).unwrap();
        assert_eq!(mf.delta, 1.0);
    }

    #[test]
    fn mismatched_families_rejected() {
        assert!(matches!(mutual_fund_combine(&a2(), 0.5, 3.0, 1.5), Err(Error::CaseMismatch(..))));
    }
}
