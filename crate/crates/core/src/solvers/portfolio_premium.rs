//! Premium rate depending on the risky allocation: `f = −(1 − κ)q(π)`.
//!
//! [`solve_portfolio_premium`] is the interior solver built on `Q⁻¹ ∘ G`.
//! [`solve_portfolio_premium_any`] also covers the corners and the cases
//! where `Q` is not monotone by maximising the profile over κ.

use serde::Serialize;

use super::{finish, CaseLabel, Retention, RootLog, SolveOptions, SolveReport, KAPPA_TOL};
use crate::error::{Error, Result};
use crate::hamiltonian::eval_objective;
use crate::model::{Friction, Policy, PremiumRate, Problem};
use crate::oracle::{grid_maximize, GridSpec};
use crate::roots::{bisect, invert_increasing, DEFAULT_MAX_ITER};

const PI_TOL: f64 = 1e-13;
const SCAN: usize = 64;

fn rate(problem: &Problem) -> Result<&dyn PremiumRate> {
    match &problem.friction {
        Friction::PortfolioPremium { q } => Ok(q.as_ref()),
        _ => Err(Error::Unsupported("portfolio-premium solver needs a portfolio-premium friction".into())),
    }
}

/// Sample points for global checks on `q′`: dense near zero, sparse far out.
fn probe_points() -> Vec<f64> {
    let mut pts: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.05).collect();
    for k in -3..=6 {
        let x = 10f64.powi(k);
        pts.push(x);
        pts.push(-x);
    }
    pts
}

/// Checks `[q′(π) + ηρbσ]² < σ²η²(b² + λE[Y²])` on the probe points.
pub fn check_soc(problem: &Problem) -> Result<()> {
    let q = rate(problem)?;
    let m = &problem.market;
    let eta = problem.eta();
    let (sigma, rho, b) = (m.sigma_scalar(), m.rho_scalar(), m.b());
    let rhs = sigma * sigma * eta * eta * (b * b + problem.lambda() * problem.functionals().second_moment());
    let mut worst = (0.0, f64::NEG_INFINITY);
    for pi in probe_points() {
        let lhs = (q.d1(pi) + eta * rho * b * sigma).powi(2);
        if lhs > worst.1 {
            worst = (pi, lhs);
        }
    }
    if let Some(bound) = q.slope_bound() {
        let lhs = (bound + (eta * rho * b * sigma).abs()).powi(2);
        if lhs >= rhs && worst.1 < rhs {
            // The supremum is approached only asymptotically.
            worst = (f64::INFINITY, lhs);
        }
    }
    if worst.1 >= rhs {
        return Err(Error::SocViolation {
            pi: worst.0,
            lhs: worst.1,
            rhs,
        });
    }
    Ok(())
}

/// Range of η allowed by the sufficient condition for the hyperbolic rate
/// `q(π) = q₀ + C(√(π² + A²) − A)` with Beta jumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PremiumInterval {
    pub eta_min: f64,
    pub eta_max: f64,
}

impl PremiumInterval {
    pub fn for_hyperbolic(problem: &Problem, c: f64) -> Option<Self> {
        let m = &problem.market;
        let (sigma, rho, b) = (m.sigma_scalar(), m.rho_scalar(), m.b());
        let x = b * b * (1.0 - 2.0 * rho * rho) + problem.lambda() * problem.functionals().second_moment();
        if rho > 0.0 {
            if x <= 0.0 {
                return None;
            }
            let eta_min = c / (sigma * (x / 2.0).sqrt());
            let eta_max = c / (b * rho * sigma);
            (eta_min <= eta_max).then_some(PremiumInterval { eta_min, eta_max })
        } else if rho < 0.0 {
            let bound = (x / 2.0).min((b * rho).powi(2));
            if bound <= 0.0 {
                return None;
            }
            Some(PremiumInterval {
                eta_min: c / (sigma * bound.sqrt()),
                eta_max: f64::INFINITY,
            })
        } else {
            None
        }
    }

    pub fn contains(&self, eta: f64) -> bool {
        eta >= self.eta_min && eta <= self.eta_max
    }
}

/// Interior solution via `π = Q⁻¹(G(κ))` and the first-order condition in κ.
pub fn solve_portfolio_premium(problem: &Problem, opts: &SolveOptions) -> Result<SolveReport> {
    let q = rate(problem)?;
    check_soc(problem)?;
    let m = &problem.market;
    let eta = problem.eta();
    let (sigma, rho, b) = (m.sigma_scalar(), m.rho_scalar(), m.b());
    let excess = m.mu_scalar() - m.r();
    let tilt = eta * b * sigma * rho;

    // Q(π) = q(π) + ηbσρπ is convex. When it is not monotone, each side of
    // its minimiser π₀ is inverted separately and the better root kept.
    let big_q = |p: f64| q.value(p) + tilt * p;
    let slopes: Vec<f64> = probe_points().into_iter().map(|p| q.d1(p) + tilt).collect();
    let branches: Vec<(f64, f64)> = if slopes.iter().all(|s| *s > 0.0) {
        vec![(0.0, 1.0)]
    } else if slopes.iter().all(|s| *s < 0.0) {
        vec![(0.0, -1.0)]
    } else if probe_points().into_iter().all(|p| q.d2(p) >= 0.0) {
        let pi0 = invert_increasing(|p| Ok(q.d1(p) + tilt), 0.0, 0.0, PI_TOL)?.x;
        vec![(pi0, 1.0), (pi0, -1.0)]
    } else {
        return Err(Error::Domain("Q(pi) = q(pi) + eta b sigma rho pi is neither monotone nor convex".into()));
    };
    let big_g = |k: f64| -> Result<f64> {
        let jump = if problem.lambda() > 0.0 {
            problem.lambda() * problem.functionals().psi(k, eta)?
        } else {
            0.0
        };
        Ok(eta * b * b * k + jump)
    };
    let upper = problem.kappa_upper().min(1.0 - 1e-9);
    let mut nodes = vec![1e-9];
    nodes.extend((1..SCAN).map(|j| j as f64 / SCAN as f64));
    nodes.push(upper);

    let mut best: Option<(f64, Policy, crate::roots::Root)> = None;
    for &(anchor, dir) in &branches {
        // π = anchor + dir·t with t ≥ 0 (single branch: t ranges over ℝ).
        let single = branches.len() == 1;
        let pi_of = |k: f64| -> Result<f64> {
            let target = big_g(k)?;
            let t = if single {
                invert_increasing(|p| Ok(dir * big_q(p)), dir * target, 0.0, PI_TOL)?.x
            } else {
                invert_increasing(|t| Ok(big_q(anchor + dir * t.max(0.0))), target, 0.0, PI_TOL)?.x
            };
            Ok(if single { t } else { anchor + dir * t.max(0.0) })
        };
        let foc = |k: f64| -> Result<f64> {
            let pi = pi_of(k)?;
            Ok(excess - eta * sigma * sigma * pi + eta * sigma * rho * b * k - q.d1(pi) * (1.0 - k))
        };
        let values = nodes.iter().map(|k| foc(*k)).collect::<Result<Vec<_>>>()?;
        for j in 0..nodes.len() - 1 {
            let (va, vb) = (values[j], values[j + 1]);
            if va == 0.0 || va.signum() != vb.signum() {
                let root = if va == 0.0 {
                    crate::roots::Root {
                        x: nodes[j],
                        iterations: 0,
                        residual: 0.0,
                    }
                } else {
                    bisect(foc, nodes[j], nodes[j + 1], KAPPA_TOL, DEFAULT_MAX_ITER)?
                };
                let policy = Policy::scalar(pi_of(root.x)?, root.x);
                let value = eval_objective(problem, &policy)?.value;
                if best.as_ref().is_none_or(|(v, ..)| value > *v) {
                    best = Some((value, policy, root));
                }
            }
        }
    }
    let (_, policy, root) = best.ok_or(Error::NoInteriorSolution)?;
    let roots = vec![RootLog::new("kappa", &root)];
    let mut report = finish(
        problem,
        policy,
        CaseLabel::PortfolioPremium(Retention::Interior),
        None,
        roots,
        opts,
    )?;
    if opts.oracle_check {
        oracle_check(problem, &mut report)?;
    }
    Ok(report)
}

/// Interior solver when it applies; otherwise the best KKT point of the
/// profile `κ ↦ max_π (f + H)`, including the corners.
pub fn solve_portfolio_premium_any(problem: &Problem, opts: &SolveOptions) -> Result<SolveReport> {
    match solve_portfolio_premium(problem, opts) {
        Ok(r) => return Ok(r),
        Err(Error::NoInteriorSolution | Error::Domain(_) | Error::Range { .. } | Error::SocViolation { .. }) => {}
        Err(e) => return Err(e),
    }
    let q = rate(problem)?;
    let m = &problem.market;
    let eta = problem.eta();
    let (sigma, rho, b) = (m.sigma_scalar(), m.rho_scalar(), m.b());
    let excess = m.mu_scalar() - m.r();
    let merton = excess / (eta * sigma * sigma);

    // For fixed κ the π-condition is strictly decreasing in π.
    let pi_of = |k: f64| -> Result<f64> {
        let d = |p: f64| -> Result<f64> {
            Ok(-(excess - eta * sigma * sigma * p + eta * sigma * rho * b * k - (1.0 - k) * q.d1(p)))
        };
        Ok(invert_increasing(d, 0.0, merton, PI_TOL)?.x)
    };
    let phi = |k: f64| -> Result<f64> {
        let pi = pi_of(k)?;
        let jump = if problem.lambda() > 0.0 {
            problem.lambda() * problem.functionals().psi(k, eta)?
        } else {
            0.0
        };
        Ok(q.value(pi) + eta * b * (sigma * rho * pi - b * k) - jump)
    };

    let upper = problem.kappa_upper();
    let mut candidates: Vec<(f64, Retention, Option<RootLog>)> = Vec::new();
    if phi(0.0)? <= 0.0 {
        candidates.push((0.0, Retention::Zero, None));
    }
    if phi(upper)? >= 0.0 {
        candidates.push((upper, Retention::Full, None));
    }
    let nodes: Vec<f64> = (0..=SCAN).map(|j| upper * j as f64 / SCAN as f64).collect();
    let values = nodes.iter().map(|k| phi(*k)).collect::<Result<Vec<_>>>()?;
    for j in 0..SCAN {
        // Only downward crossings are local maxima of the profile.
        if values[j] > 0.0 && values[j + 1] <= 0.0 {
            let root = bisect(phi, nodes[j], nodes[j + 1], KAPPA_TOL, DEFAULT_MAX_ITER)?;
            if root.x > 0.0 && root.x < upper {
                candidates.push((root.x, Retention::Interior, Some(RootLog::new("kappa", &root))));
            }
        }
    }
    let mut best: Option<(f64, Policy, Retention, Option<RootLog>)> = None;
    for (k, ret, log) in candidates {
        let policy = Policy::scalar(pi_of(k)?, k);
        let value = eval_objective(problem, &policy)?.value;
        if best.as_ref().is_none_or(|(v, ..)| value > *v) {
            best = Some((value, policy, ret, log));
        }
    }
    let (_, policy, retention, log) = best.ok_or_else(|| Error::NoSolution("no KKT point of the profile".into()))?;
    let mut report = finish(
        problem,
        policy,
        CaseLabel::PortfolioPremium(retention),
        None,
        log.into_iter().collect(),
        opts,
    )?;
    if opts.oracle_check {
        oracle_check(problem, &mut report)?;
    }
    Ok(report)
}

fn oracle_check(problem: &Problem, report: &mut SolveReport) -> Result<()> {
    let spec = GridSpec {
        coarse: 101,
        refine: 101,
        rounds: 3,
        ..GridSpec::default()
    };
    let oracle = grid_maximize(problem, &spec)?;
    let gap = oracle.value - report.objective.value;
    report.oracle_gap = Some(gap);
    if gap > oracle.resolution_bound.max(1e-12) {
        return Err(Error::NoSolution(format!(
            "grid oracle beats solver by {gap:e} (resolution bound {:e}) at pi = {}, kappa = {}",
            oracle.resolution_bound, oracle.policy.pi[0], oracle.policy.kappa
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstantRate, HyperbolicRate, JumpDist, JumpLaw, MarketModel, PremiumSchedule, Utility};
    use crate::solvers::solve_frictionless;
    use std::sync::Arc;

    fn c2(rho: f64, q: Arc<dyn PremiumRate>, alpha: f64) -> Problem {
        Problem::new(
            MarketModel::scalar(0.16, 0.30, 0.03, 0.03, rho, 0.4),
            JumpLaw::new(0.15, JumpDist::beta(alpha, 8.0)),
            Friction::PortfolioPremium { q },
            Utility::new(4.0),
        )
        .unwrap()
    }

    fn hyperbolic(alpha: f64) -> Arc<dyn PremiumRate> {
        Arc::new(HyperbolicRate {
            base: 0.15 * alpha / (alpha + 8.0),
            c: 0.25,
            a: 1.0,
        })
    }

    #[test]
    fn hyperbolic_example_interior() {
        let p = c2(0.5, hyperbolic(2.0), 2.0);
        let iv = PremiumInterval::for_hyperbolic(&p, 0.25).unwrap();
        assert!(iv.contains(4.0), "{iv:?}");
        let rep = solve_portfolio_premium(&p, &SolveOptions::default()).unwrap();
        assert_eq!(rep.case, CaseLabel::PortfolioPremium(Retention::Interior));
        assert!(rep.policy.kappa > 0.0 && rep.policy.kappa < 1.0);
        assert!(rep.oracle_gap.unwrap() <= 1e-9);
    }

    #[test]
    fn constant_rate_matches_frictionless_linear_premium() {
        let p = c2(0.5, Arc::new(ConstantRate { q: 0.11 }), 12.0);
        let rep = solve_portfolio_premium(&p, &SolveOptions::default()).unwrap();
        let fr = p
            .with_friction(Friction::Frictionless {
                premium: PremiumSchedule::Linear { q: 0.11 },
            })
            .unwrap();
        let base = solve_frictionless(&fr, &SolveOptions::default()).unwrap();
        assert!(rep.policy.max_distance(&base.policy) < 1e-8, "{:?} vs {:?}", rep.policy, base.policy);
    }

    #[test]
    fn sign_definite_foc_reports_no_interior() {
        let p = Problem::new(
            MarketModel::scalar(0.16, 0.30, 0.03, 0.03, 0.3, 0.2),
            JumpLaw::new(0.15, JumpDist::beta(12.0, 8.0)),
            Friction::PortfolioPremium {
                q: Arc::new(ConstantRate { q: 0.05 }),
            },
            Utility::new(4.0),
        )
        .unwrap();
        assert!(matches!(solve_portfolio_premium(&p, &SolveOptions::default()), Err(Error::NoInteriorSolution)));
        let rep = solve_portfolio_premium_any(&p, &SolveOptions::default()).unwrap();
        // λE[Y] = 0.09 > q: insuring fully is optimal
        assert_eq!(rep.policy.kappa, 0.0);
    }

    #[test]
    fn soc_violation_detected() {
        let q: Arc<dyn PremiumRate> = Arc::new(HyperbolicRate {
            base: 0.03,
            c: 5.0,
            a: 1.0,
        });
        let p = c2(0.5, q, 2.0);
        assert!(matches!(
            solve_portfolio_premium(&p, &SolveOptions::default()),
            Err(Error::SocViolation { .. })
        ));
    }
}
