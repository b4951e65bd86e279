//! Reduced objective `f + H`, friction conjugates, optimality certificates
//! and the closed-form value function.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Friction, MarketModel, Policy, PremiumSchedule, Problem};
use crate::roots::{bisect, invert_increasing};

/// Default certificate tolerance, 1/year.
pub const DEFAULT_CERT_TOL: f64 = 1e-7;
/// Componentwise slack when testing membership of the conjugate domain.
pub const DOMAIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    /// `f + H`
    pub value: f64,
    /// `∇_π H`
    pub grad_pi: DVector<f64>,
    /// `∂_κ H`
    pub dh_dkappa: f64,
    pub f_value: f64,
    pub h_value: f64,
}

/// Variance rate `|σ⊤π|² + (bκ)² − 2bκπ⊤σρ` of the log-wealth diffusion.
pub fn variance_rate(market: &MarketModel, pi: &DVector<f64>, kappa: f64) -> f64 {
    let s_pi = market.sigma().transpose() * pi;
    let bk = market.b() * kappa;
    s_pi.norm_squared() + bk * bk - 2.0 * bk * pi.dot(market.sigma_rho())
}

pub fn eval_objective(problem: &Problem, policy: &Policy) -> Result<ObjectiveEval> {
    let m = &problem.market;
    let (pi, kappa) = (&policy.pi, policy.kappa);
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::Domain(format!("kappa = {kappa} outside [0, 1]")));
    }
    if pi.len() != m.dim() {
        return Err(Error::Domain(format!(
            "policy has {} weights, model has {} assets",
            pi.len(),
            m.dim()
        )));
    }
    let eta = problem.eta();
    let lambda = problem.lambda();
    let excess = m.mu().add_scalar(-m.r());
    let b = m.b();
    let sigma_rho = m.sigma_rho();

    let (jump_u, jump_psi) = if lambda > 0.0 {
        let f = problem.functionals();
        (f.utility_jump_term(kappa, eta)?, f.psi(kappa, eta)?)
    } else {
        (0.0, 0.0)
    };
    let h_value = pi.dot(&excess) - 0.5 * eta * variance_rate(m, pi, kappa) + lambda * jump_u;
    let cov_pi = m.sigma() * (m.sigma().transpose() * pi);
    let grad_pi = &excess - (cov_pi - sigma_rho * (b * kappa)) * eta;
    let dh_dkappa = eta * b * (pi.dot(sigma_rho) - b * kappa) - lambda * jump_psi;
    let f_value = problem.friction.value(m, pi, kappa);
    Ok(ObjectiveEval {
        value: f_value + h_value,
        grad_pi,
        dh_dkappa,
        f_value,
        h_value,
    })
}

/// `sup_{κ∈[0,1]} {γκ − p(κ)}`
pub fn premium_conjugate(premium: &PremiumSchedule, gamma: f64) -> f64 {
    if premium.is_linear() {
        let q = premium.rate().unwrap_or(0.0);
        return gamma.max(-q);
    }
    if gamma <= premium.slope(0.0) {
        return -premium.value(0.0);
    }
    if gamma >= premium.slope(1.0) {
        return gamma - premium.value(1.0);
    }
    match bisect(|k| Ok(premium.slope(k) - gamma), 0.0, 1.0, 1e-14, 200) {
        Ok(root) => -premium.value(root.x) + root.x * gamma,
        // p′ is flat across γ: every point of the flat piece attains the sup.
        Err(_) => (gamma - premium.value(1.0)).max(-premium.value(0.0)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConjugateValue {
    /// `+∞` outside the effective domain.
    pub value: f64,
    pub in_domain: bool,
}

impl ConjugateValue {
    fn outside() -> Self {
        ConjugateValue {
            value: f64::INFINITY,
            in_domain: false,
        }
    }
}

/// `f̃(ζ, γ) = sup_{π,κ} {f(π, κ) + π⊤ζ + κγ}` for the closed-form regimes.
pub fn conjugate(friction: &Friction, market: &MarketModel, zeta: &DVector<f64>, gamma: f64) -> Result<ConjugateValue> {
    match friction {
        Friction::Frictionless { premium } => {
            if zeta.amax() <= DOMAIN_TOL {
                Ok(ConjugateValue {
                    value: premium_conjugate(premium, gamma),
                    in_domain: true,
                })
            } else {
                Ok(ConjugateValue::outside())
            }
        }
        Friction::DifferentialRates { premium } => {
            let c = zeta.mean();
            let flat = zeta.iter().all(|z| (z - c).abs() <= DOMAIN_TOL);
            let spread = market.r_borrow() - market.r();
            if flat && c >= -DOMAIN_TOL && c <= spread + DOMAIN_TOL {
                Ok(ConjugateValue {
                    value: c + premium_conjugate(premium, gamma),
                    in_domain: true,
                })
            } else {
                Ok(ConjugateValue::outside())
            }
        }
        Friction::LargeInvestor {
            premium,
            m_plus,
            m_minus,
        } => {
            let z = -zeta[0];
            if z >= m_plus - DOMAIN_TOL && z <= m_minus + DOMAIN_TOL {
                Ok(ConjugateValue {
                    value: premium_conjugate(premium, gamma),
                    in_domain: true,
                })
            } else {
                Ok(ConjugateValue::outside())
            }
        }
        Friction::SmoothG { premium, g } => {
            // −g′ is increasing; solve −g′(π*) = ζ.
            let z = zeta[0];
            match invert_increasing(|p| Ok(-g.d1(p)), z, 0.0, 1e-13) {
                Ok(root) => Ok(ConjugateValue {
                    value: g.value(root.x) + z * root.x + premium_conjugate(premium, gamma),
                    in_domain: true,
                }),
                Err(Error::Range { .. }) => Ok(ConjugateValue::outside()),
                Err(e) => Err(e),
            }
        }
        Friction::PortfolioPremium { .. } => Err(Error::Unsupported(
            "the portfolio-dependent premium has no closed-form conjugate".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertMethod {
    /// Conjugate duality: `f(π̂,κ̂) + π̂⊤ζ + κ̂γ = f̃(ζ, γ)`.
    Conjugate,
    /// KKT stationarity plus a local second-order check.
    Stationarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    pub method: CertMethod,
    /// `f̃(ζ, γ)`; NaN for the stationarity method.
    pub conjugate_value: f64,
    /// `f(π̂,κ̂) + π̂⊤ζ + κ̂γ`
    pub direct_value: f64,
    pub residual: f64,
    pub in_domain: bool,
    pub tol: f64,
    pub passed: bool,
}

pub fn certify(problem: &Problem, policy: &Policy, tol: f64) -> Result<Certificate> {
    let eval = eval_objective(problem, policy)?;
    certify_eval(problem, policy, &eval, tol)
}

/// As [`certify`], reusing an objective evaluation at the same policy.
pub fn certify_eval(problem: &Problem, policy: &Policy, eval: &ObjectiveEval, tol: f64) -> Result<Certificate> {
    if let Friction::PortfolioPremium { q } = &problem.friction {
        let m = &problem.market;
        let (pi, kappa) = (policy.pi[0], policy.kappa);
        let g_pi = eval.grad_pi[0] - (1.0 - kappa) * q.d1(pi);
        let g_kappa = eval.dh_dkappa + q.value(pi);
        let kappa_res = if kappa <= 0.0 {
            g_kappa.max(0.0)
        } else if kappa >= 1.0 {
            (-g_kappa).max(0.0)
        } else {
            g_kappa.abs()
        };
        let residual = g_pi.abs().max(kappa_res);
        let eta = problem.eta();
        // A divergent moment at the κ = 1 corner is unbounded curvature.
        let curv = if problem.lambda() > 0.0 {
            problem.functionals().psi_dkappa(kappa, eta).unwrap_or(f64::INFINITY)
        } else {
            0.0
        };
        let (sigma, b, rho) = (m.sigma_scalar(), m.b(), m.rho_scalar());
        let lhs = (q.d1(pi) + eta * rho * b * sigma).powi(2);
        let rhs = ((1.0 - kappa) * q.d2(pi) + eta * sigma * sigma) * eta * (b * b + problem.lambda() * curv);
        let in_domain = lhs < rhs;
        return Ok(Certificate {
            method: CertMethod::Stationarity,
            conjugate_value: f64::NAN,
            direct_value: eval.value,
            residual,
            in_domain,
            tol,
            passed: in_domain && residual <= tol,
        });
    }

    let zeta = &eval.grad_pi;
    let gamma = eval.dh_dkappa;
    let conj = conjugate(&problem.friction, &problem.market, zeta, gamma)?;
    let direct = eval.f_value + policy.pi.dot(zeta) + policy.kappa * gamma;
    let residual = conj.value - direct;
    Ok(Certificate {
        method: CertMethod::Conjugate,
        conjugate_value: conj.value,
        direct_value: direct,
        residual,
        in_domain: conj.in_domain,
        tol,
        passed: conj.in_domain && residual.abs() <= tol,
    })
}

/// Value function `v(t, x)` for a constant optimal policy with objective
/// `f + H` recorded in `optimal`.
///
/// For η ≠ 1, `v = θ(t) x^{1−η}/(1−η)` with
/// `θ(t) = exp([(1−η)(r + f + H) − λ](T − t))`; for η = 1,
/// `v = ln x + (r + f + H)(T − t)`.
pub fn value_function(t: f64, x: f64, horizon: f64, optimal: &ObjectiveEval, problem: &Problem) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("wealth x = {x} must be positive")));
    }
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, {horizon}]")));
    }
    let tau = horizon - t;
    let rate = problem.market.r() + optimal.value;
    let eta = problem.eta();
    if problem.utility.is_log() {
        return Ok(x.ln() + rate * tau);
    }
    let theta = (((1.0 - eta) * rate - problem.lambda()) * tau).exp();
    Ok(theta * x.powf(1.0 - eta) / (1.0 - eta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpDist, JumpLaw, MarketModel, Utility};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn merton_problem(eta: f64) -> Problem {
        let sigma = DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.08, 0.32 * (1.0f64 - 0.0625).sqrt()]);
        let market = MarketModel::new(
            DVector::from_vec(vec![0.08, 0.10]),
            sigma,
            0.02,
            0.02,
            DVector::from_vec(vec![0.2, -0.3]),
            0.0,
        );
        Problem::new(
            market,
            JumpLaw::new(0.0, JumpDist::beta(2.0, 8.0)),
            Friction::Frictionless {
                premium: PremiumSchedule::Linear { q: 0.0 },
            },
            Utility::new(eta),
        )
        .unwrap()
    }

    fn c2(rho: f64, q: f64) -> Problem {
        Problem::new(
            MarketModel::scalar(0.16, 0.30, 0.03, 0.09, rho, 0.4),
            JumpLaw::new(0.15, JumpDist::beta(12.0, 8.0)),
            Friction::DifferentialRates {
                premium: PremiumSchedule::Linear { q },
            },
            Utility::new(4.0),
        )
        .unwrap()
    }

    #[test]
    fn merton_gradient_vanishes() {
        let p = merton_problem(3.0);
        let pi = p.market.merton(3.0);
        let e = eval_objective(&p, &Policy::new(pi.clone(), 0.4)).unwrap();
        assert!(e.grad_pi.amax() < 1e-15);
        assert_eq!(e.value, e.f_value + e.h_value);
        let cert = certify(&p, &Policy::new(pi.clone(), 1.0), 1e-9).unwrap();
        assert!(cert.passed, "{cert:?}");
        assert!(cert.residual.abs() < 1e-15);
        let mut bumped = pi;
        bumped[0] += 0.1;
        let cert = certify(&p, &Policy::new(bumped, 1.0), 1e-9).unwrap();
        assert!(!cert.passed);
    }

    #[test]
    fn zero_policy_values() {
        let p = c2(0.1, 0.2);
        let e = eval_objective(&p, &Policy::scalar(0.0, 0.0)).unwrap();
        assert_relative_eq!(e.h_value, 0.15 * -1.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(e.dh_dkappa, -0.15 * 0.6, max_relative = 1e-14);
    }

    #[test]
    fn c2_boundary_partial_matches_premium_slope() {
        // At the threshold correlation the κ-derivative equals p′(0) = −q.
        let rho: f64 = (0.15 * 0.6 - 0.2) * 0.3 / (0.4 * 0.13);
        assert!((rho + 0.6346).abs() < 1e-4);
        let pi = 0.13 / (4.0 * 0.09);
        let e = eval_objective(&c2(rho, 0.2), &Policy::scalar(pi, 0.0)).unwrap();
        assert_relative_eq!(e.dh_dkappa, -0.2, max_relative = 1e-12);
        assert_relative_eq!(4.0 * 0.4 * rho * 0.3 * pi, -0.11, max_relative = 1e-12);
    }

    #[test]
    fn linear_premium_conjugate() {
        let p = PremiumSchedule::Linear { q: 0.3 };
        assert_eq!(premium_conjugate(&p, -0.5), -0.3);
        assert_eq!(premium_conjugate(&p, -0.3), -0.3);
        assert_eq!(premium_conjugate(&p, 0.1), 0.1);
    }

    #[test]
    fn power_premium_conjugate_interior() {
        // p = q(1−κ)², p′ = −2q(1−κ); γ = −q gives κ* = ½ and value −q/4 − q/2.
        let p = PremiumSchedule::Power { q: 0.4, delta: 2.0 };
        assert_relative_eq!(premium_conjugate(&p, -0.4), -0.1 - 0.2, max_relative = 1e-12);
        assert_eq!(premium_conjugate(&p, -1.0), -0.4);
        assert_eq!(premium_conjugate(&p, 0.2), 0.2);
    }

    #[test]
    fn diff_rates_domain() {
        let m = MarketModel::scalar(0.1, 0.2, 0.02, 0.06, 0.0, 0.0);
        let f = Friction::DifferentialRates {
            premium: PremiumSchedule::Linear { q: 0.3 },
        };
        let c = conjugate(&f, &m, &DVector::from_element(1, 0.0), -0.3).unwrap();
        assert!(c.in_domain);
        assert_eq!(c.value, -0.3);
        let m2 = MarketModel::new(
            DVector::from_vec(vec![0.1, 0.1]),
            DMatrix::identity(2, 2),
            0.02,
            0.06,
            DVector::zeros(2),
            0.0,
        );
        let c = conjugate(&f, &m2, &DVector::from_vec(vec![0.02, 0.05]), 0.0).unwrap();
        assert!(!c.in_domain);
        assert!(c.value.is_infinite());
    }

    #[test]
    fn large_investor_domain() {
        let m = MarketModel::scalar(0.1, 0.2, 0.02, 0.02, 0.0, 0.0);
        let f = Friction::LargeInvestor {
            premium: PremiumSchedule::Linear { q: 0.3 },
            m_plus: -0.01,
            m_minus: 0.02,
        };
        let c = conjugate(&f, &m, &DVector::from_element(1, 0.005), 0.2).unwrap();
        assert!(c.in_domain);
        assert_eq!(c.value, 0.2);
        let c = conjugate(&f, &m, &DVector::from_element(1, 0.05), 0.2).unwrap();
        assert!(!c.in_domain);
    }

    #[test]
    fn value_function_terminal_condition() {
        let p = c2(0.1, 0.2);
        let e = eval_objective(&p, &Policy::scalar(0.3, 0.5)).unwrap();
        assert_relative_eq!(value_function(1.0, 2.0, 1.0, &e, &p).unwrap(), 2f64.powf(-3.0) / -3.0, max_relative = 1e-15);
        assert!(value_function(0.0, 0.0, 1.0, &e, &p).is_err());
        let log = p.with_eta(1.0).unwrap();
        let e = eval_objective(&log, &Policy::scalar(0.3, 0.5)).unwrap();
        assert_eq!(value_function(1.0, 3.0, 1.0, &e, &log).unwrap(), 3f64.ln());
    }
}
