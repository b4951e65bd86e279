//! Regime solvers for the optimal policy `(π̂, κ̂)`.
//!
//! Each solver follows the case analysis for its friction, labels the case
//! it lands in and attaches an optimality certificate. [`solve`] dispatches
//! on the friction of a [`Problem`].

mod diff_rates;
mod large_investor;
mod mutual_fund;
mod portfolio_premium;
mod smooth_g;

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{certify_eval, eval_objective, Certificate, ObjectiveEval, DEFAULT_CERT_TOL};
use crate::model::{Friction, Policy, Problem};
use crate::roots::{bisect, Root, DEFAULT_MAX_ITER};

pub use diff_rates::{
    corner_tests, kappa_of_xi, pi_of_xi, solve_diff_rates, solve_frictionless, threshold_etas, CornerTest,
};
pub use large_investor::solve_large_investor;
pub use mutual_fund::{mutual_fund_combine, CaseFamily, MutualFund};
pub use portfolio_premium::{check_soc, solve_portfolio_premium, solve_portfolio_premium_any, PremiumInterval};
pub use smooth_g::solve_smooth_g;

/// Ties `|h| ≤ TIE_TOL` at an endpoint are resolved toward the corner.
pub const TIE_TOL: f64 = 1e-12;
/// Root tolerance for κ.
pub const KAPPA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Roman {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
}

impl fmt::Display for Roman {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Roman::I => "i",
            Roman::II => "ii",
            Roman::III => "iii",
            Roman::IV => "iv",
            Roman::V => "v",
            Roman::VI => "vi",
            Roman::VII => "vii",
        };
        f.write_str(s)
    }
}

/// Where the retained fraction sits in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Retention {
    Interior,
    /// `κ̂ = 0`, full insurance.
    Zero,
    /// `κ̂ = 1`, no insurance.
    Full,
}

impl fmt::Display for Retention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Retention::Interior => "interior",
            Retention::Zero => "zero",
            Retention::Full => "full",
        })
    }
}

/// Regime tag of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CaseLabel {
    Frictionless(Retention),
    DiffRates(Roman),
    /// 1 interior κ̂, 2 full insurance, 3 no insurance.
    SmoothG(u8),
    Large(Roman),
    PortfolioPremium(Retention),
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseLabel::Frictionless(r) => write!(f, "Frictionless-{r}"),
            CaseLabel::DiffRates(c) => write!(f, "DiffRates-{c}"),
            CaseLabel::SmoothG(n) => write!(f, "SmoothG-{n}"),
            CaseLabel::Large(c) => write!(f, "Large-{c}"),
            CaseLabel::PortfolioPremium(r) => write!(f, "PortfolioPremium-{r}"),
        }
    }
}

/// Allocation family i/ii/iii crossed with the κ regime, as in the
/// differential-rates and large-investor case lists.
pub(crate) fn roman(family: u8, retention: Retention) -> Roman {
    match (family, retention) {
        (3, _) => Roman::III,
        (1, Retention::Interior) => Roman::I,
        (2, Retention::Interior) => Roman::II,
        (1, Retention::Zero) => Roman::IV,
        (2, Retention::Zero) => Roman::V,
        (1, Retention::Full) => Roman::VI,
        (_, _) => Roman::VII,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootLog {
    pub name: &'static str,
    pub iterations: usize,
    pub residual: f64,
}

impl RootLog {
    pub(crate) fn new(name: &'static str, root: &Root) -> Self {
        RootLog {
            name,
            iterations: root.iterations,
            residual: root.residual,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub policy: Policy,
    pub case: CaseLabel,
    /// Shadow rate ξ* (differential rates) or price impact m* (large investor).
    pub xi_star: Option<f64>,
    pub objective: ObjectiveEval,
    pub certificate: Certificate,
    pub roots: Vec<RootLog>,
    /// Grid-oracle best value minus solver value, when an oracle was run.
    pub oracle_gap: Option<f64>,
}

/// Flat, serialisable view of a [`SolveReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub pi: Vec<f64>,
    pub pi_sum: f64,
    pub kappa: f64,
    pub case_label: String,
    pub xi_star: Option<f64>,
    pub objective: f64,
    pub cert_residual: f64,
    pub certified: bool,
}

impl SolveReport {
    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            pi: self.policy.pi.iter().copied().collect(),
            pi_sum: self.policy.pi.sum(),
            kappa: self.policy.kappa,
            case_label: self.case.to_string(),
            xi_star: self.xi_star,
            objective: self.objective.value,
            cert_residual: self.certificate.residual,
            certified: self.certificate.passed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub cert_tol: f64,
    /// Run a coarse grid oracle inside the portfolio-premium solver.
    pub oracle_check: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            cert_tol: DEFAULT_CERT_TOL,
            oracle_check: true,
        }
    }
}

pub fn solve(problem: &Problem) -> Result<SolveReport> {
    solve_with(problem, &SolveOptions::default())
}

pub fn solve_with(problem: &Problem, opts: &SolveOptions) -> Result<SolveReport> {
    match &problem.friction {
        Friction::Frictionless { .. } => solve_frictionless(problem, opts),
        Friction::DifferentialRates { .. } => solve_diff_rates(problem, opts),
        Friction::SmoothG { .. } => solve_smooth_g(problem, opts),
        Friction::LargeInvestor { .. } => solve_large_investor(problem, opts),
        Friction::PortfolioPremium { .. } => solve_portfolio_premium_any(problem, opts),
    }
}

/// Root of a strictly decreasing κ-condition `h` on `[0, κ_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaSolution {
    pub kappa: f64,
    pub retention: Retention,
    pub root: Option<Root>,
}

pub(crate) fn solve_kappa<F>(problem: &Problem, mut h: F) -> Result<KappaSolution>
where
    F: FnMut(f64) -> Result<f64>,
{
    if h(0.0)? <= TIE_TOL {
        return Ok(KappaSolution {
            kappa: 0.0,
            retention: Retention::Zero,
            root: None,
        });
    }
    let upper = problem.kappa_upper();
    if h(upper)? >= -TIE_TOL {
        return Ok(KappaSolution {
            kappa: upper,
            retention: Retention::Full,
            root: None,
        });
    }
    let root = bisect(&mut h, 0.0, upper, KAPPA_TOL, DEFAULT_MAX_ITER)?;
    Ok(KappaSolution {
        kappa: root.x,
        retention: Retention::Interior,
        root: Some(root),
    })
}

/// Evaluates and certifies a candidate; fails with `NoSolution` if the
/// certificate does not pass.
pub(crate) fn finish(
    problem: &Problem,
    policy: Policy,
    case: CaseLabel,
    xi_star: Option<f64>,
    roots: Vec<RootLog>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let objective = eval_objective(problem, &policy)?;
    let certificate = certify_eval(problem, &policy, &objective, opts.cert_tol)?;
    if !certificate.passed {
        return Err(Error::NoSolution(format!(
            "{case} candidate pi = {:?}, kappa = {} fails certification: residual {:e}, in_domain {}",
            policy.pi.as_slice(),
            policy.kappa,
            certificate.residual,
            certificate.in_domain
        )));
    }
    Ok(SolveReport {
        policy,
        case,
        xi_star,
        objective,
        certificate,
        roots,
        oracle_gap: None,
    })
}

/// Corner conditions on `∂_κH` at a solution: `≤ p′(0)` at κ̂ = 0 and
/// `≥ p′(1)` at κ̂ = 1.
pub(crate) fn check_corner(problem: &Problem, report: &SolveReport) -> Result<()> {
    let Some(premium) = problem.friction.premium() else {
        return Ok(());
    };
    let k = report.policy.kappa;
    let g = report.objective.dh_dkappa;
    let slack = 1e-9;
    if k == 0.0 && g > premium.slope(0.0) + slack {
        return Err(Error::NoSolution(format!(
            "kappa = 0 corner violated: dH/dkappa = {g} > p'(0) = {}",
            premium.slope(0.0)
        )));
    }
    if k == 1.0 && g < premium.slope(1.0) - slack {
        return Err(Error::NoSolution(format!(
            "kappa = 1 corner violated: dH/dkappa = {g} < p'(1) = {}",
            premium.slope(1.0)
        )));
    }
    Ok(())
}
