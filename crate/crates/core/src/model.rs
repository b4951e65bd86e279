//! Domain types shared by the solvers, the grid oracle and the simulator.
//!
//! Everything here is immutable after construction. [`Problem`] bundles a
//! validated market, jump law, friction regime and utility together with the
//! memoised jump functionals the solvers evaluate repeatedly.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jumps::JumpFunctionals;

/// Default bound on the condition number of the volatility matrix.
pub const DEFAULT_CONDITION_BOUND: f64 = 1e12;

/// Risky-asset market plus the diffusive part of the background risk.
#[derive(Debug, Clone)]
pub struct MarketModel {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    r: f64,
    r_borrow: f64,
    rho: DVector<f64>,
    b: f64,
    derived: Option<Derived>,
    condition: f64,
}

#[derive(Debug, Clone)]
struct Derived {
    sigma_inv: DMatrix<f64>,
    cov_inv: DMatrix<f64>,
    /// `(σ⊤)⁻¹ρ`
    hedge: DVector<f64>,
    /// `σρ`
    sigma_rho: DVector<f64>,
}

impl MarketModel {
    pub fn new(
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        r: f64,
        r_borrow: f64,
        rho: DVector<f64>,
        b: f64,
    ) -> Self {
        let condition = condition_number(&sigma);
        let derived = if sigma.is_square() && condition.is_finite() {
            sigma.clone().try_inverse().map(|sigma_inv| {
                let cov_inv = sigma_inv.transpose() * &sigma_inv;
                let hedge = if rho.len() == sigma.nrows() {
                    sigma_inv.transpose() * &rho
                } else {
                    DVector::zeros(sigma.nrows())
                };
                let sigma_rho = if rho.len() == sigma.ncols() {
                    &sigma * &rho
                } else {
                    DVector::zeros(sigma.nrows())
                };
                Derived {
                    sigma_inv,
                    cov_inv,
                    hedge,
                    sigma_rho,
                }
            })
        } else {
            None
        };
        MarketModel {
            mu,
            sigma,
            r,
            r_borrow,
            rho,
            b,
            derived,
            condition,
        }
    }

    /// One risky asset with volatility `sigma` and correlation `rho`.
    pub fn scalar(mu: f64, sigma: f64, r: f64, r_borrow: f64, rho: f64, b: f64) -> Self {
        Self::new(
            DVector::from_element(1, mu),
            DMatrix::from_element(1, 1, sigma),
            r,
            r_borrow,
            DVector::from_element(1, rho),
            b,
        )
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
    /// Lending rate.
    pub fn r(&self) -> f64 {
        self.r
    }
    /// Borrowing rate.
    pub fn r_borrow(&self) -> f64 {
        self.r_borrow
    }
    pub fn rho(&self) -> &DVector<f64> {
        &self.rho
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    fn derived(&self) -> &Derived {
        self.derived
            .as_ref()
            .expect("market model used before validation: sigma is singular")
    }

    pub fn sigma_inv(&self) -> &DMatrix<f64> {
        &self.derived().sigma_inv
    }
    /// `(σσ⊤)⁻¹`
    pub fn cov_inv(&self) -> &DMatrix<f64> {
        &self.derived().cov_inv
    }
    /// `(σ⊤)⁻¹ρ`, the direction of the hedging demand.
    pub fn hedge_direction(&self) -> &DVector<f64> {
        &self.derived().hedge
    }
    /// `σρ`
    pub fn sigma_rho(&self) -> &DVector<f64> {
        &self.derived().sigma_rho
    }

    /// Scalar volatility for single-asset regimes.
    pub fn sigma_scalar(&self) -> f64 {
        self.sigma[(0, 0)]
    }
    pub fn mu_scalar(&self) -> f64 {
        self.mu[0]
    }
    pub fn rho_scalar(&self) -> f64 {
        self.rho[0]
    }

    pub fn with_rho(&self, rho: DVector<f64>) -> Self {
        Self::new(
            self.mu.clone(),
            self.sigma.clone(),
            self.r,
            self.r_borrow,
            rho,
            self.b,
        )
    }
    pub fn with_rates(&self, r: f64, r_borrow: f64) -> Self {
        Self::new(
            self.mu.clone(),
            self.sigma.clone(),
            r,
            r_borrow,
            self.rho.clone(),
            self.b,
        )
    }
    pub fn with_mu(&self, mu: DVector<f64>) -> Self {
        Self::new(
            mu,
            self.sigma.clone(),
            self.r,
            self.r_borrow,
            self.rho.clone(),
            self.b,
        )
    }
    pub fn with_b(&self, b: f64) -> Self {
        Self::new(
            self.mu.clone(),
            self.sigma.clone(),
            self.r,
            self.r_borrow,
            self.rho.clone(),
            b,
        )
    }

    /// Frictionless Merton proportion `(σσ⊤)⁻¹(μ − r1)/η`.
    pub fn merton(&self, eta: f64) -> DVector<f64> {
        let excess = self.mu.add_scalar(-self.r);
        self.cov_inv() * excess / eta
    }
}

fn condition_number(sigma: &DMatrix<f64>) -> f64 {
    if !sigma.is_square() || sigma.nrows() == 0 || sigma.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let sv = sigma.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Distribution of the relative jump loss `Y`.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpDist {
    Beta { alpha: f64, beta: f64 },
    Discrete { points: Vec<f64>, weights: Vec<f64> },
}

impl JumpDist {
    pub fn beta(alpha: f64, beta: f64) -> Self {
        JumpDist::Beta { alpha, beta }
    }

    /// Single atom at `y`.
    pub fn atom(y: f64) -> Self {
        JumpDist::Discrete {
            points: vec![y],
            weights: vec![1.0],
        }
    }

    /// Upper bound on admissible η for `κ = 1` functionals, if any.
    pub fn beta_param(&self) -> Option<f64> {
        match self {
            JumpDist::Beta { beta, .. } => Some(*beta),
            JumpDist::Discrete { .. } => None,
        }
    }
}

/// Poisson arrival intensity and jump-size distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpLaw {
    pub lambda: f64,
    pub dist: JumpDist,
}

impl JumpLaw {
    pub fn new(lambda: f64, dist: JumpDist) -> Self {
        JumpLaw { lambda, dist }
    }
}

/// A convex, differentiable premium schedule supplied by the caller.
pub trait ConvexPremium: Send + Sync + fmt::Debug {
    fn value(&self, kappa: f64) -> f64;
    fn slope(&self, kappa: f64) -> f64;
}

/// Insurance premium rate `p(κ)` paid for covering the fraction `1 − κ`.
#[derive(Debug, Clone)]
pub enum PremiumSchedule {
    /// `p(κ) = q(1 − κ)`
    Linear { q: f64 },
    /// `p(κ) = q(1 − κ)^δ`
    Power { q: f64, delta: f64 },
    Tabulated(Arc<dyn ConvexPremium>),
}

impl PremiumSchedule {
    pub fn value(&self, kappa: f64) -> f64 {
        match self {
            PremiumSchedule::Linear { q } => q * (1.0 - kappa),
            PremiumSchedule::Power { q, delta } => q * (1.0 - kappa).max(0.0).powf(*delta),
            PremiumSchedule::Tabulated(p) => p.value(kappa),
        }
    }

    /// `p′(κ)`
    pub fn slope(&self, kappa: f64) -> f64 {
        match self {
            PremiumSchedule::Linear { q } => -q,
            PremiumSchedule::Power { q, delta } => {
                if *delta == 1.0 {
                    -q
                } else {
                    -q * delta * (1.0 - kappa).max(0.0).powf(delta - 1.0)
                }
            }
            PremiumSchedule::Tabulated(p) => p.slope(kappa),
        }
    }

    /// Premium rate scale `q` for the parametric schedules.
    pub fn rate(&self) -> Option<f64> {
        match self {
            PremiumSchedule::Linear { q } | PremiumSchedule::Power { q, .. } => Some(*q),
            PremiumSchedule::Tabulated(_) => None,
        }
    }

    pub fn with_rate(&self, q: f64) -> Option<Self> {
        match self {
            PremiumSchedule::Linear { .. } => Some(PremiumSchedule::Linear { q }),
            PremiumSchedule::Power { delta, .. } => Some(PremiumSchedule::Power { q, delta: *delta }),
            PremiumSchedule::Tabulated(_) => None,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, PremiumSchedule::Linear { .. })
            || matches!(self, PremiumSchedule::Power { delta, .. } if *delta == 1.0)
    }
}

/// Smooth, strictly concave margin payment `g(π)` for a single asset.
pub trait MarginFunction: Send + Sync + fmt::Debug {
    fn value(&self, pi: f64) -> f64;
    fn d1(&self, pi: f64) -> f64;
    fn d2(&self, pi: f64) -> f64;
}

/// `g(π) = −cπ²`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticMargin {
    pub c: f64,
}

impl MarginFunction for QuadraticMargin {
    fn value(&self, pi: f64) -> f64 {
        -self.c * pi * pi
    }
    fn d1(&self, pi: f64) -> f64 {
        -2.0 * self.c * pi
    }
    fn d2(&self, _pi: f64) -> f64 {
        -2.0 * self.c
    }
}

/// Softplus-smoothed borrowing spread plus a small quadratic holding cost:
/// `g(π) = −s·w·ln(1 + e^{(π−1)/w}) − cπ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothSpread {
    pub spread: f64,
    pub width: f64,
    pub c: f64,
}

impl MarginFunction for SmoothSpread {
    fn value(&self, pi: f64) -> f64 {
        let z = (pi - 1.0) / self.width;
        let softplus = if z > 30.0 { z } else { z.exp().ln_1p() };
        -self.spread * self.width * softplus - self.c * pi * pi
    }
    fn d1(&self, pi: f64) -> f64 {
        let z = (pi - 1.0) / self.width;
        let logistic = 1.0 / (1.0 + (-z).exp());
        -self.spread * logistic - 2.0 * self.c * pi
    }
    fn d2(&self, pi: f64) -> f64 {
        let z = (pi - 1.0) / self.width;
        let logistic = 1.0 / (1.0 + (-z).exp());
        -self.spread * logistic * (1.0 - logistic) / self.width - 2.0 * self.c
    }
}

/// Portfolio-dependent premium rate `q(π)` for `f(π, κ) = −(1 − κ)q(π)`.
pub trait PremiumRate: Send + Sync + fmt::Debug {
    fn value(&self, pi: f64) -> f64;
    fn d1(&self, pi: f64) -> f64;
    fn d2(&self, pi: f64) -> f64;
    /// `sup |q′|`, when known in closed form.
    fn slope_bound(&self) -> Option<f64> {
        None
    }
}

/// `q(π) = base + C(√(π² + A²) − A)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolicRate {
    pub base: f64,
    pub c: f64,
    pub a: f64,
}

impl PremiumRate for HyperbolicRate {
    fn value(&self, pi: f64) -> f64 {
        self.base + self.c * (pi.hypot(self.a) - self.a)
    }
    fn d1(&self, pi: f64) -> f64 {
        self.c * pi / pi.hypot(self.a)
    }
    fn d2(&self, pi: f64) -> f64 {
        let s = pi.hypot(self.a);
        self.c * self.a * self.a / (s * s * s)
    }
    fn slope_bound(&self) -> Option<f64> {
        Some(self.c.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRate {
    pub q: f64,
}

impl PremiumRate for ConstantRate {
    fn value(&self, _pi: f64) -> f64 {
        self.q
    }
    fn d1(&self, _pi: f64) -> f64 {
        0.0
    }
    fn d2(&self, _pi: f64) -> f64 {
        0.0
    }
    fn slope_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Which nonlinear friction `f(π, κ)` acts on the wealth drift.
#[derive(Debug, Clone)]
pub enum Friction {
    /// `f = −p(κ)`
    Frictionless { premium: PremiumSchedule },
    /// `f = g(π) − p(κ)` with smooth strictly concave `g`, one asset.
    SmoothG {
        premium: PremiumSchedule,
        g: Arc<dyn MarginFunction>,
    },
    /// `f = −(R − r)(π⊤1 − 1)⁺ − p(κ)`
    DifferentialRates { premium: PremiumSchedule },
    /// `f = π(m⁺1{π≥0} + m⁻1{π<0}) − p(κ)`, one asset.
    LargeInvestor {
        premium: PremiumSchedule,
        m_plus: f64,
        m_minus: f64,
    },
    /// `f = −(1 − κ)q(π)`, one asset.
    PortfolioPremium { q: Arc<dyn PremiumRate> },
}

impl Friction {
    pub fn premium(&self) -> Option<&PremiumSchedule> {
        match self {
            Friction::Frictionless { premium }
            | Friction::SmoothG { premium, .. }
            | Friction::DifferentialRates { premium }
            | Friction::LargeInvestor { premium, .. } => Some(premium),
            Friction::PortfolioPremium { .. } => None,
        }
    }

    pub fn with_premium(&self, premium: PremiumSchedule) -> Option<Self> {
        Some(match self {
            Friction::Frictionless { .. } => Friction::Frictionless { premium },
            Friction::SmoothG { g, .. } => Friction::SmoothG {
                premium,
                g: g.clone(),
            },
            Friction::DifferentialRates { .. } => Friction::DifferentialRates { premium },
            Friction::LargeInvestor {
                m_plus, m_minus, ..
            } => Friction::LargeInvestor {
                premium,
                m_plus: *m_plus,
                m_minus: *m_minus,
            },
            Friction::PortfolioPremium { .. } => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Friction::Frictionless { .. } => "frictionless",
            Friction::SmoothG { .. } => "smooth_g",
            Friction::DifferentialRates { .. } => "differential_rates",
            Friction::LargeInvestor { .. } => "large_investor",
            Friction::PortfolioPremium { .. } => "portfolio_premium",
        }
    }

    /// `f(π, κ)`; the borrowing spread is read from `market`.
    pub fn value(&self, market: &MarketModel, pi: &DVector<f64>, kappa: f64) -> f64 {
        self.value_at(market, pi.as_slice(), kappa)
    }

    /// As [`Friction::value`] on a plain slice of weights.
    pub fn value_at(&self, market: &MarketModel, pi: &[f64], kappa: f64) -> f64 {
        match self {
            Friction::Frictionless { premium } => -premium.value(kappa),
            Friction::SmoothG { premium, g } => g.value(pi[0]) - premium.value(kappa),
            Friction::DifferentialRates { premium } => {
                let spread = market.r_borrow() - market.r();
                let total: f64 = pi.iter().sum();
                -spread * (total - 1.0).max(0.0) - premium.value(kappa)
            }
            Friction::LargeInvestor {
                premium,
                m_plus,
                m_minus,
            } => {
                let p = pi[0];
                let impact = if p >= 0.0 { *m_plus } else { *m_minus };
                p * impact - premium.value(kappa)
            }
            Friction::PortfolioPremium { q } => -(1.0 - kappa) * q.value(pi[0]),
        }
    }

    fn single_asset_only(&self) -> bool {
        matches!(
            self,
            Friction::SmoothG { .. } | Friction::LargeInvestor { .. } | Friction::PortfolioPremium { .. }
        )
    }
}

/// CRRA preferences with relative risk aversion η (η = 1 is log utility).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Utility {
    pub eta: f64,
}

impl Utility {
    pub fn new(eta: f64) -> Self {
        Utility { eta }
    }

    pub fn is_log(&self) -> bool {
        self.eta == 1.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.is_log() {
            x.ln()
        } else {
            x.powf(1.0 - self.eta) / (1.0 - self.eta)
        }
    }
}

/// Constant control: risky weights `pi` and retained background-risk fraction `kappa`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub pi: DVector<f64>,
    pub kappa: f64,
}

impl Policy {
    pub fn new(pi: DVector<f64>, kappa: f64) -> Self {
        Policy { pi, kappa }
    }

    pub fn scalar(pi: f64, kappa: f64) -> Self {
        Policy {
            pi: DVector::from_element(1, pi),
            kappa,
        }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.kappa) && self.pi.iter().all(|v| v.is_finite())
    }

    /// Componentwise max distance over `(π, κ)`.
    pub fn max_distance(&self, other: &Policy) -> f64 {
        let dpi = (&self.pi - &other.pi).amax();
        dpi.max((self.kappa - other.kappa).abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of every model invariant check.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    fn check(&mut self, name: &'static str, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckResult {
            name,
            passed,
            detail: detail.into(),
        });
    }

    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let failed: Vec<_> = self.failures().collect();
        if failed.is_empty() {
            return write!(f, "all {} checks passed", self.checks.len());
        }
        for (i, c) in failed.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{}: {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

const GRID_POINTS: usize = 101;

/// Checks every invariant of the model inputs. Never fails; the report
/// carries the diagnostics.
pub fn validate_model(
    market: &MarketModel,
    jumps: &JumpLaw,
    friction: &Friction,
    utility: &Utility,
) -> ValidationReport {
    validate_with_bound(market, jumps, friction, utility, DEFAULT_CONDITION_BOUND)
}

pub fn validate_with_bound(
    market: &MarketModel,
    jumps: &JumpLaw,
    friction: &Friction,
    utility: &Utility,
    condition_bound: f64,
) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let d = market.dim();

    rep.check("dimension", d >= 1, format!("d = {d}"));
    let shapes_ok = market.sigma.nrows() == d && market.sigma.ncols() == d && market.rho.len() == d;
    rep.check(
        "shapes",
        shapes_ok,
        format!(
            "mu has {} entries, sigma is {}x{}, rho has {} entries",
            d,
            market.sigma.nrows(),
            market.sigma.ncols(),
            market.rho.len()
        ),
    );
    let finite = market.mu.iter().chain(market.sigma.iter()).chain(market.rho.iter()).all(|v| v.is_finite())
        && [market.r, market.r_borrow, market.b].iter().all(|v| v.is_finite());
    rep.check("finite", finite, "all market parameters must be finite");
    let cond = market.condition;
    rep.check(
        "sigma_invertible",
        shapes_ok && cond <= condition_bound && market.derived.is_some(),
        format!("condition number {cond:.3e} (bound {condition_bound:.1e})"),
    );
    rep.check(
        "rates",
        market.r_borrow >= market.r,
        format!("R = {} must be >= r = {}", market.r_borrow, market.r),
    );
    let rho_box = market.rho.iter().all(|v| (-1.0..=1.0).contains(v));
    let rho_norm = market.rho.norm();
    rep.check(
        "rho",
        rho_box && rho_norm <= 1.0 + 1e-12,
        format!("components in [-1, 1] and |rho| = {rho_norm} <= 1"),
    );
    rep.check("b", market.b >= 0.0, format!("b = {} must be >= 0", market.b));

    rep.check(
        "lambda",
        jumps.lambda >= 0.0 && jumps.lambda.is_finite(),
        format!("lambda = {} must be >= 0", jumps.lambda),
    );
    match &jumps.dist {
        JumpDist::Beta { alpha, beta } => {
            rep.check(
                "jump_law",
                *alpha > 0.0 && *beta > 0.0 && alpha.is_finite() && beta.is_finite(),
                format!("Beta({alpha}, {beta}) requires alpha > 0, beta > 0"),
            );
        }
        JumpDist::Discrete { points, weights } => {
            let support = !points.is_empty()
                && points.len() == weights.len()
                && points.iter().all(|y| *y > 0.0 && *y < 1.0);
            rep.check(
                "jump_law",
                support,
                format!("discrete support {points:?} must lie strictly inside (0, 1)"),
            );
            let total: f64 = weights.iter().sum();
            rep.check(
                "jump_weights",
                weights.iter().all(|w| *w >= 0.0) && (total - 1.0).abs() <= 1e-12,
                format!("weights sum to {total}"),
            );
        }
    }

    rep.check(
        "eta",
        utility.eta > 0.0 && utility.eta.is_finite(),
        format!("eta = {} must be > 0", utility.eta),
    );

    if friction.single_asset_only() {
        rep.check(
            "single_asset",
            d == 1,
            format!("{} friction requires d = 1, got d = {d}", friction.name()),
        );
    }
    if let Some(premium) = friction.premium() {
        validate_premium(&mut rep, premium);
    }
    let grid = (0..GRID_POINTS).map(|i| -10.0 + 20.0 * i as f64 / (GRID_POINTS - 1) as f64);
    match friction {
        Friction::SmoothG { g, .. } => {
            let worst = grid.map(|p| g.d2(p)).fold(f64::NEG_INFINITY, f64::max);
            rep.check("g_concave", worst < 0.0, format!("max g'' on grid = {worst:e}"));
        }
        Friction::LargeInvestor {
            m_plus, m_minus, ..
        } => {
            rep.check(
                "price_impact",
                m_plus <= m_minus,
                format!("m_plus = {m_plus} must not exceed m_minus = {m_minus}"),
            );
        }
        Friction::PortfolioPremium { q } => {
            let min = grid.map(|p| q.value(p)).fold(f64::INFINITY, f64::min);
            rep.check("q_positive", min > 0.0, format!("min q on grid = {min}"));
        }
        _ => {}
    }
    rep
}

fn validate_premium(rep: &mut ValidationReport, premium: &PremiumSchedule) {
    match premium {
        PremiumSchedule::Linear { q } => {
            rep.check("premium", *q >= 0.0, format!("q = {q} must be >= 0"));
        }
        PremiumSchedule::Power { q, delta } => {
            rep.check(
                "premium",
                *q >= 0.0 && *delta >= 1.0,
                format!("q = {q} >= 0 and delta = {delta} >= 1 required"),
            );
        }
        PremiumSchedule::Tabulated(p) => {
            let at_one = p.value(1.0);
            rep.check("premium", at_one.abs() <= 1e-12, format!("p(1) = {at_one}"));
            let slopes: Vec<f64> = (0..GRID_POINTS)
                .map(|i| p.slope(i as f64 / (GRID_POINTS - 1) as f64))
                .collect();
            let monotone = slopes.windows(2).all(|w| w[1] >= w[0] - 1e-12);
            rep.check("premium_convex", monotone, "p' must be nondecreasing on [0, 1]");
        }
    }
}

/// A validated model: market, jumps, friction and preferences.
#[derive(Debug, Clone)]
pub struct Problem {
    pub market: MarketModel,
    pub jumps: JumpLaw,
    pub friction: Friction,
    pub utility: Utility,
    functionals: Arc<JumpFunctionals>,
}

impl Problem {
    pub fn new(
        market: MarketModel,
        jumps: JumpLaw,
        friction: Friction,
        utility: Utility,
    ) -> Result<Self> {
        let report = validate_model(&market, &jumps, &friction, &utility);
        if !report.is_valid() {
            return Err(Error::Invalid(report));
        }
        let functionals = Arc::new(JumpFunctionals::new(jumps.dist.clone()));
        Ok(Problem {
            market,
            jumps,
            friction,
            utility,
            functionals,
        })
    }

    pub fn functionals(&self) -> &JumpFunctionals {
        &self.functionals
    }

    pub fn eta(&self) -> f64 {
        self.utility.eta
    }

    pub fn lambda(&self) -> f64 {
        self.jumps.lambda
    }

    pub fn dim(&self) -> usize {
        self.market.dim()
    }

    /// Largest κ at which the jump functionals are finite for this η.
    pub fn kappa_upper(&self) -> f64 {
        match self.jumps.dist.beta_param() {
            Some(beta) if self.eta() >= beta => 1.0 - 1e-9,
            _ => 1.0,
        }
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        let mut next = self.clone();
        next.utility = Utility::new(eta);
        next.revalidate()
    }

    pub fn with_market(&self, market: MarketModel) -> Result<Self> {
        let mut next = self.clone();
        next.market = market;
        next.revalidate()
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut next = self.clone();
        next.jumps.lambda = lambda;
        next.revalidate()
    }

    pub fn with_friction(&self, friction: Friction) -> Result<Self> {
        let mut next = self.clone();
        next.friction = friction;
        next.revalidate()
    }

    pub fn with_jump_dist(&self, dist: JumpDist) -> Result<Self> {
        Problem::new(
            self.market.clone(),
            JumpLaw::new(self.jumps.lambda, dist),
            self.friction.clone(),
            self.utility,
        )
    }

    fn revalidate(self) -> Result<Self> {
        let report = validate_model(&self.market, &self.jumps, &self.friction, &self.utility);
        if report.is_valid() {
            Ok(self)
        } else {
            Err(Error::Invalid(report))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_sigma(s: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.32 * s, 0.32 * (1.0 - s * s).sqrt()])
    }

    fn two_asset(sigma: DMatrix<f64>) -> MarketModel {
        MarketModel::new(
            DVector::from_vec(vec![0.08, 0.10]),
            sigma,
            0.02,
            0.06,
            DVector::from_vec(vec![0.2, -0.3]),
            0.4,
        )
    }

    fn linear() -> Friction {
        Friction::DifferentialRates {
            premium: PremiumSchedule::Linear { q: 0.3 },
        }
    }

    #[test]
    fn lower_triangular_sigma_passes() {
        let sigma = reference_sigma(0.25);
        assert!((sigma[(1, 0)] - 0.08).abs() < 1e-15);
        assert!((sigma[(1, 1)] - 0.309_838_667_696_593).abs() < 1e-12);
        let rep = validate_model(
            &two_asset(sigma),
            &JumpLaw::new(0.25, JumpDist::beta(2.0, 8.0)),
            &linear(),
            &Utility::new(1.0),
        );
        assert!(rep.is_valid(), "{rep}");
    }

    #[test]
    fn singular_sigma_fails() {
        let rep = validate_model(
            &two_asset(DMatrix::zeros(2, 2)),
            &JumpLaw::new(0.25, JumpDist::beta(2.0, 8.0)),
            &linear(),
            &Utility::new(1.0),
        );
        assert!(!rep.is_valid());
        assert!(rep.failures().any(|c| c.name == "sigma_invertible"));
    }

    #[test]
    fn atom_at_one_fails() {
        let rep = validate_model(
            &two_asset(reference_sigma(0.25)),
            &JumpLaw::new(0.25, JumpDist::atom(1.0)),
            &linear(),
            &Utility::new(1.0),
        );
        assert!(rep.failures().any(|c| c.name == "jump_law"));
    }

    #[test]
    fn borrowing_below_lending_fails() {
        let m = two_asset(reference_sigma(0.25)).with_rates(0.05, 0.03);
        let rep = validate_model(
            &m,
            &JumpLaw::new(0.25, JumpDist::beta(2.0, 8.0)),
            &linear(),
            &Utility::new(2.0),
        );
        assert_eq!(rep.failures().map(|c| c.name).collect::<Vec<_>>(), vec!["rates"]);
    }

    #[test]
    fn rho_norm_above_one_fails() {
        let m = two_asset(reference_sigma(0.25)).with_rho(DVector::from_vec(vec![0.8, -0.8]));
        let rep = validate_model(
            &m,
            &JumpLaw::new(0.25, JumpDist::beta(2.0, 8.0)),
            &linear(),
            &Utility::new(2.0),
        );
        assert!(rep.failures().any(|c| c.name == "rho"));
    }

    #[test]
    fn single_asset_regimes_reject_two_assets() {
        let f = Friction::LargeInvestor {
            premium: PremiumSchedule::Linear { q: 0.1 },
            m_plus: -0.01,
            m_minus: 0.02,
        };
        let rep = validate_model(
            &two_asset(reference_sigma(0.25)),
            &JumpLaw::new(0.25, JumpDist::beta(2.0, 8.0)),
            &f,
            &Utility::new(2.0),
        );
        assert!(rep.failures().any(|c| c.name == "single_asset"));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let law = JumpLaw::new(
            0.1,
            JumpDist::Discrete {
                points: vec![0.1, 0.2],
                weights: vec![0.5, 0.4],
            },
        );
        let rep = validate_model(
            &MarketModel::scalar(0.1, 0.2, 0.03, 0.03, 0.0, 0.1),
            &law,
            &Friction::Frictionless {
                premium: PremiumSchedule::Linear { q: 0.1 },
            },
            &Utility::new(2.0),
        );
        assert!(rep.failures().any(|c| c.name == "jump_weights"));
    }

    #[derive(Debug)]
    struct Concave;
    impl ConvexPremium for Concave {
        fn value(&self, k: f64) -> f64 {
            (1.0 - k).sqrt()
        }
        fn slope(&self, k: f64) -> f64 {
            -0.5 / (1.0 - k).max(1e-12).sqrt()
        }
    }

    #[test]
    fn non_convex_tabulated_premium_fails() {
        let rep = validate_model(
            &MarketModel::scalar(0.1, 0.2, 0.03, 0.03, 0.0, 0.1),
            &JumpLaw::new(0.1, JumpDist::beta(2.0, 8.0)),
            &Friction::Frictionless {
                premium: PremiumSchedule::Tabulated(Arc::new(Concave)),
            },
            &Utility::new(2.0),
        );
        assert!(rep.failures().any(|c| c.name == "premium_convex"));
    }

    #[test]
    fn premium_slopes() {
        let p = PremiumSchedule::Power { q: 0.2, delta: 2.0 };
        assert!((p.slope(0.0) + 0.4).abs() < 1e-15);
        assert_eq!(p.slope(1.0), 0.0);
        assert_eq!(PremiumSchedule::Linear { q: 0.3 }.slope(0.7), -0.3);
        assert_eq!(p.value(1.0), 0.0);
    }

    #[test]
    fn utility_at_one() {
        assert_eq!(Utility::new(2.0).eval(1.0), -1.0);
        assert_eq!(Utility::new(1.0).eval(1.0), 0.0);
    }
}
