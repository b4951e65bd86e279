//! Expectations over the jump size `Y`, FOSD comparison and sampling.
//!
//! Beta laws have two independent evaluation paths: the hypergeometric
//! series and adaptive quadrature against the density. Discrete laws are
//! exact finite sums.

use std::collections::HashMap;
use std::sync::RwLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use statrs::distribution::{Beta as BetaCdf, ContinuousCDF};

use crate::error::{Error, Result};
use crate::model::{JumpDist, JumpLaw};
use crate::quadrature::AdaptiveQuad;
use crate::special::{digamma, hyp2f1, ln_beta};

/// Above this κ the series is replaced by quadrature.
pub const SERIES_CUTOFF: f64 = 1.0 - 1e-6;
const SERIES_REL_TOL: f64 = 1e-14;
const CACHE_CAP: usize = 1 << 18;

const QUAD: AdaptiveQuad = AdaptiveQuad {
    abs_tol: 1e-13,
    rel_tol: 1e-13,
    max_subdivisions: 60,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Kind {
    Psi,
    PsiDkappa,
    Utility,
}

/// Memoised jump functionals for one jump-size law.
#[derive(Debug)]
pub struct JumpFunctionals {
    dist: JumpDist,
    mean: f64,
    second_moment: f64,
    cache: RwLock<HashMap<(u64, u64, Kind), f64>>,
}

impl Clone for JumpFunctionals {
    fn clone(&self) -> Self {
        JumpFunctionals::new(self.dist.clone())
    }
}

impl JumpFunctionals {
    pub fn new(dist: JumpDist) -> Self {
        let (mean, second_moment) = match &dist {
            JumpDist::Beta { alpha, beta } => {
                let s = alpha + beta;
                (alpha / s, alpha * (alpha + 1.0) / (s * (s + 1.0)))
            }
            JumpDist::Discrete { points, weights } => (
                points.iter().zip(weights).map(|(y, w)| w * y).sum(),
                points.iter().zip(weights).map(|(y, w)| w * y * y).sum(),
            ),
        };
        JumpFunctionals {
            dist,
            mean,
            second_moment,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn dist(&self) -> &JumpDist {
        &self.dist
    }

    /// `E[Y]`
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `E[Y²]`
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    fn cached(&self, kind: Kind, kappa: f64, eta: f64, eval: impl FnOnce() -> Result<f64>) -> Result<f64> {
        let key = (kappa.to_bits(), eta.to_bits(), kind);
        if let Some(v) = self.cache.read().expect("jump cache poisoned").get(&key) {
            return Ok(*v);
        }
        let v = eval()?;
        let mut map = self.cache.write().expect("jump cache poisoned");
        if map.len() >= CACHE_CAP {
            map.clear();
        }
        map.insert(key, v);
        Ok(v)
    }

    /// `Ψ(κ, η) = E[Y/(1 − κY)^η]`
    pub fn psi(&self, kappa: f64, eta: f64) -> Result<f64> {
        check_args(kappa, eta)?;
        self.cached(Kind::Psi, kappa, eta, || self.weighted_moment(1, eta, kappa))
    }

    /// `E[Y²/(1 − κY)^{1+η}]`, which equals `∂Ψ/∂κ / η`.
    pub fn psi_dkappa(&self, kappa: f64, eta: f64) -> Result<f64> {
        check_args(kappa, eta)?;
        self.cached(Kind::PsiDkappa, kappa, eta, || {
            self.weighted_moment(2, eta + 1.0, kappa)
        })
    }

    /// `E[U_η(1 − κY)]`
    pub fn utility_jump_term(&self, kappa: f64, eta: f64) -> Result<f64> {
        check_args(kappa, eta)?;
        self.cached(Kind::Utility, kappa, eta, || self.utility_uncached(kappa, eta))
    }

    /// Series path for Beta laws (exact sum for discrete laws).
    pub fn psi_series(&self, kappa: f64, eta: f64) -> Result<f64> {
        check_args(kappa, eta)?;
        match &self.dist {
            JumpDist::Beta { alpha, beta } => beta_series(*alpha, *beta, 1, eta, kappa),
            JumpDist::Discrete { .. } => self.weighted_moment(1, eta, kappa),
        }
    }

    /// Quadrature path for Beta laws (exact sum for discrete laws).
    pub fn psi_quadrature(&self, kappa: f64, eta: f64) -> Result<f64> {
        check_args(kappa, eta)?;
        match &self.dist {
            JumpDist::Beta { alpha, beta } => {
                beta_domain(*beta, 1, eta, kappa)?;
                beta_expectation(*alpha, *beta, kappa, |y, omy| {
                    y * one_minus_ky(kappa, y, omy).powf(-eta)
                })
            }
            JumpDist::Discrete { .. } => self.weighted_moment(1, eta, kappa),
        }
    }

    /// `E[Y^m (1 − κY)^{−s}]`
    fn weighted_moment(&self, m: i32, s: f64, kappa: f64) -> Result<f64> {
        match &self.dist {
            JumpDist::Discrete { points, weights } => Ok(points
                .iter()
                .zip(weights)
                .map(|(y, w)| w * y.powi(m) * (1.0 - kappa * y).powf(-s))
                .sum()),
            JumpDist::Beta { alpha, beta } => {
                let (a, b) = (*alpha, *beta);
                beta_domain(b, m, s, kappa)?;
                if kappa == 0.0 {
                    return Ok(beta_raw_moment(a, b, m));
                }
                if kappa == 1.0 {
                    return Ok((ln_beta(a + m as f64, b - s) - ln_beta(a, b)).exp());
                }
                let quad = || {
                    beta_expectation(a, b, kappa, |y, omy| {
                        y.powi(m) * one_minus_ky(kappa, y, omy).powf(-s)
                    })
                };
                if kappa > SERIES_CUTOFF {
                    return quad();
                }
                match beta_series(a, b, m, s, kappa) {
                    Ok(v) => Ok(v),
                    Err(series_err) => quad().map_err(|quad_err| {
                        Error::NonConvergence(format!("series: {series_err}; quadrature: {quad_err}"))
                    }),
                }
            }
        }
    }

    fn utility_uncached(&self, kappa: f64, eta: f64) -> Result<f64> {
        let log = eta == 1.0;
        let u = |x: f64| if log { x.ln() } else { x.powf(1.0 - eta) / (1.0 - eta) };
        match &self.dist {
            JumpDist::Discrete { points, weights } => Ok(points
                .iter()
                .zip(weights)
                .map(|(y, w)| w * u(1.0 - kappa * y))
                .sum()),
            JumpDist::Beta { alpha, beta } => {
                let (a, b) = (*alpha, *beta);
                if kappa == 0.0 {
                    return Ok(u(1.0));
                }
                if kappa == 1.0 {
                    // E[(1−Y)^{1−η}] = B(α, β + 1 − η)/B(α, β), E[ln(1−Y)] = ψ(β) − ψ(α+β)
                    if log {
                        return Ok(digamma(b) - digamma(a + b));
                    }
                    if eta >= b + 1.0 {
                        return Err(Error::Domain(format!(
                            "E[U(1 - Y)] diverges for Beta({a}, {b}) with eta = {eta}"
                        )));
                    }
                    return Ok((ln_beta(a, b + 1.0 - eta) - ln_beta(a, b)).exp() / (1.0 - eta));
                }
                beta_expectation(a, b, kappa, |y, omy| u(one_minus_ky(kappa, y, omy)))
            }
        }
    }
}

fn check_args(kappa: f64, eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::Domain(format!("kappa = {kappa} outside [0, 1]")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Domain(format!("eta = {eta} must be positive")));
    }
    Ok(())
}

/// `1 − κy` computed from `1 − y` to keep precision when `y` is near one.
fn one_minus_ky(kappa: f64, y: f64, omy: f64) -> f64 {
    if y > 0.5 {
        (1.0 - kappa) + kappa * omy
    } else {
        1.0 - kappa * y
    }
}

fn beta_domain(beta: f64, m: i32, s: f64, kappa: f64) -> Result<()> {
    // Near y = 1 the integrand behaves like (1−y)^{β−1−s} at κ = 1.
    let _ = m;
    if kappa == 1.0 && s >= beta {
        return Err(Error::Domain(format!(
            "E[Y^k/(1 - Y)^{s}] diverges for beta = {beta} (need exponent < beta)"
        )));
    }
    Ok(())
}

fn beta_series(alpha: f64, beta: f64, m: i32, s: f64, kappa: f64) -> Result<f64> {
    if kappa >= 1.0 {
        return Err(Error::Domain("series requires kappa < 1".into()));
    }
    let mf = m as f64;
    let sum = hyp2f1(s, alpha + mf, alpha + beta + mf, kappa, SERIES_REL_TOL)?;
    Ok(beta_raw_moment(alpha, beta, m) * sum.value)
}

/// `E[Y^m] = ∏_{i<m} (α + i)/(α + β + i)`
fn beta_raw_moment(alpha: f64, beta: f64, m: i32) -> f64 {
    (0..m).map(|i| (alpha + i as f64) / (alpha + beta + i as f64)).product()
}

/// `E[φ(Y, 1 − Y)]` for `Y ~ Beta(α, β)`, by quadrature on `[0, ½] ∪ [½, 1]`
/// with power substitutions that absorb endpoint singularities of the density.
fn beta_expectation<F: Fn(f64, f64) -> f64>(alpha: f64, beta: f64, kappa: f64, phi: F) -> Result<f64> {
    let lnb = ln_beta(alpha, beta);

    let lower = if alpha < 2.0 {
        // y = u^{1/α}: y^{α−1} dy = du/α
        let top = 0.5f64.powf(alpha);
        let scale = (-lnb).exp() / alpha;
        QUAD.integrate(
            |u: f64| {
                if u <= 0.0 {
                    return 0.0;
                }
                let y = u.powf(1.0 / alpha);
                scale * phi(y, 1.0 - y) * (1.0 - y).powf(beta - 1.0)
            },
            0.0,
            top,
            &[],
        )?
    } else {
        QUAD.integrate(
            |y: f64| {
                if y <= 0.0 {
                    return 0.0;
                }
                let ln_dens = (alpha - 1.0) * y.ln() + (beta - 1.0) * (-y).ln_1p() - lnb;
                phi(y, 1.0 - y) * ln_dens.exp()
            },
            0.0,
            0.5,
            &[],
        )?
    };

    // Scales in 1 − y where (1 − κy)^{−s} changes character.
    let gap = 1.0 - kappa;
    let marks: Vec<f64> = [0.1, 1.0, 10.0, 100.0, 1000.0]
        .iter()
        .map(|c| c * gap)
        .filter(|t| *t > 0.0 && *t < 0.5)
        .collect();

    let upper = if beta < 2.0 {
        // 1 − y = v^{1/β}: (1−y)^{β−1} dy = dv/β
        let top = 0.5f64.powf(beta);
        let scale = (-lnb).exp() / beta;
        let bps: Vec<f64> = marks.iter().map(|t| t.powf(beta)).collect();
        QUAD.integrate(
            |v: f64| {
                if v <= 0.0 {
                    let y = 1.0;
                    let val = phi(y, 0.0);
                    return if val.is_finite() { scale * val } else { 0.0 };
                }
                let omy = v.powf(1.0 / beta);
                let y = 1.0 - omy;
                scale * phi(y, omy) * y.powf(alpha - 1.0)
            },
            0.0,
            top,
            &bps,
        )?
    } else {
        // Integrate over t = 1 − y ∈ [0, ½].
        QUAD.integrate(
            |t: f64| {
                if t <= 0.0 {
                    return 0.0;
                }
                let y = 1.0 - t;
                let ln_dens = (alpha - 1.0) * (-t).ln_1p() + (beta - 1.0) * t.ln() - lnb;
                phi(y, t) * ln_dens.exp()
            },
            0.0,
            0.5,
            &marks,
        )?
    };
    Ok(lower.value + upper.value)
}

/// First-order stochastic dominance of jump sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    /// A is stochastically larger than B.
    Dominates,
    DominatedBy,
    Incomparable,
}

pub fn cdf(dist: &JumpDist, y: f64) -> f64 {
    match dist {
        JumpDist::Beta { alpha, beta } => BetaCdf::new(*alpha, *beta)
            .map(|d| d.cdf(y))
            .unwrap_or(f64::NAN),
        JumpDist::Discrete { points, weights } => points
            .iter()
            .zip(weights)
            .filter(|(p, _)| **p <= y)
            .map(|(_, w)| w)
            .sum(),
    }
}

/// Compares CDFs on `grid_size` uniformly spaced interior points of (0, 1).
pub fn fosd_compare(a: &JumpLaw, b: &JumpLaw, grid_size: usize) -> Dominance {
    const SLACK: f64 = 1e-12;
    let mut a_le = true;
    let mut b_le = true;
    let mut a_strict = false;
    let mut b_strict = false;
    for i in 1..=grid_size {
        let y = i as f64 / (grid_size + 1) as f64;
        let fa = cdf(&a.dist, y);
        let fb = cdf(&b.dist, y);
        a_le &= fa <= fb + SLACK;
        b_le &= fb <= fa + SLACK;
        a_strict |= fa < fb - SLACK;
        b_strict |= fb < fa - SLACK;
    }
    if a_le && a_strict {
        Dominance::Dominates
    } else if b_le && b_strict {
        Dominance::DominatedBy
    } else {
        Dominance::Incomparable
    }
}

/// Draws jump sizes; Beta variates come from a ratio of Gamma draws.
#[derive(Debug, Clone)]
pub enum JumpSampler {
    Beta { a: Gamma<f64>, b: Gamma<f64> },
    Discrete { points: Vec<f64>, cumulative: Vec<f64> },
}

impl JumpSampler {
    pub fn new(dist: &JumpDist) -> Result<Self> {
        match dist {
            JumpDist::Beta { alpha, beta } => {
                let bad = |e| Error::Domain(format!("gamma sampler: {e}"));
                Ok(JumpSampler::Beta {
                    a: Gamma::new(*alpha, 1.0).map_err(bad)?,
                    b: Gamma::new(*beta, 1.0).map_err(bad)?,
                })
            }
            JumpDist::Discrete { points, weights } => {
                let mut acc = 0.0;
                let cumulative = weights
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                Ok(JumpSampler::Discrete {
                    points: points.clone(),
                    cumulative,
                })
            }
        }
    }

    /// Returns `(Y, 1 − Y)`, each computed without cancellation.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            JumpSampler::Beta { a, b } => loop {
                let x = a.sample(rng);
                let z = b.sample(rng);
                let s = x + z;
                if s > 0.0 {
                    return (x / s, z / s);
                }
            },
            JumpSampler::Discrete { points, cumulative } => {
                let u: f64 = rng.random::<f64>() * cumulative.last().copied().unwrap_or(1.0);
                let idx = cumulative.partition_point(|c| *c <= u).min(points.len() - 1);
                (points[idx], 1.0 - points[idx])
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_pair(rng).0
    }
}

/// `n` i.i.d. jump sizes from a ChaCha stream seeded by `seed`.
pub fn sample_jumps(law: &JumpLaw, n: usize, seed: u64) -> Result<Vec<f64>> {
    let sampler = JumpSampler::new(&law.dist)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
}
