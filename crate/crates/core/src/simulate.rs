//! Exact Monte Carlo sampling of terminal wealth under a constant policy.
//!
//! With `(π, κ)` fixed the diffusion part of log-wealth is Gaussian and the
//! jump product is independent of it, so no time stepping is needed.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::variance_rate;
use crate::jumps::JumpSampler;
use crate::model::{Policy, Problem};

/// Terminal wealth is floored here before taking utility.
pub const WEALTH_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub initial_wealth: f64,
    pub paths: usize,
    pub seed: u64,
    /// Pairs share all draws except the sign of the Gaussian exponent.
    pub antithetic: bool,
    /// Keep per-path records in the estimate.
    pub record_paths: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 1.0,
            initial_wealth: 1.0,
            paths: 1_000_000,
            seed: 0,
            antithetic: false,
            record_paths: false,
        }
    }
}

impl SimConfig {
    fn check(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.initial_wealth > 0.0 && self.initial_wealth.is_finite()) {
            return Err(Error::Domain(format!(
                "initial wealth must be positive, got {}",
                self.initial_wealth
            )));
        }
        if self.paths == 0 {
            return Err(Error::Domain("path count must be at least 1".into()));
        }
        Ok(())
    }

    /// Independent draws: pairs when antithetic, single paths otherwise.
    fn units(&self) -> usize {
        if self.antithetic {
            self.paths.div_ceil(2)
        } else {
            self.paths
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathRecord {
    pub path_id: u64,
    pub jumps: u64,
    pub gaussian: f64,
    pub wealth: f64,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
    pub floor_fraction: f64,
    /// Sample mean of `V_T` itself, for moment checks.
    pub mean_wealth: f64,
    pub wealth_std_error: f64,
    #[serde(skip)]
    pub records: Vec<PathRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    ABetter,
    BBetter,
    Indistinguishable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    /// Mean of `U(V_T^A) − U(V_T^B)`.
    pub difference: f64,
    pub std_error: f64,
    pub paths: usize,
    pub verdict: Verdict,
}

/// Random inputs shared by every policy evaluated on one stream.
struct Draw {
    z: Vec<f64>,
    z_bar: f64,
    /// `(Y, 1 − Y)` per jump.
    jumps: Vec<(f64, f64)>,
}

struct Sampler {
    dim: usize,
    jump_mean: f64,
    poisson: Option<Poisson<f64>>,
    jumps: JumpSampler,
    seed: u64,
}

impl Sampler {
    fn new(problem: &Problem, config: &SimConfig) -> Result<Self> {
        let jump_mean = problem.lambda() * config.horizon;
        let poisson = if jump_mean > 0.0 {
            Some(Poisson::new(jump_mean).map_err(|e| Error::Domain(format!("poisson sampler: {e}")))?)
        } else {
            None
        };
        Ok(Sampler {
            dim: problem.dim(),
            jump_mean,
            poisson,
            jumps: JumpSampler::new(&problem.jumps.dist)?,
            seed: config.seed,
        })
    }

    fn draw(&self, stream: u64) -> Draw {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let z = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let z_bar = rng.sample(StandardNormal);
        let n = match &self.poisson {
            Some(p) if self.jump_mean > 0.0 => p.sample(&mut rng) as usize,
            _ => 0,
        };
        let jumps = (0..n).map(|_| self.jumps.sample_pair(&mut rng)).collect();
        Draw { z, z_bar, jumps }
    }
}

/// Policy constants: `G = a·Z − c(ρ·Z + s·Z̄)`, `ln V = base + G + Σ ln(1 − κY)`.
struct Plan {
    a: DVector<f64>,
    c: f64,
    rho: DVector<f64>,
    s: f64,
    base: f64,
    kappa: f64,
    eta: f64,
}

struct Outcome {
    jumps: u64,
    gaussian: f64,
    wealth: f64,
    utility: f64,
    floored: bool,
}

impl Plan {
    fn new(problem: &Problem, policy: &Policy, config: &SimConfig) -> Result<Self> {
        let m = &problem.market;
        if policy.pi.len() != m.dim() {
            return Err(Error::Domain(format!(
                "policy has {} weights, model has {} assets",
                policy.pi.len(),
                m.dim()
            )));
        }
        if !policy.is_valid() {
            return Err(Error::Domain(format!("invalid policy {policy:?}")));
        }
        let t = config.horizon;
        let var = variance_rate(m, &policy.pi, policy.kappa);
        let f = problem.friction.value(m, &policy.pi, policy.kappa);
        let excess = m.mu().add_scalar(-m.r());
        let drift = m.r() + f + policy.pi.dot(&excess) - 0.5 * var;
        let rho = m.rho().clone();
        Ok(Plan {
            a: (m.sigma().transpose() * &policy.pi) * t.sqrt(),
            c: policy.kappa * m.b() * t.sqrt(),
            s: (1.0 - rho.norm_squared()).max(0.0).sqrt(),
            rho,
            base: config.initial_wealth.ln() + drift * t,
            kappa: policy.kappa,
            eta: problem.eta(),
        })
    }

    fn gaussian(&self, d: &Draw) -> f64 {
        let z = DVector::from_column_slice(&d.z);
        self.a.dot(&z) - self.c * (self.rho.dot(&z) + self.s * d.z_bar)
    }

    fn outcome(&self, d: &Draw, sign: f64) -> Result<Outcome> {
        let g = sign * self.gaussian(d);
        let mut log_jump = 0.0;
        for &(y, one_minus_y) in &d.jumps {
            // 1 − κY = (1 − κ) + κ(1 − Y), both terms nonnegative
            let factor = (1.0 - self.kappa) + self.kappa * one_minus_y;
            if factor <= 0.0 {
                return Err(Error::Domain(format!("1 - kappa*Y = {factor} at Y = {y}")));
            }
            log_jump += factor.ln();
        }
        let floor = WEALTH_FLOOR.ln();
        let raw = self.base + g + log_jump;
        let floored = raw < floor;
        let log_v = raw.max(floor);
        let utility = if self.eta == 1.0 {
            log_v
        } else {
            ((1.0 - self.eta) * log_v).exp() / (1.0 - self.eta)
        };
        Ok(Outcome {
            jumps: d.jumps.len() as u64,
            gaussian: g,
            wealth: log_v.exp(),
            utility,
            floored,
        })
    }
}

/// Sum with a fixed binary tree so results do not depend on scheduling.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    // Shifted by the first sample so constant data gives exactly zero spread.
    let shift = xs[0];
    let d: Vec<f64> = xs.iter().map(|x| x - shift).collect();
    let n = xs.len() as f64;
    let mean_d = pairwise_sum(&d) / n;
    if xs.len() < 2 {
        return (shift, 0.0);
    }
    let dev: Vec<f64> = d.iter().map(|x| (x - mean_d) * (x - mean_d)).collect();
    (shift + mean_d, (pairwise_sum(&dev) / (n - 1.0) / n).sqrt())
}

/// Estimates `E[U_η(V_T)]` for a constant policy.
pub fn simulate_terminal_utility(problem: &Problem, policy: &Policy, config: &SimConfig) -> Result<SimEstimate> {
    config.check()?;
    let sampler = Sampler::new(problem, config)?;
    let plan = Plan::new(problem, policy, config)?;
    let per_unit = if config.antithetic { 2 } else { 1 };
    let outcomes: Vec<Vec<Outcome>> = (0..config.units() as u64)
        .into_par_iter()
        .map(|unit| {
            let draw = sampler.draw(unit);
            if config.antithetic {
                Ok(vec![plan.outcome(&draw, 1.0)?, plan.outcome(&draw, -1.0)?])
            } else {
                Ok(vec![plan.outcome(&draw, 1.0)?])
            }
        })
        .collect::<Result<_>>()?;

    let unit_mean = |f: &dyn Fn(&Outcome) -> f64| -> Vec<f64> {
        outcomes
            .iter()
            .map(|o| o.iter().map(f).sum::<f64>() / per_unit as f64)
            .collect()
    };
    let (mean, std_error) = mean_and_se(&unit_mean(&|o| o.utility));
    let (mean_wealth, wealth_std_error) = mean_and_se(&unit_mean(&|o| o.wealth));
    let paths = outcomes.len() * per_unit;
    let floored = outcomes.iter().flatten().filter(|o| o.floored).count();
    let records = if config.record_paths {
        outcomes
            .iter()
            .flatten()
            .enumerate()
            .map(|(i, o)| PathRecord {
                path_id: i as u64,
                jumps: o.jumps,
                gaussian: o.gaussian,
                wealth: o.wealth,
                utility: o.utility,
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(SimEstimate {
        mean,
        std_error,
        paths,
        floor_fraction: floored as f64 / paths as f64,
        mean_wealth,
        wealth_std_error,
        records,
    })
}

/// Paired estimate of `E[U(V^A)] − E[U(V^B)]` under common random numbers,
/// judged at three standard errors.
pub fn compare_policies(problem: &Problem, a: &Policy, b: &Policy, config: &SimConfig) -> Result<Comparison> {
    config.check()?;
    let sampler = Sampler::new(problem, config)?;
    let plan_a = Plan::new(problem, a, config)?;
    let plan_b = Plan::new(problem, b, config)?;
    let signs: &[f64] = if config.antithetic { &[1.0, -1.0] } else { &[1.0] };
    let diffs: Vec<f64> = (0..config.units() as u64)
        .into_par_iter()
        .map(|unit| {
            let draw = sampler.draw(unit);
            let mut acc = 0.0;
            for &s in signs {
                acc += plan_a.outcome(&draw, s)?.utility - plan_b.outcome(&draw, s)?.utility;
            }
            Ok(acc / signs.len() as f64)
        })
        .collect::<Result<_>>()?;
    let (difference, std_error) = mean_and_se(&diffs);
    let verdict = if difference > 3.0 * std_error {
        Verdict::ABetter
    } else if difference < -3.0 * std_error {
        Verdict::BBetter
    } else {
        Verdict::Indistinguishable
    };
    Ok(Comparison {
        difference,
        std_error,
        paths: diffs.len() * signs.len(),
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Friction, JumpDist, JumpLaw, MarketModel, PremiumSchedule, Utility};

    fn problem(lambda: f64, b: f64, eta: f64) -> Problem {
        Problem::new(
            MarketModel::scalar(0.10, 0.2, 0.03, 0.03, 0.4, b),
            JumpLaw::new(lambda, JumpDist::beta(2.0, 8.0)),
            Friction::Frictionless {
                premium: PremiumSchedule::Linear { q: 0.02 },
            },
            Utility::new(eta),
        )
        .unwrap()
    }

    fn cfg(paths: usize, seed: u64) -> SimConfig {
        SimConfig {
            paths,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn degenerate_path_is_deterministic() {
        let p = problem(0.0, 0.0, 3.0);
        let est = simulate_terminal_utility(&p, &Policy::scalar(0.0, 0.4), &cfg(1000, 1)).unwrap();
        // f = −q(1 − κ) = −0.012
        let v = (0.03f64 - 0.012).exp();
        assert!((est.mean - Utility::new(3.0).eval(v)).abs() < 1e-15);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn lognormal_moment_matches() {
        let p = problem(0.0, 0.3, 2.0);
        let pol = Policy::scalar(0.8, 0.0);
        let est = simulate_terminal_utility(&p, &pol, &cfg(200_000, 3)).unwrap();
        let s2 = 0.8f64 * 0.8 * 0.04;
        let drift = 0.03 - 0.02 + 0.8 * 0.07 - 0.5 * s2;
        // E[V^{1−η}] = exp((1−η)drift + ½(1−η)²s²)
        let exact = -(-drift + 0.5 * s2).exp();
        assert!((est.mean - exact).abs() < 3.0 * est.std_error, "{est:?} vs {exact}");
    }

    #[test]
    fn seed_determinism_and_positivity() {
        let p = problem(0.5, 0.3, 2.0);
        let pol = Policy::scalar(0.5, 0.7);
        let mut c = cfg(5000, 11);
        c.record_paths = true;
        let a = simulate_terminal_utility(&p, &pol, &c).unwrap();
        let b = simulate_terminal_utility(&p, &pol, &c).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert!(a.records.iter().all(|r| r.wealth > 0.0));
        assert!(a.records.iter().any(|r| r.jumps > 0));
    }

    #[test]
    fn identical_policies_tie_exactly() {
        let p = problem(0.5, 0.3, 2.0);
        let pol = Policy::scalar(0.5, 0.7);
        let c = compare_policies(&p, &pol, &pol, &cfg(2000, 5)).unwrap();
        assert_eq!(c.difference, 0.0);
        assert_eq!(c.verdict, Verdict::Indistinguishable);
    }

    #[test]
    fn antithetic_counts_both_legs() {
        let p = problem(0.5, 0.3, 2.0);
        let c = SimConfig {
            antithetic: true,
            ..cfg(1001, 2)
        };
        let est = simulate_terminal_utility(&p, &Policy::scalar(0.5, 0.5), &c).unwrap();
        assert_eq!(est.paths, 1002);
    }
}
