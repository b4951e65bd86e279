//! Brute-force grid maximiser of `f + H`, independent of the solvers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{JumpDist, Policy, Problem};

/// Largest total node count per round for two assets (201³).
const MAX_NODES_3D: usize = 201 * 201 * 201;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Per-asset bounds; `None` centres on the Merton point with half-width
    /// `5|Merton| + 2`.
    pub pi_bounds: Option<Vec<(f64, f64)>>,
    pub kappa_bounds: (f64, f64),
    pub coarse: usize,
    pub refine: usize,
    pub rounds: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            pi_bounds: None,
            kappa_bounds: (0.0, 1.0),
            coarse: 401,
            refine: 2001,
            rounds: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub policy: Policy,
    pub value: f64,
    /// Local Lipschitz estimate times the final cell diagonal.
    pub resolution_bound: f64,
    pub evaluations: usize,
    /// Final grid spacing per axis, κ last.
    pub cell: Vec<f64>,
}

struct Objective<'a> {
    problem: &'a Problem,
    excess: Vec<f64>,
    /// σ row-major
    sigma: Vec<f64>,
    sigma_rho: Vec<f64>,
    d: usize,
}

impl<'a> Objective<'a> {
    fn new(problem: &'a Problem) -> Self {
        let m = &problem.market;
        let d = m.dim();
        let mut sigma = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                sigma.push(m.sigma()[(i, j)]);
            }
        }
        Objective {
            problem,
            excess: m.mu().iter().map(|v| v - m.r()).collect(),
            sigma,
            sigma_rho: m.sigma_rho().iter().copied().collect(),
            d,
        }
    }

    fn jump_term(&self, kappa: f64) -> Result<f64> {
        let lambda = self.problem.lambda();
        if lambda > 0.0 {
            Ok(lambda * self.problem.functionals().utility_jump_term(kappa, self.problem.eta())?)
        } else {
            Ok(0.0)
        }
    }

    /// `f + H` given the precomputed `λE[U(1 − κY)]`.
    fn eval(&self, pi: &[f64], kappa: f64, jump: f64) -> f64 {
        let d = self.d;
        let m = &self.problem.market;
        let eta = self.problem.eta();
        let mut lin = 0.0;
        let mut var = 0.0;
        let mut cross = 0.0;
        for j in 0..d {
            // (σ⊤π)_j = Σ_i σ_ij π_i
            let mut s = 0.0;
            for i in 0..d {
                s += self.sigma[i * d + j] * pi[i];
            }
            var += s * s;
            lin += pi[j] * self.excess[j];
            cross += pi[j] * self.sigma_rho[j];
        }
        let bk = m.b() * kappa;
        let h = lin - 0.5 * eta * (var + bk * bk - 2.0 * bk * cross) + jump;
        h + self.problem.friction.value_at(m, pi, kappa)
    }
}

fn linspace(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

/// Exhaustive search over `(π, κ)` with zooming refinement rounds.
pub fn grid_maximize(problem: &Problem, spec: &GridSpec) -> Result<OracleResult> {
    let d = problem.dim();
    if d > 2 {
        return Err(Error::Unsupported(format!("grid oracle supports d <= 2, got d = {d}")));
    }
    if spec.coarse < 3 || spec.refine < 3 {
        return Err(Error::Domain("grid resolution must be at least 3".into()));
    }
    let mut bounds: Vec<(f64, f64)> = match &spec.pi_bounds {
        Some(b) if b.len() == d => b.clone(),
        Some(b) => {
            return Err(Error::Domain(format!("{} pi bounds for {d} assets", b.len())));
        }
        None => problem
            .market
            .merton(problem.eta())
            .iter()
            .map(|m| (m - (5.0 * m.abs() + 2.0), m + (5.0 * m.abs() + 2.0)))
            .collect(),
    };
    let mut k_hi = spec.kappa_bounds.1;
    if let JumpDist::Beta { beta, .. } = problem.jumps.dist {
        if problem.eta() >= beta + 1.0 && problem.lambda() > 0.0 {
            k_hi = k_hi.min(1.0 - 1e-9);
        }
    }
    bounds.push((spec.kappa_bounds.0, k_hi));
    if bounds.iter().any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
        return Err(Error::Domain(format!("invalid oracle bounds {bounds:?}")));
    }
    let full = bounds.clone();
    let obj = Objective::new(problem);
    let axes = d + 1;

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut evaluations = 0;
    let mut cell = vec![0.0; axes];
    for round in 0..=spec.rounds {
        let mut n = if round == 0 { spec.coarse } else { spec.refine };
        if axes == 3 {
            while n.pow(3) > MAX_NODES_3D {
                n = (n - 1) / 2 * 2 + 1;
                n = n.min(201);
            }
        }
        if round > 0 {
            let centre = &best.as_ref().expect("first round sets an incumbent").1;
            for a in 0..axes {
                let (lo_full, hi_full) = full[a];
                let half = (bounds[a].1 - bounds[a].0) / 20.0;
                let mut lo = centre[a] - half;
                let mut hi = centre[a] + half;
                if lo < lo_full {
                    hi += lo_full - lo;
                    lo = lo_full;
                }
                if hi > hi_full {
                    lo -= hi - hi_full;
                    hi = hi_full;
                }
                bounds[a] = (lo.max(lo_full), hi.min(hi_full));
            }
        }
        for a in 0..axes {
            cell[a] = (bounds[a].1 - bounds[a].0) / (n - 1) as f64;
        }
        let (k_lo, k_hi) = bounds[d];
        let kappas: Vec<f64> = (0..n).map(|i| linspace(k_lo, k_hi, n, i)).collect();
        let jumps = kappas
            .par_iter()
            .map(|k| obj.jump_term(*k))
            .collect::<Result<Vec<f64>>>()?;
        let pi_nodes: Vec<Vec<f64>> = (0..d)
            .map(|a| (0..n).map(|i| linspace(bounds[a].0, bounds[a].1, n, i)).collect())
            .collect();

        // One work item per κ node; ties go to the lowest flat index.
        let round_best = (0..n)
            .into_par_iter()
            .map(|ki| {
                let kappa = kappas[ki];
                let jump = jumps[ki];
                let mut top = (f64::NEG_INFINITY, usize::MAX);
                let mut pi = vec![0.0; d];
                let inner = n.pow(d as u32);
                for flat in 0..inner {
                    let mut rem = flat;
                    for a in 0..d {
                        pi[a] = pi_nodes[a][rem % n];
                        rem /= n;
                    }
                    let v = obj.eval(&pi, kappa, jump);
                    if v > top.0 {
                        top = (v, ki * inner + flat);
                    }
                }
                top
            })
            .reduce(
                || (f64::NEG_INFINITY, usize::MAX),
                |a, b| {
                    if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
                        a
                    } else {
                        b
                    }
                },
            );
        evaluations += n.pow(axes as u32);
        let inner = n.pow(d as u32);
        let (value, idx) = round_best;
        let mut point = vec![0.0; axes];
        let mut rem = idx % inner;
        for a in 0..d {
            point[a] = pi_nodes[a][rem % n];
            rem /= n;
        }
        point[d] = kappas[idx / inner];
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, point));
        }
    }

    let (value, point) = best.expect("at least one round");
    // Slopes toward the neighbouring nodes of the final grid.
    let mut lipschitz: f64 = 0.0;
    for a in 0..axes {
        for dir in [-1.0, 1.0] {
            let mut q = point.clone();
            q[a] += dir * cell[a];
            if q[a] < full[a].0 || q[a] > full[a].1 || cell[a] == 0.0 {
                continue;
            }
            let v = obj.eval(&q[..d], q[d], obj.jump_term(q[d])?);
            lipschitz = lipschitz.max((v - value).abs() / cell[a]);
        }
    }
    let diagonal = cell.iter().map(|h| h * h).sum::<f64>().sqrt();
    Ok(OracleResult {
        policy: Policy::new(nalgebra::DVector::from_column_slice(&point[..d]), point[d]),
        value,
        resolution_bound: lipschitz * diagonal,
        evaluations,
        cell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Friction, JumpLaw, MarketModel, PremiumSchedule, Utility};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn merton() -> Problem {
        Problem::new(
            MarketModel::scalar(0.10, 0.2, 0.03, 0.03, 0.0, 0.0),
            JumpLaw::new(0.0, JumpDist::beta(2.0, 8.0)),
            Friction::Frictionless {
                premium: PremiumSchedule::Linear { q: 0.0 },
            },
            Utility::new(2.0),
        )
        .unwrap()
    }

    #[test]
    fn finds_merton_point() {
        let r = grid_maximize(&merton(), &GridSpec::default()).unwrap();
        assert!((r.policy.pi[0] - 0.875).abs() <= r.cell[0], "{:?}", r.policy);
        let exact = 0.07 * 0.875 - 0.5 * 2.0 * 0.04 * 0.875 * 0.875;
        assert!(exact >= r.value && exact - r.value <= r.resolution_bound + 1e-15);
    }

    #[test]
    fn refinement_never_lowers_value() {
        let p = merton();
        let mut prev = f64::NEG_INFINITY;
        for rounds in 0..3 {
            let spec = GridSpec {
                coarse: 41,
                refine: 41,
                rounds,
                ..GridSpec::default()
            };
            let v = grid_maximize(&p, &spec).unwrap().value;
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn argmax_beats_random_grid_points() {
        let p = merton();
        let spec = GridSpec {
            coarse: 101,
            refine: 101,
            rounds: 0,
            ..GridSpec::default()
        };
        let r = grid_maximize(&p, &spec).unwrap();
        let obj = Objective::new(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let lo = 0.875 - (5.0 * 0.875 + 2.0);
        for _ in 0..100 {
            let i = rng.random_range(0..101);
            let k = rng.random_range(0..101) as f64 / 100.0;
            let pi = lo + i as f64 * r.cell[0];
            assert!(r.value >= obj.eval(&[pi], k, 0.0));
        }
    }
}
