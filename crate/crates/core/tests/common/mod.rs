//! Random model generators shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use bgrisk_core::config::load_problem;
use bgrisk_core::solvers::check_soc;
use bgrisk_core::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const REGIMES: [&str; 5] = ["smooth-g", "diff-rates-1", "diff-rates-2", "large-investor", "portfolio-premium"];

/// A bundled model from `models/`.
pub fn model(name: &str) -> Problem {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(format!("{name}.json"));
    load_problem(&path).unwrap_or_else(|e| panic!("{name}: {e}")).1
}

pub fn beta_law(rng: &mut ChaCha8Rng) -> JumpLaw {
    JumpLaw::new(
        rng.random_range(0.0..0.3),
        JumpDist::beta(rng.random_range(1.5..12.0), rng.random_range(4.0..10.0)),
    )
}

pub fn scalar_market(rng: &mut ChaCha8Rng, spread: f64) -> MarketModel {
    let r = rng.random_range(0.0..0.04);
    MarketModel::scalar(
        r + rng.random_range(-0.02..0.12),
        rng.random_range(0.15..0.35),
        r,
        r + spread,
        rng.random_range(-0.9..0.9),
        rng.random_range(0.0..0.6),
    )
}

pub fn linear(rng: &mut ChaCha8Rng) -> PremiumSchedule {
    PremiumSchedule::Linear {
        q: rng.random_range(0.0..0.15),
    }
}

pub fn random_problem(regime: &str, rng: &mut ChaCha8Rng) -> Problem {
    loop {
        let eta = rng.random_range(1.2..5.0);
        let jumps = beta_law(rng);
        let (market, friction) = match regime {
            "smooth-g" => {
                let g: Arc<dyn MarginFunction> = if rng.random_bool(0.5) {
                    Arc::new(QuadraticMargin {
                        c: rng.random_range(0.01..0.5),
                    })
                } else {
                    Arc::new(SmoothSpread {
                        spread: rng.random_range(0.01..0.08),
                        width: rng.random_range(0.05..0.3),
                        c: rng.random_range(0.001..0.05),
                    })
                };
                (
                    scalar_market(rng, 0.0),
                    Friction::SmoothG {
                        premium: linear(rng),
                        g,
                    },
                )
            }
            "diff-rates-1" => {
                let spread = rng.random_range(0.005..0.08);
                (scalar_market(rng, spread), Friction::DifferentialRates { premium: linear(rng) })
            }
            "diff-rates-2" => {
                let r = rng.random_range(0.0..0.04);
                let s: f64 = rng.random_range(-0.6..0.6);
                let (v1, v2) = (rng.random_range(0.15..0.35), rng.random_range(0.15..0.35));
                let sigma = DMatrix::from_row_slice(2, 2, &[v1, 0.0, v2 * s, v2 * (1.0 - s * s).sqrt()]);
                let mu = DVector::from_fn(2, |_, _| r + rng.random_range(-0.02..0.12));
                let rho = DVector::from_fn(2, |_, _| rng.random_range(-0.6..0.6));
                (
                    MarketModel::new(mu, sigma, r, r + rng.random_range(0.005..0.08), rho, rng.random_range(0.0..0.6)),
                    Friction::DifferentialRates { premium: linear(rng) },
                )
            }
            "large-investor" => (
                scalar_market(rng, 0.0),
                Friction::LargeInvestor {
                    premium: linear(rng),
                    m_plus: rng.random_range(-0.03..0.0),
                    m_minus: rng.random_range(0.0..0.03),
                },
            ),
            "portfolio-premium" => {
                let q: Arc<dyn PremiumRate> = if rng.random_bool(0.8) {
                    Arc::new(HyperbolicRate {
                        base: rng.random_range(0.0..0.15),
                        c: rng.random_range(0.01..0.2),
                        a: rng.random_range(0.5..2.0),
                    })
                } else {
                    Arc::new(ConstantRate {
                        q: rng.random_range(0.0..0.15),
                    })
                };
                (scalar_market(rng, 0.0), Friction::PortfolioPremium { q })
            }
            other => unreachable!("{other}"),
        };
        let Ok(p) = Problem::new(market, jumps, friction, Utility::new(eta)) else {
            continue;
        };
        if regime == "portfolio-premium" && check_soc(&p).is_err() {
            continue;
        }
        return p;
    }
}

