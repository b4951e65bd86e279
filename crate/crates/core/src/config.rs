//! JSON model files.
//!
//! ```json
//! { "d": 1, "mu": 0.16, "sigma": 0.26, "r": 0.03, "R": 0.09, "rho": 0.5,
//!   "b": 0.4, "lambda": 0.1, "jump_law": {"type": "beta", "alpha": 2, "beta": 8},
//!   "friction": {"type": "differential_rates"},
//!   "premium": {"type": "linear", "q": 0.3}, "eta": 2 }
//! ```

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ConstantRate, Friction, HyperbolicRate, JumpDist, JumpLaw, MarginFunction, MarketModel, PremiumRate,
    PremiumSchedule, Problem, QuadraticMargin, SmoothSpread, Utility,
};
use crate::sweep::{linear_grid, SweepParam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalars {
    One(f64),
    Many(Vec<f64>),
}

impl Scalars {
    fn to_vector(&self, d: usize, field: &str) -> Result<DVector<f64>> {
        match self {
            Scalars::One(v) if d == 1 => Ok(DVector::from_element(1, *v)),
            Scalars::One(_) => Err(Error::Config(format!("{field}: expected {d} values, got a scalar"))),
            Scalars::Many(v) if v.len() == d => Ok(DVector::from_column_slice(v)),
            Scalars::Many(v) => Err(Error::Config(format!("{field}: expected {d} values, got {}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Correlation {
    /// Off-diagonal entry for two assets.
    Pair(f64),
    Matrix(Vec<Vec<f64>>),
}

/// `σ` as a scalar, an explicit matrix, or volatilities plus a correlation
/// matrix (`σ = diag(vols)·L` with `LL⊤ = corr`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
    Factored { vols: Vec<f64>, correlation: Correlation },
}

fn matrix(rows: &[Vec<f64>], d: usize, field: &str) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Config(format!("{field}: expected a {d}x{d} matrix")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

impl SigmaSpec {
    fn to_matrix(&self, d: usize) -> Result<DMatrix<f64>> {
        match self {
            SigmaSpec::Scalar(s) if d == 1 => Ok(DMatrix::from_element(1, 1, *s)),
            SigmaSpec::Scalar(_) => Err(Error::Config(format!("sigma: expected a {d}x{d} matrix, got a scalar"))),
            SigmaSpec::Matrix(rows) => matrix(rows, d, "sigma"),
            SigmaSpec::Factored { vols, correlation } => {
                if vols.len() != d {
                    return Err(Error::Config(format!("sigma.vols: expected {d} values, got {}", vols.len())));
                }
                let corr = match correlation {
                    Correlation::Pair(c) if d == 2 => DMatrix::from_row_slice(2, 2, &[1.0, *c, *c, 1.0]),
                    Correlation::Pair(_) => {
                        return Err(Error::Config("sigma.correlation: a scalar needs d = 2".into()));
                    }
                    Correlation::Matrix(rows) => matrix(rows, d, "sigma.correlation")?,
                };
                let chol = corr
                    .cholesky()
                    .ok_or_else(|| Error::Config("sigma.correlation is not positive definite".into()))?;
                Ok(DMatrix::from_diagonal(&DVector::from_column_slice(vols)) * chol.l())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpLawSpec {
    Beta { alpha: f64, beta: f64 },
    Discrete { points: Vec<f64>, weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PremiumSpec {
    Linear { q: f64 },
    Power { q: f64, delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginSpec {
    Quadratic { c: f64 },
    SmoothSpread { spread: f64, width: f64, c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateSpec {
    /// `base + c(√(π² + a²) − a)`; `base` defaults to `λE[Y]`.
    Hyperbolic {
        c: f64,
        a: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        base: Option<f64>,
    },
    Constant { q: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrictionSpec {
    Frictionless,
    DifferentialRates,
    LargeInvestor { m_plus: f64, m_minus: f64 },
    SmoothG { g: MarginSpec },
    PortfolioPremium { q: RateSpec },
}

/// Recipe that regenerates a bundled reference table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reproduce {
    /// One solve per grid value; `values` wins over `from`/`to`/`steps`,
    /// and `steps` counts intervals.
    Sweep {
        param: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        steps: Option<usize>,
    },
    /// Risk-aversion thresholds for each value of `param`.
    Thresholds { param: String, values: Vec<f64> },
}

impl Reproduce {
    pub fn param(&self) -> Result<SweepParam> {
        match self {
            Reproduce::Sweep { param, .. } | Reproduce::Thresholds { param, .. } => param.parse(),
        }
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        match self {
            Reproduce::Sweep {
                values: Some(v), ..
            }
            | Reproduce::Thresholds { values: v, .. } => Ok(v.clone()),
            Reproduce::Sweep {
                from: Some(a),
                to: Some(b),
                steps: Some(n),
                ..
            } if *n > 0 => linear_grid(*a, *b, n + 1),
            Reproduce::Sweep { .. } => Err(Error::Config(
                "reproduce sweep needs values, or from, to and steps >= 1".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub d: usize,
    pub mu: Scalars,
    pub sigma: SigmaSpec,
    pub r: f64,
    #[serde(rename = "R")]
    pub r_borrow: f64,
    pub rho: Scalars,
    pub b: f64,
    pub lambda: f64,
    pub jump_law: JumpLawSpec,
    pub friction: FrictionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub premium: Option<PremiumSpec>,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reproduce: Option<Reproduce>,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Builds and validates the problem.
    pub fn to_problem(&self) -> Result<Problem> {
        let d = self.d;
        if d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        let market = MarketModel::new(
            self.mu.to_vector(d, "mu")?,
            self.sigma.to_matrix(d)?,
            self.r,
            self.r_borrow,
            self.rho.to_vector(d, "rho")?,
            self.b,
        );
        let dist = match &self.jump_law {
            JumpLawSpec::Beta { alpha, beta } => JumpDist::beta(*alpha, *beta),
            JumpLawSpec::Discrete { points, weights } => JumpDist::Discrete {
                points: points.clone(),
                weights: weights.clone(),
            },
        };
        let premium = || -> Result<PremiumSchedule> {
            match &self.premium {
                Some(PremiumSpec::Linear { q }) => Ok(PremiumSchedule::Linear { q: *q }),
                Some(PremiumSpec::Power { q, delta }) => Ok(PremiumSchedule::Power { q: *q, delta: *delta }),
                None => Err(Error::Config("premium: required for this friction".into())),
            }
        };
        let friction = match &self.friction {
            FrictionSpec::Frictionless => Friction::Frictionless { premium: premium()? },
            FrictionSpec::DifferentialRates => Friction::DifferentialRates { premium: premium()? },
            FrictionSpec::LargeInvestor { m_plus, m_minus } => Friction::LargeInvestor {
                premium: premium()?,
                m_plus: *m_plus,
                m_minus: *m_minus,
            },
            FrictionSpec::SmoothG { g } => {
                let g: Arc<dyn MarginFunction> = match g {
                    MarginSpec::Quadratic { c } => Arc::new(QuadraticMargin { c: *c }),
                    MarginSpec::SmoothSpread { spread, width, c } => Arc::new(SmoothSpread {
                        spread: *spread,
                        width: *width,
                        c: *c,
                    }),
                };
                Friction::SmoothG { premium: premium()?, g }
            }
            FrictionSpec::PortfolioPremium { q } => {
                if self.premium.is_some() {
                    return Err(Error::Config(
                        "premium: not used with portfolio_premium (the rate lives in friction.q)".into(),
                    ));
                }
                let q: Arc<dyn PremiumRate> = match q {
                    RateSpec::Hyperbolic { c, a, base } => {
                        let base = match base {
                            Some(b) => *b,
                            None => self.lambda * crate::jumps::JumpFunctionals::new(dist.clone()).mean(),
                        };
                        Arc::new(HyperbolicRate { base, c: *c, a: *a })
                    }
                    RateSpec::Constant { q } => Arc::new(ConstantRate { q: *q }),
                };
                Friction::PortfolioPremium { q }
            }
        };
        Problem::new(market, JumpLaw::new(self.lambda, dist), friction, Utility::new(self.eta))
    }
}

pub fn load_problem(path: &Path) -> Result<(ModelFile, Problem)> {
    let file = ModelFile::load(path)?;
    let problem = file.to_problem()?;
    Ok((file, problem))
}

#[cfg(test)]
mod tests {
    use super::*;

    const A1: &str = r#"{
        "name": "a1", "d": 2, "mu": [0.08, 0.10],
        "sigma": {"vols": [0.25, 0.32], "correlation": 0.25},
        "r": 0.02, "R": 0.06, "rho": [0.2, -0.3], "b": 0.4, "lambda": 0.25,
        "jump_law": {"type": "beta", "alpha": 2, "beta": 8},
        "friction": {"type": "differential_rates"},
        "premium": {"type": "linear", "q": 0.3}, "eta": 1.0
    }"#;

    #[test]
    fn factored_sigma_matches_lower_triangular_form() {
        let p = ModelFile::from_json(A1).unwrap().to_problem().unwrap();
        let s: f64 = 0.25;
        let sigma = p.market.sigma();
        assert_eq!(sigma[(0, 0)], 0.25);
        assert_eq!(sigma[(0, 1)], 0.0);
        assert!((sigma[(1, 0)] - 0.32 * s).abs() < 1e-16);
        assert!((sigma[(1, 1)] - 0.32 * (1.0 - s * s).sqrt()).abs() < 1e-16);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let err = ModelFile::from_json(&A1.replace("\"mu\"", "\"mew\"")).unwrap_err().to_string();
        assert!(err.contains("mew") && err.contains("line"), "{err}");
        let err = ModelFile::from_json(&A1.replace("[0.2, -0.3]", "[0.2]"))
            .unwrap()
            .to_problem()
            .unwrap_err()
            .to_string();
        assert!(err.contains("rho"), "{err}");
    }

    #[test]
    fn rejects_inverted_rates() {
        let err = ModelFile::from_json(&A1.replace("\"R\": 0.06", "\"R\": 0.01"))
            .unwrap()
            .to_problem()
            .unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }

    #[test]
    fn round_trips() {
        let f = ModelFile::from_json(A1).unwrap();
        let again = ModelFile::from_json(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(f, again);
    }
}
