//! One-parameter sweeps over a base problem, with CSV rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ConstantRate, Friction, Problem};
use crate::solvers::{solve_with, ReportSummary, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepParam {
    Eta,
    /// Scalar ρ for one asset; the magnitude of the ρ vector otherwise.
    Rho,
    /// Borrowing rate `R`.
    BorrowRate,
    /// Lending rate `r`.
    LendRate,
    Lambda,
    /// Linear premium rate, or the constant portfolio premium.
    Q,
    /// Drift of asset `k`, zero-based.
    Mu(usize),
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepParam::Eta => f.write_str("eta"),
            SweepParam::Rho => f.write_str("rho"),
            SweepParam::BorrowRate => f.write_str("R"),
            SweepParam::LendRate => f.write_str("r"),
            SweepParam::Lambda => f.write_str("lambda"),
            SweepParam::Q => f.write_str("q"),
            SweepParam::Mu(k) => write!(f, "mu:{}", k + 1),
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    /// Accepts `eta`, `rho`, `R`, `r`, `lambda`, `q`, `mu` and `mu:k` (1-based).
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "eta" => SweepParam::Eta,
            "rho" => SweepParam::Rho,
            "R" => SweepParam::BorrowRate,
            "r" => SweepParam::LendRate,
            "lambda" => SweepParam::Lambda,
            "q" => SweepParam::Q,
            "mu" => SweepParam::Mu(0),
            other => match other.strip_prefix("mu:").map(str::parse::<usize>) {
                Some(Ok(k)) if k >= 1 => SweepParam::Mu(k - 1),
                _ => {
                    return Err(Error::Config(format!(
                        "unknown sweep parameter '{other}' (expected eta, rho, R, r, lambda, q, mu or mu:k)"
                    )))
                }
            },
        })
    }
}

impl SweepParam {
    /// `problem` with this parameter set to `v`.
    pub fn apply(&self, problem: &Problem, v: f64) -> Result<Problem> {
        let m = &problem.market;
        match *self {
            SweepParam::Eta => problem.with_eta(v),
            SweepParam::Rho => {
                let rho = if m.dim() == 1 {
                    DVector::from_element(1, v)
                } else {
                    let norm = m.rho().norm();
                    if norm == 0.0 {
                        return Err(Error::Domain("cannot scale a zero rho vector".into()));
                    }
                    m.rho() * (v / norm)
                };
                problem.with_market(m.with_rho(rho))
            }
            SweepParam::BorrowRate => problem.with_market(m.with_rates(m.r(), v)),
            SweepParam::LendRate => {
                let borrow = match problem.friction {
                    Friction::DifferentialRates { .. } => m.r_borrow(),
                    _ => m.r_borrow().max(v),
                };
                problem.with_market(m.with_rates(v, borrow))
            }
            SweepParam::Lambda => problem.with_lambda(v),
            SweepParam::Q => {
                let friction = match &problem.friction {
                    Friction::PortfolioPremium { .. } => Friction::PortfolioPremium {
                        q: Arc::new(ConstantRate { q: v }),
                    },
                    f => {
                        let premium = f
                            .premium()
                            .and_then(|p| p.with_rate(v))
                            .ok_or_else(|| Error::Unsupported("premium schedule has no rate parameter".into()))?;
                        f.with_premium(premium).expect("friction carries a premium")
                    }
                };
                problem.with_friction(friction)
            }
            SweepParam::Mu(k) => {
                if k >= m.dim() {
                    return Err(Error::Domain(format!("mu:{} but the model has {} assets", k + 1, m.dim())));
                }
                let mut mu = m.mu().clone();
                mu[k] = v;
                problem.with_market(m.with_mu(mu))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    /// Solver summary, or the error message for this point.
    pub outcome: std::result::Result<ReportSummary, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub param: SweepParam,
    pub dim: usize,
    pub rows: Vec<SweepRow>,
    /// Free-form metadata (model hash, seed, ...) filled in by callers.
    pub provenance: BTreeMap<String, String>,
}

/// Solves the problem at each grid value. Per-point failures are recorded,
/// not propagated.
pub fn sweep(problem: &Problem, param: SweepParam, grid: &[f64]) -> Result<SweepResult> {
    sweep_with(problem, param, grid, &SolveOptions::default())
}

pub fn sweep_with(problem: &Problem, param: SweepParam, grid: &[f64], opts: &SolveOptions) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Domain("sweep grid is empty".into()));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("sweep grid must be finite and strictly increasing".into()));
    }
    let rows = grid
        .par_iter()
        .map(|&value| SweepRow {
            value,
            outcome: param
                .apply(problem, value)
                .and_then(|p| solve_with(&p, opts))
                .map(|rep| rep.summary())
                .map_err(|e| e.to_string()),
        })
        .collect();
    Ok(SweepResult {
        param,
        dim: problem.dim(),
        rows,
        provenance: BTreeMap::new(),
    })
}

/// `n` points from `from` to `to` inclusive; `n = 1` gives `[from]`.
pub fn linear_grid(from: f64, to: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("grid needs at least one point".into()));
    }
    if n == 1 {
        return Ok(vec![from]);
    }
    Ok((0..n)
        .map(|i| {
            if i + 1 == n {
                to
            } else {
                from + (to - from) * i as f64 / (n - 1) as f64
            }
        })
        .collect())
}

/// `%.12g`-style rendering: 12 significant digits, trailing zeros dropped.
pub fn format_sig(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    trim_zeros(&format!("{x:.*}", (11 - exp) as usize)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl SweepResult {
    pub fn header(&self) -> String {
        let mut cols = vec!["param_value".to_string()];
        cols.extend((1..=self.dim).map(|i| format!("pi_{i}")));
        cols.extend(
            ["pi_sum", "kappa", "case_label", "xi_star", "objective", "cert_residual", "error"]
                .iter()
                .map(|s| s.to_string()),
        );
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for row in &self.rows {
            let mut cols = vec![format_sig(row.value)];
            match &row.outcome {
                Ok(s) => {
                    cols.extend(s.pi.iter().map(|p| format_sig(*p)));
                    cols.push(format_sig(s.pi_sum));
                    cols.push(format_sig(s.kappa));
                    cols.push(s.case_label.clone());
                    cols.push(s.xi_star.map(format_sig).unwrap_or_default());
                    cols.push(format_sig(s.objective));
                    cols.push(format_sig(s.cert_residual));
                    cols.push(String::new());
                }
                Err(e) => {
                    cols.extend(std::iter::repeat_n(String::new(), self.dim + 7));
                    cols.push(csv_field(e));
                }
            }
            out.push_str(&cols.join(","));
            out.push('\n');
        }
        out
    }

    pub fn successes(&self) -> impl Iterator<Item = (f64, &ReportSummary)> {
        self.rows.iter().filter_map(|r| r.outcome.as_ref().ok().map(|s| (r.value, s)))
    }
}
