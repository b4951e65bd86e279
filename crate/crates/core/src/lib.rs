//! Optimal portfolio and insurance demand for a CRRA investor facing
//! insurable jump-diffusion background risk and nonlinear frictions.
//!
//! The crate provides closed-form-regime solvers with optimality
//! certificates, a brute-force grid oracle, parameter sweeps and an exact
//! Monte Carlo simulator of terminal wealth.

pub mod config;
pub mod error;
pub mod hamiltonian;
pub mod jumps;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod roots;
pub mod simulate;
pub mod solvers;
pub mod special;
pub mod sweep;

pub use error::{Error, Result};
pub use hamiltonian::{certify, conjugate, eval_objective, value_function, Certificate, ObjectiveEval};
pub use jumps::{fosd_compare, sample_jumps, Dominance, JumpFunctionals};
pub use model::{
    validate_model, ConstantRate, ConvexPremium, Friction, HyperbolicRate, JumpDist, JumpLaw, MarginFunction,
    MarketModel, Policy, PremiumRate, PremiumSchedule, Problem, QuadraticMargin, SmoothSpread, Utility,
    ValidationReport,
};
pub use nalgebra::{DMatrix, DVector};
pub use oracle::{grid_maximize, GridSpec, OracleResult};
pub use simulate::{compare_policies, simulate_terminal_utility, Comparison, PathRecord, SimConfig, SimEstimate, Verdict};
pub use solvers::{solve, CaseLabel, SolveReport};
pub use sweep::{sweep, SweepParam, SweepResult};
