//! Moment relaxations of quantum behaviors with untrusted sources.
//!
//! Every source pair `(s, t)` carries its own moment functional `L_st` over the same
//! operator algebra, with `L_st(1) = p(st)` and a positive semidefinite moment matrix.

pub mod lowering;
pub mod membership;
pub mod monomial;
pub mod problem;
pub mod sdp;
pub mod seesaw;

use thiserror::Error;

pub use lowering::{solve_sdp, Farkas, Lowered, SdpSolution};
pub use membership::{membership_test, Certificate, Membership};
pub use monomial::{build_basis, canonical_form, Monomial, Party, Symbol};
pub use problem::{build_moment_problem, MomentProblem, ProbExpr, ProblemSpec, Weights, MAX_LEVEL};
pub use sdp::{SdpStatus, SolverConfig};

use crate::scenario::ScenarioError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NpaError {
    #[error("level {0} is outside 1..=3")]
    InvalidLevel(usize),
    #[error("residual bounds ({0}, {1}) need 0 < l <= u < 1 and several source pairs")]
    InvalidBounds(f64, f64),
    #[error("invalid source weights: {0}")]
    InvalidWeights(String),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("{0}")]
    MomentOutOfScope(String),
    #[error("inconsistent constraints: {0}")]
    Inconsistent(String),
    #[error("solver did not certify a bound: {0:?}")]
    Solver(SdpStatus),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

pub type Result<T> = std::result::Result<T, NpaError>;

/// Upper bound on `spec.objective`; fails unless the solver reaches optimality.
pub fn max_value(spec: &ProblemSpec, cfg: &SolverConfig) -> Result<(f64, SdpSolution)> {
    let p = build_moment_problem(spec)?;
    let sol = solve_sdp(&p, cfg);
    match sol.status {
        SdpStatus::Optimal => Ok((sol.value, sol)),
        SdpStatus::PrimalInfeasible => {
            Err(NpaError::Inconsistent("the constraints admit no moment functional".into()))
        }
        s => Err(NpaError::Solver(s)),
    }
}
