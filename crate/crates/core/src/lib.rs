//! Quasi-Newton updates built from Bregman divergences on the positive
//! definite cone, with influence-function probes for inexact line search.

// `!(x > 0.0)` is used on purpose so that NaN takes the error path
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod linesearch;
pub mod potential;
pub mod problems;
pub mod robustness;
pub mod rng;
pub mod solver;
pub mod spd;
pub mod update;

pub use error::{QnError, Result};
pub use linesearch::{LineSearchMode, LineSearchParams};
pub use potential::{Potential, PotentialKind, ValidationReport};
pub use problems::{make_problem, Problem, ProblemKind};
pub use solver::{minimize, NoiseAdvance, Outcome, SolverConfig, SolverTrace};
pub use spd::{Sign, SpdCholesky};
pub use update::{
    bfgs_core, dfp_core, family_update, primal_update, solve_scale_equation, SecantPair,
    UpdateFamily,
};
