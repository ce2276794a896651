//! Solver suite for block-angular linear programs.
//!
//! The crate implements three ways of solving a block-angular LP
//! (independent per-block constraints coupled by a handful of linking rows):
//!
//! * **Distributed Dantzig-Wolfe** ([`driver::run_ddw`]): column generation in
//!   which the restricted master's *dual* is solved by consensus ADMM across
//!   per-block workers, so no block ever shares its constraint data with the
//!   coordinator. Workers exchange only dual vectors and column projections,
//!   over either an in-process channel transport or a length-prefixed TCP
//!   protocol ([`runtime`]).
//! * **Classical Dantzig-Wolfe** ([`bench::solve_classical_dwd`]): a central
//!   restricted master solved by simplex with exact duals, parallel pricing.
//! * **Direct solve** ([`bench::solve_direct`]): the full LP handed to the
//!   built-in bounded-variable simplex, used as the optimality oracle.
//!
//! Supporting pieces: dense LP/QP solvers with multiplier extraction
//! ([`solver`]), a deterministic random instance generator ([`instgen`]), and
//! benchmark metrics with CSV/JSON reporting ([`bench`]).

pub mod admm;
pub mod bench;
pub mod driver;
pub mod instgen;
pub mod linalg;
pub mod model;
pub mod pricing;
pub mod runtime;
pub mod solver;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum DdwError {
    #[error("solver failure: {0}")]
    Solver(#[from] solver::SolverError),
    #[error("model error: {0}")]
    Model(#[from] model::ModelError),
    #[error("protocol error: {0}")]
    Protocol(#[from] runtime::ProtocolError),
    #[error("instance generation failed: {0}")]
    Generation(String),
    #[error("ADMM did not converge after {iterations} iterations (r_p={r_p:.3e}, r_d={r_d:.3e})")]
    NonConvergence {
        iterations: usize,
        r_p: f64,
        r_d: f64,
    },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("block {block} is infeasible: {detail}")]
    InfeasibleBlock { block: usize, detail: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DdwError>;
