//! Self-contained dense LP and convex-QP solvers with multiplier extraction.
//!
//! * [`solve_lp`] — bounded-variable revised simplex (two phases, Bland's rule
//!   fallback after a stall). Returns exact row duals and reduced costs, and
//!   is deterministic: byte-identical problems produce bitwise-identical
//!   solutions.
//! * [`solve_qp`] — primal-dual interior point (Mehrotra predictor-corrector)
//!   for `max q.z - 1/2 z.Q.z  s.t.  G z <= h` with `Q` PSD; zero rows/columns
//!   in `Q` are fine for unpenalized coordinates.
//! * [`enumerate_vertices`] — exhaustive basic-feasible-point enumeration for
//!   small problems, used as an independent oracle.
//!
//! Solver calls are single-use and single-threaded; distinct calls may run in
//! parallel freely.

mod ipm;
mod simplex;
mod vertices;

pub use ipm::solve_qp;
pub use simplex::solve_lp;
pub use vertices::enumerate_vertices;

use crate::linalg::Mat;
use thiserror::Error;

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

/// A dense LP: optimize `cost.x` subject to `le` rows, `eq` rows, and box
/// bounds (entries may be infinite).
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub sense: Sense,
    pub cost: Vec<f64>,
    pub le_rows: Vec<Vec<f64>>,
    pub le_rhs: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    pub fn new(sense: Sense, cost: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            sense,
            cost,
            le_rows: Vec::new(),
            le_rhs: Vec::new(),
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            lower,
            upper,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    /// Adds `row . x <= rhs`.
    pub fn add_le_row(&mut self, row: Vec<f64>, rhs: f64) {
        debug_assert_eq!(row.len(), self.num_vars());
        self.le_rows.push(row);
        self.le_rhs.push(rhs);
    }

    /// Adds `row . x = rhs`.
    pub fn add_eq_row(&mut self, row: Vec<f64>, rhs: f64) {
        debug_assert_eq!(row.len(), self.num_vars());
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
    }

    pub(crate) fn validate(&self) -> Result<(), SolverError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(SolverError::InvalidProblem {
                detail: "bounds length does not match cost length".into(),
            });
        }
        for j in 0..n {
            if !self.cost[j].is_finite() {
                return Err(SolverError::InvalidProblem {
                    detail: format!("cost[{j}] is not finite"),
                });
            }
            if self.lower[j] > self.upper[j] {
                return Err(SolverError::InvalidProblem {
                    detail: format!("inverted bounds at variable {j}"),
                });
            }
            if self.lower[j].is_nan() || self.upper[j].is_nan() {
                return Err(SolverError::InvalidProblem {
                    detail: format!("NaN bound at variable {j}"),
                });
            }
        }
        if self.le_rows.len() != self.le_rhs.len() || self.eq_rows.len() != self.eq_rhs.len() {
            return Err(SolverError::InvalidProblem {
                detail: "row/rhs length mismatch".into(),
            });
        }
        for (row, rhs) in self
            .le_rows
            .iter()
            .zip(&self.le_rhs)
            .chain(self.eq_rows.iter().zip(&self.eq_rhs))
        {
            if row.len() != n {
                return Err(SolverError::InvalidProblem {
                    detail: "row length does not match variable count".into(),
                });
            }
            if !rhs.is_finite() || row.iter().any(|&v| !v.is_finite()) {
                return Err(SolverError::InvalidProblem {
                    detail: "non-finite row data".into(),
                });
            }
        }
        Ok(())
    }
}

/// Outcome classification of an LP solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// LP solve result.
///
/// For `Optimal` results: duals are reported for the problem *as given* (for
/// `Min`, `<=` rows carry nonpositive duals; for `Max`, nonnegative), and
/// `bound_duals` are the reduced costs per variable. For non-optimal statuses
/// the vectors are empty and `objective` is meaningless.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual per row: `le` rows first (input order), then `eq` rows.
    pub row_duals: Vec<f64>,
    /// Reduced cost per variable.
    pub bound_duals: Vec<f64>,
}

/// A dense concave QP: `max q.z - 1/2 z.Q.z  s.t.  G z <= h`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Symmetric PSD quadratic term; zero rows/columns allowed.
    pub quad: Mat,
    /// Linear term `q`.
    pub linear: Vec<f64>,
    /// Inequality matrix `G` (may have zero rows).
    pub ineq_mat: Mat,
    /// Inequality right-hand side `h`.
    pub ineq_rhs: Vec<f64>,
}

/// QP solve result with one multiplier (`>= 0`) per `<=` row, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("numerical failure: {detail}")]
    NumericalFailure { detail: String },
    #[error("problem is unbounded: {detail}")]
    Unbounded { detail: String },
    #[error("invalid problem: {detail}")]
    InvalidProblem { detail: String },
    #[error("vertex enumeration limited to {cap} variables, got {got}")]
    DimensionCap { cap: usize, got: usize },
    #[error("vertex enumeration would visit {combinations} active sets")]
    EnumerationTooLarge { combinations: u128 },
}
