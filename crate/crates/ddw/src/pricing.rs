//! Per-block column generation: pricing subproblems and the acceptance
//! threshold for approximate duals.
//!
//! With duals that are only close to feasible, a small negative reduced cost
//! can be noise. A candidate vertex is accepted only when its reduced cost
//! beats `-max_i ||A_n^i|| * eps_d`, with the *target* dual tolerance, so no
//! column whose true reduced cost is nonnegative can sneak in.

use crate::linalg;
use crate::model::{BlockData, Column, ColumnPool};
use crate::solver::{solve_lp, LpProblem, LpStatus, Sense};
use crate::{DdwError, Result};

/// Outcome of one pricing round for one block.
///
/// `column` is present iff `z_sep < threshold` and the optimizing vertex is
/// not already pooled; a rediscovered vertex sets `duplicate` instead and
/// counts as "no column added".
#[derive(Debug, Clone)]
pub struct PricingOutcome {
    /// Minimum reduced cost over the block polytope.
    pub z_sep: f64,
    /// Acceptance threshold (negative).
    pub threshold: f64,
    pub column: Option<Column>,
    pub duplicate: bool,
}

fn block_lp(block: &BlockData, objective: Vec<f64>) -> LpProblem {
    let mut lp = LpProblem::new(
        Sense::Min,
        objective,
        block.lower.clone(),
        block.upper.clone(),
    );
    for r in 0..block.local_mat.rows() {
        lp.add_le_row(block.local_mat.row(r).to_vec(), block.local_rhs[r]);
    }
    lp
}

/// Minimizes `(c_n - A_n^T pi).x` over the block polytope, returning the
/// optimal value and the optimizing vertex (the simplex always lands on a
/// basic solution).
pub fn best_vertex(block: &BlockData, pi_hat: &[f64]) -> Result<(f64, Vec<f64>)> {
    let shifted = block.link_mat.t_matvec(pi_hat);
    let objective: Vec<f64> = block
        .cost
        .iter()
        .zip(&shifted)
        .map(|(c, s)| c - s)
        .collect();
    let lp = block_lp(block, objective);
    let solution = solve_lp(&lp)?;
    match solution.status {
        LpStatus::Optimal => Ok((solution.objective, solution.x)),
        LpStatus::Infeasible => Err(DdwError::InfeasibleBlock {
            block: usize::MAX,
            detail: "pricing subproblem is infeasible".into(),
        }),
        LpStatus::Unbounded => Err(DdwError::InvariantViolation(
            "pricing subproblem unbounded despite box bounds".into(),
        )),
    }
}

/// Solves `min { (c_n - A_n^T pi).x - u : x in X_n }` and applies the
/// acceptance rule. `pool` supplies the threshold norm and deduplication.
pub fn price(
    block: &BlockData,
    pool: &ColumnPool,
    pi_hat: &[f64],
    u_hat: f64,
    eps_d_target: f64,
) -> Result<PricingOutcome> {
    debug_assert!(!pool.is_empty(), "pricing threshold needs a nonempty pool");
    let (value, x) = best_vertex(block, pi_hat).map_err(|e| match e {
        DdwError::InfeasibleBlock { detail, .. } => DdwError::InfeasibleBlock {
            block: pool.block,
            detail,
        },
        other => other,
    })?;
    let solution_x = x;
    let z_sep = value - u_hat;
    let threshold = -pool.max_link_norm() * eps_d_target;
    if z_sep < threshold {
        if pool.contains_point(&solution_x) {
            return Ok(PricingOutcome {
                z_sep,
                threshold,
                column: None,
                duplicate: true,
            });
        }
        let column = Column::from_point(pool.block, solution_x, block);
        Ok(PricingOutcome {
            z_sep,
            threshold,
            column: Some(column),
            duplicate: false,
        })
    } else {
        Ok(PricingOutcome {
            z_sep,
            threshold,
            column: None,
            duplicate: false,
        })
    }
}

/// The vertex minimizing the raw block cost; guarantees every pool is
/// nonempty before the first consensus solve.
pub fn seed_initial_column(block: &BlockData, block_id: usize) -> Result<Column> {
    let lp = block_lp(block, block.cost.clone());
    let solution = solve_lp(&lp)?;
    match solution.status {
        LpStatus::Optimal => Ok(Column::from_point(block_id, solution.x, block)),
        LpStatus::Infeasible => Err(DdwError::InfeasibleBlock {
            block: block_id,
            detail: "block polytope is empty".into(),
        }),
        LpStatus::Unbounded => Err(DdwError::InvariantViolation(
            "block polytope unbounded despite box bounds".into(),
        )),
    }
}

/// Reduced cost of a pooled column at the given duals.
pub fn reduced_cost(column: &Column, pi_hat: &[f64], u_hat: f64) -> f64 {
    column.cost - linalg::dot(&column.link, pi_hat) - u_hat
}
