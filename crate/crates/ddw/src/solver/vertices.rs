//! Exhaustive enumeration of basic feasible points for small LPs.
//!
//! Independent of the simplex path: every size-`n` active set (equality rows
//! forced, then combinations of `<=` rows and finite bounds) is solved as a
//! linear system and kept when feasible. Used as a test oracle and to list
//! the extreme points of small block polytopes.

use super::{LpProblem, SolverError};
use crate::linalg::{gauss_solve, Mat};
use crate::model::dedup_key;
use std::collections::HashSet;

const VAR_CAP: usize = 12;
const COMBINATION_CAP: u128 = 20_000_000;

enum Constraint<'a> {
    Row { coeffs: &'a [f64], rhs: f64 },
    Bound { var: usize, value: f64 },
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let mut r: u128 = 1;
    for i in 0..k.min(n - k) {
        r = r * (n - i) as u128 / (i + 1) as u128;
        if r > COMBINATION_CAP * 2 {
            return r;
        }
    }
    r
}

/// Enumerates the vertices (basic feasible points) of the feasible set of
/// `problem`. The objective is ignored. Exhaustive for nondegenerate inputs;
/// degenerate vertices are reported once thanks to 1e-9 deduplication.
pub fn enumerate_vertices(problem: &LpProblem) -> Result<Vec<Vec<f64>>, SolverError> {
    problem.validate()?;
    let n = problem.num_vars();
    if n > VAR_CAP {
        return Err(SolverError::DimensionCap {
            cap: VAR_CAP,
            got: n,
        });
    }
    if problem.eq_rows.len() > n {
        return Err(SolverError::InvalidProblem {
            detail: "more equality rows than variables".into(),
        });
    }

    let mut optional: Vec<Constraint> = Vec::new();
    for (row, &rhs) in problem.le_rows.iter().zip(&problem.le_rhs) {
        optional.push(Constraint::Row { coeffs: row, rhs });
    }
    for j in 0..n {
        if problem.lower[j].is_finite() {
            optional.push(Constraint::Bound {
                var: j,
                value: problem.lower[j],
            });
        }
        if problem.upper[j].is_finite() && problem.upper[j] != problem.lower[j] {
            optional.push(Constraint::Bound {
                var: j,
                value: problem.upper[j],
            });
        }
    }
    let need = n - problem.eq_rows.len();
    let combos = binomial(optional.len(), need);
    if combos > COMBINATION_CAP {
        return Err(SolverError::EnumerationTooLarge {
            combinations: combos,
        });
    }

    let feasible = |x: &[f64]| -> bool {
        for (row, &rhs) in problem.le_rows.iter().zip(&problem.le_rhs) {
            if crate::linalg::dot(row, x) > rhs + 1e-9 * (1.0 + rhs.abs()) {
                return false;
            }
        }
        for (row, &rhs) in problem.eq_rows.iter().zip(&problem.eq_rhs) {
            if (crate::linalg::dot(row, x) - rhs).abs() > 1e-9 * (1.0 + rhs.abs()) {
                return false;
            }
        }
        for j in 0..x.len() {
            if x[j] < problem.lower[j] - 1e-9 * (1.0 + problem.lower[j].abs())
                || x[j] > problem.upper[j] + 1e-9 * (1.0 + problem.upper[j].abs())
            {
                return false;
            }
        }
        true
    };

    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut vertices = Vec::new();
    let mut pick: Vec<usize> = (0..need).collect();
    let mut system = Mat::zeros(n, n);
    let mut rhs = vec![0.0; n];
    loop {
        // Assemble the active system: equalities first, then the combination.
        for (i, (row, &r)) in problem.eq_rows.iter().zip(&problem.eq_rhs).enumerate() {
            system.row_mut(i).copy_from_slice(row);
            rhs[i] = r;
        }
        for (slot, &ci) in pick.iter().enumerate() {
            let i = problem.eq_rows.len() + slot;
            match &optional[ci] {
                Constraint::Row { coeffs, rhs: r } => {
                    system.row_mut(i).copy_from_slice(coeffs);
                    rhs[i] = *r;
                }
                Constraint::Bound { var, value } => {
                    let row = system.row_mut(i);
                    row.fill(0.0);
                    row[*var] = 1.0;
                    rhs[i] = *value;
                }
            }
        }
        if let Some(x) = gauss_solve(&system, &rhs) {
            if feasible(&x) && seen.insert(dedup_key(&x)) {
                vertices.push(x);
            }
        }

        // Next lexicographic combination.
        if need == 0 {
            break;
        }
        let mut i = need;
        while i > 0 && pick[i - 1] == i - 1 + optional.len() - need {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        pick[i - 1] += 1;
        for k in i..need {
            pick[k] = pick[k - 1] + 1;
        }
    }
    Ok(vertices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_lp, LpStatus, Sense};

    #[test]
    fn unit_square_has_four_vertices() {
        let p = LpProblem::new(Sense::Min, vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0]);
        let v = enumerate_vertices(&p).unwrap();
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn simplex_triangle() {
        let mut p = LpProblem::new(
            Sense::Min,
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![f64::INFINITY, f64::INFINITY],
        );
        p.add_le_row(vec![1.0, 1.0], 1.0);
        let mut v = enumerate_vertices(&p).unwrap();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(v, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn refuses_large_dimension() {
        let p = LpProblem::new(Sense::Min, vec![0.0; 13], vec![0.0; 13], vec![1.0; 13]);
        assert!(matches!(
            enumerate_vertices(&p),
            Err(SolverError::DimensionCap { .. })
        ));
    }

    #[test]
    fn contains_every_lp_optimum() {
        // Random 3-var polytope: for 20 random objectives, the simplex
        // optimum must appear among the enumerated vertices.
        let mut p = LpProblem::new(Sense::Min, vec![0.0; 3], vec![0.0; 3], vec![4.0; 3]);
        p.add_le_row(vec![1.0, 2.0, 1.0], 6.0);
        p.add_le_row(vec![2.0, -1.0, 1.0], 5.0);
        p.add_le_row(vec![-1.0, 1.0, 2.0], 4.0);
        let vertices = enumerate_vertices(&p).unwrap();
        assert!(!vertices.is_empty());
        let mut seed = 99u64;
        let mut rnd = || {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((seed >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..20 {
            let mut q = p.clone();
            q.cost = vec![rnd(), rnd(), rnd()];
            let s = solve_lp(&q).unwrap();
            assert_eq!(s.status, LpStatus::Optimal);
            let hit = vertices.iter().any(|v| {
                v.iter()
                    .zip(&s.x)
                    .all(|(a, b)| (a - b).abs() <= 1e-7 * (1.0 + a.abs()))
            });
            assert!(hit, "optimum {:?} not among enumerated vertices", s.x);
        }
    }
}
