//! Bounded-variable revised simplex with an explicit basis inverse.
//!
//! Two-phase method: phase 1 minimizes artificial variables added on rows the
//! initial slack basis cannot satisfy, phase 2 minimizes the real objective
//! with artificials pinned to zero. Pricing is Dantzig's rule with
//! lowest-index tie-breaking; after a stall (no objective progress over a
//! window of pivots) the solver switches permanently to Bland's rule, which
//! guarantees termination. All tie-breaks are index-based, so byte-identical
//! problems yield bitwise-identical solutions.

use super::{LpProblem, LpSolution, LpStatus, Sense, SolverError};
use crate::linalg::axpy;

const OPT_TOL: f64 = 1e-9;
const PIV_TOL: f64 = 1e-9;
const RATIO_TIE_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-8;
const STALL_LIMIT: usize = 400;
const REFRESH_INTERVAL: usize = 512;

/// Column of the internal constraint matrix.
enum Col {
    Dense(Vec<f64>),
    /// `sign` at `row`, zero elsewhere (slacks and artificials).
    Unit { row: usize, sign: f64 },
}

impl Col {
    fn dot(&self, y: &[f64]) -> f64 {
        match self {
            Col::Dense(v) => crate::linalg::dot(v, y),
            Col::Unit { row, sign } => sign * y[*row],
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Free variable currently parked at zero.
    FreeZero,
}

struct Tableau {
    num_rows: usize,
    cols: Vec<Col>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    /// First artificial variable index; artificials run to `cols.len()`.
    art_start: usize,
    basis: Vec<usize>,
    state: Vec<VarState>,
    /// Row-major dense basis inverse.
    binv: Vec<f64>,
    /// Values of basic variables.
    xb: Vec<f64>,
    bland: bool,
    stall: usize,
    pivots_since_refresh: usize,
}

impl Tableau {
    fn value_of_nonbasic(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lower[j],
            VarState::AtUpper => self.upper[j],
            VarState::FreeZero => 0.0,
            VarState::Basic(_) => unreachable!("asked for nonbasic value of basic variable"),
        }
    }

    /// `w = B^-1 a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.num_rows;
        match &self.cols[j] {
            Col::Dense(a) => {
                let mut w = vec![0.0; m];
                for r in 0..m {
                    w[r] = crate::linalg::dot(&self.binv[r * m..(r + 1) * m], a);
                }
                w
            }
            Col::Unit { row, sign } => {
                let mut w = vec![0.0; m];
                for r in 0..m {
                    w[r] = sign * self.binv[r * m + row];
                }
                w
            }
        }
    }

    /// `y = c_B^T B^-1` for the current phase costs.
    fn btran_duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.num_rows;
        let mut y = vec![0.0; m];
        for (k, &bj) in self.basis.iter().enumerate() {
            let c = cost[bj];
            if c != 0.0 {
                axpy(c, &self.binv[k * m..(k + 1) * m], &mut y);
            }
        }
        y
    }

    /// Residual `b - A_N x_N` over nonbasic variables.
    fn nonbasic_residual(&self) -> Vec<f64> {
        let mut resid = self.rhs.clone();
        for j in 0..self.cols.len() {
            if let VarState::Basic(_) = self.state[j] {
                continue;
            }
            let v = self.value_of_nonbasic(j);
            if v == 0.0 {
                continue;
            }
            match &self.cols[j] {
                Col::Dense(a) => axpy(-v, a, &mut resid),
                Col::Unit { row, sign } => resid[*row] -= sign * v,
            }
        }
        resid
    }

    /// Rebuilds the basis inverse from scratch (Gauss-Jordan with partial
    /// pivoting) and recomputes basic values.
    fn refactor(&mut self) -> Result<(), SolverError> {
        let m = self.num_rows;
        // Assemble the basis matrix column by column.
        let mut bmat = vec![0.0; m * m];
        for (k, &bj) in self.basis.iter().enumerate() {
            match &self.cols[bj] {
                Col::Dense(a) => {
                    for r in 0..m {
                        bmat[r * m + k] = a[r];
                    }
                }
                Col::Unit { row, sign } => bmat[row * m + k] = *sign,
            }
        }
        let mut inv = vec![0.0; m * m];
        for r in 0..m {
            inv[r * m + r] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            let mut best = bmat[col * m + col].abs();
            for r in col + 1..m {
                let v = bmat[r * m + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best <= 1e-11 {
                return Err(SolverError::NumericalFailure {
                    detail: "singular basis during refactorization".into(),
                });
            }
            if piv != col {
                for c in 0..m {
                    bmat.swap(col * m + c, piv * m + c);
                    inv.swap(col * m + c, piv * m + c);
                }
            }
            let d = bmat[col * m + col];
            for c in 0..m {
                bmat[col * m + c] /= d;
                inv[col * m + c] /= d;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = bmat[r * m + col];
                if f == 0.0 {
                    continue;
                }
                for c in 0..m {
                    bmat[r * m + c] -= f * bmat[col * m + c];
                    inv[r * m + c] -= f * inv[col * m + c];
                }
            }
        }
        self.binv = inv;
        let resid = self.nonbasic_residual();
        let mut xb = vec![0.0; m];
        for r in 0..m {
            xb[r] = crate::linalg::dot(&self.binv[r * m..(r + 1) * m], &resid);
        }
        self.xb = xb;
        self.pivots_since_refresh = 0;
        Ok(())
    }

    /// Applies the pivot `(row r, ftran w)` to the basis inverse.
    fn update_binv(&mut self, r: usize, w: &[f64]) {
        let m = self.num_rows;
        let piv = w[r];
        let row_r: Vec<f64> = self.binv[r * m..(r + 1) * m]
            .iter()
            .map(|v| v / piv)
            .collect();
        for k in 0..m {
            if k == r {
                continue;
            }
            let f = w[k];
            if f == 0.0 {
                continue;
            }
            let dst = &mut self.binv[k * m..(k + 1) * m];
            for c in 0..m {
                dst[c] -= f * row_r[c];
            }
        }
        self.binv[r * m..(r + 1) * m].copy_from_slice(&row_r);
    }

    /// Runs the simplex loop to optimality for the given phase costs.
    fn optimize(&mut self, cost: &[f64], max_iters: usize) -> Result<(), SolverError> {
        let m = self.num_rows;
        for iter in 0..max_iters {
            if self.pivots_since_refresh >= REFRESH_INTERVAL {
                self.refactor()?;
            }
            let y = self.btran_duals(cost);

            // Pricing: pick the entering variable.
            let mut entering: Option<(usize, f64, f64)> = None; // (var, direction, score)
            for j in 0..self.cols.len() {
                match self.state[j] {
                    VarState::Basic(_) => continue,
                    _ => {}
                }
                if self.lower[j] == self.upper[j] {
                    continue; // fixed (includes pinned artificials)
                }
                let d = cost[j] - self.cols[j].dot(&y);
                let candidate = match self.state[j] {
                    VarState::AtLower if d < -OPT_TOL => Some((1.0, -d)),
                    VarState::AtUpper if d > OPT_TOL => Some((-1.0, d)),
                    VarState::FreeZero if d.abs() > OPT_TOL => {
                        Some((if d < 0.0 { 1.0 } else { -1.0 }, d.abs()))
                    }
                    _ => None,
                };
                if let Some((dir, score)) = candidate {
                    if self.bland {
                        entering = Some((j, dir, score));
                        break;
                    }
                    match entering {
                        Some((_, _, best)) if best >= score => {}
                        _ => entering = Some((j, dir, score)),
                    }
                }
            }
            let Some((q, dir, _)) = entering else {
                return Ok(()); // optimal for this phase
            };

            let mut w = self.ftran(q);

            // Ratio test: how far can x_q move in direction `dir`?
            let own_limit = if self.lower[q].is_finite() && self.upper[q].is_finite() {
                self.upper[q] - self.lower[q]
            } else {
                f64::INFINITY
            };
            let (mut t_best, mut leave): (f64, Option<usize>) = (own_limit, None);
            for r in 0..m {
                let delta = -dir * w[r];
                let bj = self.basis[r];
                let limit = if delta > PIV_TOL {
                    if self.upper[bj].is_finite() {
                        ((self.upper[bj] - self.xb[r]) / delta).max(0.0)
                    } else {
                        continue;
                    }
                } else if delta < -PIV_TOL {
                    if self.lower[bj].is_finite() {
                        ((self.lower[bj] - self.xb[r]) / delta).max(0.0)
                    } else {
                        continue;
                    }
                } else {
                    continue;
                };
                // Prefer a row pivot over a bound flip on ties, so the
                // leaving variable never overshoots its bound.
                let better = match leave {
                    None => limit < t_best + RATIO_TIE_TOL,
                    Some(cur) => {
                        if limit < t_best - RATIO_TIE_TOL {
                            true
                        } else if limit <= t_best + RATIO_TIE_TOL {
                            if self.bland {
                                bj < self.basis[cur]
                            } else {
                                w[r].abs() > w[cur].abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    t_best = limit.min(t_best);
                    leave = Some(r);
                }
            }

            if t_best.is_infinite() {
                return Err(SolverError::Unbounded {
                    detail: format!("unbounded ray through variable {q}"),
                });
            }

            // Stall tracking: no real progress over many pivots => Bland.
            if t_best <= RATIO_TIE_TOL {
                self.stall += 1;
                if self.stall >= STALL_LIMIT {
                    self.bland = true;
                }
            } else {
                self.stall = 0;
            }

            match leave {
                None => {
                    // Bound flip: x_q jumps to its other bound.
                    for r in 0..m {
                        self.xb[r] -= dir * t_best * w[r];
                    }
                    self.state[q] = match self.state[q] {
                        VarState::AtLower => VarState::AtUpper,
                        VarState::AtUpper => VarState::AtLower,
                        _ => unreachable!("free variables cannot bound-flip"),
                    };
                    self.pivots_since_refresh += 1;
                }
                Some(r) => {
                    if w[r].abs() < 1e-9 {
                        // Unreliable pivot: refactorize and retry the iteration.
                        self.refactor()?;
                        w = self.ftran(q);
                        if w[r].abs() < 1e-11 {
                            return Err(SolverError::NumericalFailure {
                                detail: "vanishing pivot element".into(),
                            });
                        }
                    }
                    let start = match self.state[q] {
                        VarState::AtLower => self.lower[q],
                        VarState::AtUpper => self.upper[q],
                        VarState::FreeZero => 0.0,
                        VarState::Basic(_) => unreachable!(),
                    };
                    let leaving = self.basis[r];
                    let delta = -dir * w[r];
                    self.state[leaving] = if delta > 0.0 {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                    for k in 0..m {
                        self.xb[k] -= dir * t_best * w[k];
                    }
                    self.update_binv(r, &w);
                    self.basis[r] = q;
                    self.state[q] = VarState::Basic(r);
                    self.xb[r] = start + dir * t_best;
                    self.pivots_since_refresh += 1;
                }
            }
            let _ = iter;
        }
        Err(SolverError::NumericalFailure {
            detail: "simplex iteration cap exhausted".into(),
        })
    }
}

/// Solves a dense LP. See the module docs for the algorithm and determinism
/// guarantees.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, SolverError> {
    problem.validate()?;
    let n = problem.num_vars();
    let n_le = problem.le_rows.len();
    let m = n_le + problem.eq_rows.len();
    let minimize = problem.sense == Sense::Min;

    // Internal problem always minimizes.
    let mut cost: Vec<f64> = if minimize {
        problem.cost.clone()
    } else {
        problem.cost.iter().map(|v| -v).collect()
    };

    let mut cols: Vec<Col> = Vec::with_capacity(n + n_le);
    for j in 0..n {
        let mut a = vec![0.0; m];
        for (i, row) in problem.le_rows.iter().enumerate() {
            a[i] = row[j];
        }
        for (i, row) in problem.eq_rows.iter().enumerate() {
            a[n_le + i] = row[j];
        }
        cols.push(Col::Dense(a));
    }
    let mut lower = problem.lower.clone();
    let mut upper = problem.upper.clone();
    let mut rhs = vec![0.0; m];
    rhs[..n_le].copy_from_slice(&problem.le_rhs);
    rhs[n_le..].copy_from_slice(&problem.eq_rhs);
    // Slacks for <= rows.
    for i in 0..n_le {
        cols.push(Col::Unit { row: i, sign: 1.0 });
        lower.push(0.0);
        upper.push(f64::INFINITY);
        cost.push(0.0);
    }
    let art_start = cols.len();

    // Initial nonbasic placement for structurals (and slacks, revised below).
    let mut state: Vec<VarState> = (0..cols.len())
        .map(|j| {
            if lower[j].is_finite() {
                VarState::AtLower
            } else if upper[j].is_finite() {
                VarState::AtUpper
            } else {
                VarState::FreeZero
            }
        })
        .collect();

    // Residual the basis must carry, given the nonbasic placements.
    let mut resid = rhs.clone();
    for j in 0..art_start {
        let v = match state[j] {
            VarState::AtLower => lower[j],
            VarState::AtUpper => upper[j],
            _ => 0.0,
        };
        if v == 0.0 {
            continue;
        }
        match &cols[j] {
            Col::Dense(a) => axpy(-v, a, &mut resid),
            Col::Unit { row, sign } => resid[*row] -= sign * v,
        }
    }

    // Build the starting basis: slack where it fits, artificial otherwise.
    let mut basis = vec![usize::MAX; m];
    let mut binv = vec![0.0; m * m];
    let mut xb = vec![0.0; m];
    let mut any_artificial = false;
    for i in 0..m {
        let slack_ok = i < n_le && resid[i] >= 0.0;
        if slack_ok {
            let j = n + i;
            basis[i] = j;
            state[j] = VarState::Basic(i);
            binv[i * m + i] = 1.0;
            xb[i] = resid[i];
        } else {
            let sign = if resid[i] >= 0.0 { 1.0 } else { -1.0 };
            cols.push(Col::Unit { row: i, sign });
            lower.push(0.0);
            upper.push(f64::INFINITY);
            cost.push(0.0);
            let j = cols.len() - 1;
            state.push(VarState::Basic(i));
            basis[i] = j;
            binv[i * m + i] = sign;
            xb[i] = resid[i].abs();
            any_artificial = true;
        }
    }

    let num_all = cols.len();
    let mut tab = Tableau {
        num_rows: m,
        cols,
        lower,
        upper,
        rhs,
        art_start,
        basis,
        state,
        binv,
        xb,
        bland: false,
        stall: 0,
        pivots_since_refresh: 0,
    };
    let max_iters = 20_000 + 60 * (m + num_all);

    // Phase 1: minimize the artificial sum.
    if any_artificial {
        let phase1_cost: Vec<f64> = (0..num_all)
            .map(|j| if j >= tab.art_start { 1.0 } else { 0.0 })
            .collect();
        match tab.optimize(&phase1_cost, max_iters) {
            Ok(()) => {}
            Err(SolverError::Unbounded { .. }) => {
                return Err(SolverError::NumericalFailure {
                    detail: "phase 1 reported unbounded".into(),
                })
            }
            Err(e) => return Err(e),
        }
        let art_sum: f64 = tab
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &j)| j >= tab.art_start)
            .map(|(r, _)| tab.xb[r].max(0.0))
            .sum();
        if art_sum > FEAS_TOL * (1.0 + crate::linalg::norm_inf(&tab.rhs)) {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective: f64::NAN,
                row_duals: Vec::new(),
                bound_duals: Vec::new(),
            });
        }
        // Try to drive remaining basic artificials out (degenerate pivots);
        // rows where no real column has a nonzero coefficient are redundant
        // and keep their artificial pinned at zero.
        for r in 0..m {
            if tab.basis[r] < tab.art_start {
                continue;
            }
            let mut replacement = None;
            for j in 0..tab.art_start {
                if matches!(tab.state[j], VarState::Basic(_)) {
                    continue;
                }
                let wr = match &tab.cols[j] {
                    Col::Dense(_) => tab.ftran(j)[r],
                    Col::Unit { row, sign } => sign * tab.binv[r * m + row],
                };
                if wr.abs() > 1e-7 {
                    replacement = Some(j);
                    break;
                }
            }
            if let Some(j) = replacement {
                let w = tab.ftran(j);
                let old = tab.basis[r];
                let entering_value = tab.value_of_nonbasic(j);
                tab.update_binv(r, &w);
                tab.state[old] = VarState::AtLower;
                tab.basis[r] = j;
                tab.state[j] = VarState::Basic(r);
                tab.xb[r] = entering_value;
                tab.pivots_since_refresh += 1;
            }
        }
        // Pin artificials at zero for phase 2.
        for j in tab.art_start..num_all {
            tab.lower[j] = 0.0;
            tab.upper[j] = 0.0;
            if !matches!(tab.state[j], VarState::Basic(_)) {
                tab.state[j] = VarState::AtLower;
            }
        }
        tab.refactor()?;
        tab.bland = false;
        tab.stall = 0;
    }

    // Phase 2: the real objective (artificials cost zero and are pinned).
    match tab.optimize(&cost, max_iters) {
        Ok(()) => {}
        Err(SolverError::Unbounded { .. }) => {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                x: Vec::new(),
                objective: f64::NAN,
                row_duals: Vec::new(),
                bound_duals: Vec::new(),
            });
        }
        Err(e) => return Err(e),
    }

    // Extract primal values, duals, and reduced costs.
    let mut x = vec![0.0; n];
    for j in 0..n {
        x[j] = match tab.state[j] {
            VarState::Basic(r) => tab.xb[r],
            VarState::AtLower => tab.lower[j],
            VarState::AtUpper => tab.upper[j],
            VarState::FreeZero => 0.0,
        };
    }
    let y = tab.btran_duals(&cost);
    let mut row_duals = y.clone();
    let mut bound_duals: Vec<f64> = (0..n).map(|j| cost[j] - tab.cols[j].dot(&y)).collect();
    let objective = crate::linalg::dot(&problem.cost, &x);
    if !minimize {
        for v in &mut row_duals {
            *v = -*v;
        }
        for v in &mut bound_duals {
            *v = -*v;
        }
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        row_duals,
        bound_duals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{enumerate_vertices, LpProblem, Sense};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn single_bound_active() {
        // min x  s.t. x >= 1 (written as -x <= -1), 0 <= x <= 30.
        let mut p = LpProblem::new(Sense::Min, vec![1.0], vec![0.0], vec![30.0]);
        p.add_le_row(vec![-1.0], -1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_close(s.x[0], 1.0, 1e-9);
        assert_close(s.objective, 1.0, 1e-9);
    }

    #[test]
    fn max_with_unit_row_dual() {
        // max x1 + x2  s.t. x1 + x2 <= 1, x >= 0: objective 1, row dual 1.
        let mut p = LpProblem::new(
            Sense::Max,
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            vec![f64::INFINITY, f64::INFINITY],
        );
        p.add_le_row(vec![1.0, 1.0], 1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_close(s.objective, 1.0, 1e-9);
        assert_close(s.row_duals[0], 1.0, 1e-9);
    }

    #[test]
    fn equality_row_with_free_variable() {
        // min x + y  s.t. x + y = 2, x in [0, 30], y free.
        let mut p = LpProblem::new(
            Sense::Min,
            vec![1.0, 1.0],
            vec![0.0, f64::NEG_INFINITY],
            vec![30.0, f64::INFINITY],
        );
        p.add_eq_row(vec![1.0, 1.0], 2.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_close(s.objective, 2.0, 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        // x <= -1 with x >= 0.
        let mut p = LpProblem::new(Sense::Min, vec![1.0], vec![0.0], vec![30.0]);
        p.add_le_row(vec![1.0], -1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        // min -x with x >= 0 unbounded above.
        let p = LpProblem::new(Sense::Min, vec![-1.0], vec![0.0], vec![f64::INFINITY]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn deterministic_bitwise() {
        let mut p = LpProblem::new(
            Sense::Min,
            vec![1.0, -2.0, 0.5],
            vec![0.0; 3],
            vec![10.0; 3],
        );
        p.add_le_row(vec![1.0, 1.0, 1.0], 7.0);
        p.add_le_row(vec![-1.0, 2.0, 0.0], 3.0);
        let a = solve_lp(&p).unwrap();
        let b = solve_lp(&p).unwrap();
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        for (u, v) in a.x.iter().zip(&b.x) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
        for (u, v) in a.row_duals.iter().zip(&b.row_duals) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }

    /// Deterministic pseudo-random stream for oracle tests.
    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64)
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        // 50 random 4-var / 4-row LPs against the brute-force vertex oracle.
        let mut seed = 0x5eed_1234u64;
        let mut solved = 0;
        for _case in 0..50 {
            let n = 4;
            let mut p = LpProblem::new(
                Sense::Min,
                (0..n).map(|_| lcg(&mut seed) * 4.0 - 2.0).collect(),
                vec![0.0; n],
                vec![5.0; n],
            );
            for _ in 0..4 {
                let row: Vec<f64> = (0..n).map(|_| lcg(&mut seed) * 4.0 - 2.0).collect();
                let rhs = lcg(&mut seed) * 8.0 - 1.0;
                p.add_le_row(row, rhs);
            }
            let s = solve_lp(&p).unwrap();
            let vertices = enumerate_vertices(&p).unwrap();
            match s.status {
                LpStatus::Optimal => {
                    let best = vertices
                        .iter()
                        .map(|v| crate::linalg::dot(&p.cost, v))
                        .fold(f64::INFINITY, f64::min);
                    assert!(
                        (s.objective - best).abs() <= 1e-9 * (1.0 + best.abs()),
                        "objective {} vs oracle {}",
                        s.objective,
                        best
                    );
                    solved += 1;
                }
                LpStatus::Infeasible => assert!(vertices.is_empty()),
                LpStatus::Unbounded => unreachable!("box keeps these bounded"),
            }
        }
        assert!(solved >= 30, "too few feasible cases ({solved}) to be meaningful");
    }

    #[test]
    fn optimal_solutions_satisfy_kkt() {
        // Feasibility, complementary slackness, dual signs, strong duality.
        let mut seed = 0xabcdu64;
        for _case in 0..40 {
            let n = 3;
            let mut p = LpProblem::new(
                Sense::Min,
                (0..n).map(|_| lcg(&mut seed) * 4.0 - 2.0).collect(),
                vec![0.0; n],
                vec![6.0; n],
            );
            for _ in 0..3 {
                let row: Vec<f64> = (0..n).map(|_| lcg(&mut seed) * 2.0 - 1.0).collect();
                let rhs = lcg(&mut seed) * 6.0;
                p.add_le_row(row, rhs);
            }
            let s = solve_lp(&p).unwrap();
            if s.status != LpStatus::Optimal {
                continue;
            }
            let mut dual_obj = 0.0;
            for (i, row) in p.le_rows.iter().enumerate() {
                let slack = p.le_rhs[i] - crate::linalg::dot(row, &s.x);
                assert!(slack >= -1e-8, "primal feasibility violated: {slack}");
                assert!(s.row_duals[i] <= 1e-9, "<= dual must be nonpositive in a min LP");
                assert!(
                    (s.row_duals[i] * slack).abs() <= 1e-8 * (1.0 + slack.abs()),
                    "complementary slackness violated"
                );
                dual_obj += s.row_duals[i] * p.le_rhs[i];
            }
            for j in 0..n {
                let d = s.bound_duals[j];
                if s.x[j] <= p.lower[j] + 1e-9 {
                    assert!(d >= -1e-8);
                    dual_obj += d * p.lower[j];
                } else if s.x[j] >= p.upper[j] - 1e-9 {
                    assert!(d <= 1e-8);
                    dual_obj += d * p.upper[j];
                } else {
                    assert!(d.abs() <= 1e-8, "interior variable with nonzero reduced cost");
                }
            }
            assert!(
                (dual_obj - s.objective).abs() <= 1e-8 * (1.0 + s.objective.abs()),
                "strong duality violated: {dual_obj} vs {}",
                s.objective
            );
        }
    }
}
