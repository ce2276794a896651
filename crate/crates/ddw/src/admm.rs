//! Consensus ADMM on the restricted dual master problem.
//!
//! The restricted master's dual is split into per-block copies `pi_n` tied by
//! consensus constraints `pi_n = pi`. Each iteration: every block maximizes
//! its augmented dual subproblem (a small concave QP), the coordinator
//! averages the copies in closed form, multipliers take a gradient step with
//! step size `rho`, residuals are measured, and `rho` adapts so the two
//! residuals stay within a factor `mu` of each other.
//!
//! Naming follows the dual view: `r_d` (dual feasibility violation) is the
//! consensus spread `sqrt(sum ||pi - pi_n||^2)` and `r_p` (primal) is
//! `rho * ||pi^{k+1} - pi^k||`.

use serde::Serialize;

use crate::linalg::{self, Mat};
use crate::model::{BlockData, ColumnPool, LinkSense};
use crate::solver::{solve_qp, QpProblem};
use crate::{DdwError, Result};

/// Which residuals must be within tolerance before ADMM stops.
///
/// `Both` requires `r_d <= eps_d` and `r_p <= eps_p` together; `Either` stops
/// as soon as one of them passes (the literal loop-guard reading). `Both` is
/// the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum TerminationRule {
    #[default]
    Both,
    Either,
}

/// ADMM parameters. Defaults: `rho0 = 100`, `mu = 100`,
/// `tau_inc = tau_dec = 2`, `max_iters = 20000`.
#[derive(Debug, Clone, Serialize)]
pub struct AdmmConfig {
    pub eps_p: f64,
    pub eps_d: f64,
    pub rho0: f64,
    pub mu: f64,
    pub tau_inc: f64,
    pub tau_dec: f64,
    pub max_iters: usize,
    pub termination: TerminationRule,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            eps_p: 5e-1,
            eps_d: 5e-1,
            rho0: 100.0,
            mu: 100.0,
            tau_inc: 2.0,
            tau_dec: 2.0,
            max_iters: 20_000,
            termination: TerminationRule::Both,
        }
    }
}

impl AdmmConfig {
    pub fn with_tolerances(mut self, eps_p: f64, eps_d: f64) -> Self {
        self.eps_p = eps_p;
        self.eps_d = eps_d;
        self
    }
}

/// Box bounds on one block's dual copy, derived from the linking-row senses:
/// an equality row allows `-M_n <= pi_i <= M_n`, a `>=` row (in a min
/// problem) forces `0 <= pi_i <= M_n`. `M_n = 10 ||c_n||` keeps every
/// subproblem bounded even with a single pooled column.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DualBox {
    pub fn for_block(block: &BlockData, senses: &[LinkSense]) -> Self {
        let bound = 10.0 * linalg::norm2(&block.cost);
        Self::with_bound(senses, bound)
    }

    pub fn with_bound(senses: &[LinkSense], bound: f64) -> Self {
        let lower = senses
            .iter()
            .map(|s| match s {
                LinkSense::Equality => -bound,
                LinkSense::GreaterEqual => 0.0,
            })
            .collect();
        let upper = vec![bound; senses.len()];
        Self { lower, upper }
    }
}

/// One block's answer to a consensus round.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDual {
    pub block: usize,
    pub pi_n: Vec<f64>,
    pub u_n: f64,
    /// Sum of the block's convexity weights; stationarity drives it to 1.
    pub sum_lambda: f64,
}

/// Result of one per-block augmented dual solve.
#[derive(Debug, Clone)]
pub struct WorkerStep {
    pub pi_n: Vec<f64>,
    pub u_n: f64,
    /// Convexity weights, one per pooled column (QP row multipliers).
    pub lambda: Vec<f64>,
}

/// Solves one block's augmented dual subproblem at the broadcast iterate:
///
/// ```text
/// max (1/N) t.pi_n + u_n + alpha.(pi - pi_n) - rho/2 ||pi - pi_n||^2
/// s.t. link_i . pi_n + u_n <= cost_i   for every pooled column i
///      dual box bounds on pi_n
/// ```
///
/// Returns the optimizer and the column multipliers. The pool must be
/// nonempty, otherwise the `u_n` direction is unbounded.
pub fn worker_step(
    block: &BlockData,
    pool: &ColumnPool,
    num_blocks: usize,
    t: &[f64],
    pi: &[f64],
    alpha: &[f64],
    rho: f64,
    dual_box: &DualBox,
) -> Result<WorkerStep> {
    if pool.is_empty() {
        return Err(DdwError::InvariantViolation(format!(
            "worker_step on block {} with an empty column pool",
            pool.block
        )));
    }
    debug_assert!(rho > 0.0);
    let m = t.len();
    let dim = m + 1; // pi_n coordinates plus u_n
    let _ = block;

    // Quadratic part: rho on the pi coordinates, nothing on u_n.
    let mut quad = Mat::zeros(dim, dim);
    for i in 0..m {
        quad.set(i, i, rho);
    }
    // Linear part: t/N - alpha + rho*pi on pi, 1 on u_n.
    let mut linear = vec![0.0; dim];
    for i in 0..m {
        linear[i] = t[i] / num_blocks as f64 - alpha[i] + rho * pi[i];
    }
    linear[m] = 1.0;

    // Rows: one per pooled column, then the dual box.
    let n_cols = pool.len();
    let mut rows = Vec::with_capacity(n_cols + 2 * m);
    let mut rhs = Vec::with_capacity(n_cols + 2 * m);
    for col in pool.columns() {
        let mut row = Vec::with_capacity(dim);
        row.extend_from_slice(&col.link);
        row.push(1.0);
        rows.push(row);
        rhs.push(col.cost);
    }
    for i in 0..m {
        if dual_box.upper[i].is_finite() {
            let mut row = vec![0.0; dim];
            row[i] = 1.0;
            rows.push(row);
            rhs.push(dual_box.upper[i]);
        }
        if dual_box.lower[i].is_finite() {
            let mut row = vec![0.0; dim];
            row[i] = -1.0;
            rows.push(row);
            rhs.push(-dual_box.lower[i]);
        }
    }

    let qp = QpProblem {
        quad,
        linear,
        ineq_mat: Mat::from_rows(&rows),
        ineq_rhs: rhs,
    };
    let solution = match solve_qp(&qp) {
        Ok(s) => s,
        Err(e) => {
            if std::env::var_os("DDW_QP_DUMP").is_some() {
                eprintln!("QPDUMP block={} rho={rho:?} pi={pi:?} alpha={alpha:?}", pool.block);
                eprintln!("QPDUMP t={t:?} n={num_blocks}");
                eprintln!("QPDUMP box lo={:?} hi={:?}", dual_box.lower, dual_box.upper);
                for c in pool.columns() {
                    eprintln!("QPDUMP col cost={:?} link={:?}", c.cost, c.link);
                }
            }
            return Err(e.into());
        }
    };
    let lambda = solution.multipliers[..n_cols].to_vec();
    let u_n = solution.z[m];
    let mut pi_n = solution.z;
    pi_n.truncate(m);
    Ok(WorkerStep { pi_n, u_n, lambda })
}

/// Closed-form consensus step:
/// `pi = (1/N) sum pi_n + (1/(N rho)) sum alpha_n`.
pub fn consensus_update(pi_blocks: &[Vec<f64>], alpha_blocks: &[Vec<f64>], rho: f64) -> Vec<f64> {
    let n = pi_blocks.len();
    assert_eq!(alpha_blocks.len(), n);
    assert!(n > 0 && rho > 0.0);
    let m = pi_blocks[0].len();
    let mut pi = vec![0.0; m];
    for p in pi_blocks {
        for i in 0..m {
            pi[i] += p[i];
        }
    }
    let mut alpha_sum = vec![0.0; m];
    for a in alpha_blocks {
        for i in 0..m {
            alpha_sum[i] += a[i];
        }
    }
    for i in 0..m {
        pi[i] = pi[i] / n as f64 + alpha_sum[i] / (n as f64 * rho);
    }
    pi
}

/// Multiplier gradient step: `alpha - rho * (pi_new - pi_n_new)`.
pub fn multiplier_update(alpha: &[f64], rho: f64, pi_new: &[f64], pi_n_new: &[f64]) -> Vec<f64> {
    debug_assert!(rho > 0.0);
    let mut out = Vec::with_capacity(alpha.len());
    for i in 0..alpha.len() {
        out.push(alpha[i] - rho * (pi_new[i] - pi_n_new[i]));
    }
    out
}

/// Consensus spread: `sqrt(sum_n ||pi - pi_n||^2)`.
pub fn dual_residual(pi: &[f64], pi_blocks: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for p in pi_blocks {
        let d = linalg::sub(pi, p);
        acc += linalg::dot(&d, &d);
    }
    acc.sqrt()
}

/// Iterate movement: `rho * ||pi_new - pi_old||`.
pub fn primal_residual(rho: f64, pi_new: &[f64], pi_old: &[f64]) -> f64 {
    rho * linalg::norm2(&linalg::sub(pi_new, pi_old))
}

/// Residual-balancing penalty adaptation: grow `rho` by `tau_inc` when
/// `r_d > mu * r_p`, shrink by `tau_dec` when `r_p > mu * r_d`.
pub fn adapt_rho(rho: f64, r_p: f64, r_d: f64, cfg: &AdmmConfig) -> f64 {
    if r_d > cfg.mu * r_p {
        cfg.tau_inc * rho
    } else if r_p > cfg.mu * r_d {
        rho / cfg.tau_dec
    } else {
        rho
    }
}

/// Consensus iterate at ADMM termination.
#[derive(Debug, Clone, Serialize)]
pub struct AdmmState {
    /// Completed iterations.
    pub k: usize,
    pub pi: Vec<f64>,
    pub pi_blocks: Vec<Vec<f64>>,
    pub u_blocks: Vec<f64>,
    pub alpha_blocks: Vec<Vec<f64>>,
    /// Penalty in effect for the *next* iteration (adaptation already applied).
    pub rho: f64,
    pub r_p: f64,
    pub r_d: f64,
}

/// Outcome of one restricted-dual solve.
#[derive(Debug, Clone)]
pub struct RdmRun {
    pub state: AdmmState,
    pub iterations: usize,
    /// Worst `||sum alpha_n||_inf / (1 + max_n ||alpha_n||_inf)` seen at any
    /// iteration; the copy-constraint multipliers must stay balanced.
    pub alpha_imbalance: f64,
    /// `(r_p, r_d)` after every iteration.
    pub residual_trace: Vec<(f64, f64)>,
    /// Per-block `sum lambda` from the final round.
    pub sum_lambda: Vec<f64>,
}

/// Warm-start data carried across outer iterations.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub pi: Vec<f64>,
    pub alpha_blocks: Vec<Vec<f64>>,
    pub rho: f64,
}

impl WarmStart {
    /// Cold start: zero duals, zero multipliers, initial penalty.
    pub fn cold(num_blocks: usize, num_links: usize, rho0: f64) -> Self {
        Self {
            pi: vec![0.0; num_links],
            alpha_blocks: vec![vec![0.0; num_links]; num_blocks],
            rho: rho0,
        }
    }
}

/// The coordinator's view of the block agents during consensus rounds.
///
/// `admm_round` must return one [`AgentDual`] per block, ordered by block id,
/// and iteration results must not depend on scheduling order.
pub trait ConsensusAgents {
    fn num_blocks(&self) -> usize;
    fn admm_round(&mut self, k: usize, pi: &[f64], rho: f64) -> Result<Vec<AgentDual>>;
}

/// Runs ADMM rounds until the termination rule fires or `max_iters` is hit.
///
/// The coordinator mirrors every multiplier update the agents perform, so it
/// can evaluate the closed-form consensus step and the balance invariant
/// without the agents ever sending their multipliers.
pub fn solve_rdm(
    agents: &mut dyn ConsensusAgents,
    cfg: &AdmmConfig,
    warm: WarmStart,
) -> Result<RdmRun> {
    let n = agents.num_blocks();
    let m = warm.pi.len();
    let mut pi = warm.pi;
    let mut alphas = warm.alpha_blocks;
    let mut rho = warm.rho;
    assert_eq!(alphas.len(), n);

    let mut trace = Vec::new();
    let mut imbalance: f64 = 0.0;
    let mut k = 0usize;
    loop {
        k += 1;
        if k > cfg.max_iters {
            let (r_p, r_d) = trace.last().copied().unwrap_or((f64::INFINITY, f64::INFINITY));
            return Err(DdwError::NonConvergence {
                iterations: cfg.max_iters,
                r_p,
                r_d,
            });
        }
        let duals = agents.admm_round(k, &pi, rho)?;
        debug_assert_eq!(duals.len(), n);
        for (b, d) in duals.iter().enumerate() {
            debug_assert_eq!(d.block, b, "agent replies must be in block order");
            if (d.sum_lambda - 1.0).abs() > 1e-5 {
                return Err(DdwError::InvariantViolation(format!(
                    "block {b}: convexity weights sum to {} at iteration {k}",
                    d.sum_lambda
                )));
            }
        }
        let pi_blocks: Vec<Vec<f64>> = duals.iter().map(|d| d.pi_n.clone()).collect();
        let pi_new = consensus_update(&pi_blocks, &alphas, rho);
        for b in 0..n {
            alphas[b] = multiplier_update(&alphas[b], rho, &pi_new, &pi_blocks[b]);
        }

        // Copy-constraint balance: sum_n alpha_n vanishes after every full
        // iteration by construction; track the worst relative deviation.
        let mut alpha_sum = vec![0.0; m];
        let mut alpha_max: f64 = 0.0;
        for a in &alphas {
            for i in 0..m {
                alpha_sum[i] += a[i];
            }
            alpha_max = alpha_max.max(linalg::norm_inf(a));
        }
        imbalance = imbalance.max(linalg::norm_inf(&alpha_sum) / (1.0 + alpha_max));

        let r_d = dual_residual(&pi_new, &pi_blocks);
        let r_p = primal_residual(rho, &pi_new, &pi);
        trace.push((r_p, r_d));
        let done = match cfg.termination {
            TerminationRule::Both => r_d <= cfg.eps_d && r_p <= cfg.eps_p,
            TerminationRule::Either => r_d <= cfg.eps_d || r_p <= cfg.eps_p,
        };
        let rho_next = adapt_rho(rho, r_p, r_d, cfg);
        pi = pi_new;
        if done {
            let state = AdmmState {
                k,
                pi,
                pi_blocks,
                u_blocks: duals.iter().map(|d| d.u_n).collect(),
                alpha_blocks: alphas,
                rho: rho_next,
                r_p,
                r_d,
            };
            return Ok(RdmRun {
                state,
                iterations: k,
                alpha_imbalance: imbalance,
                residual_trace: trace,
                sum_lambda: duals.iter().map(|d| d.sum_lambda).collect(),
            });
        }
        rho = rho_next;
    }
}
