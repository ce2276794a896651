//! The distributed Dantzig-Wolfe outer loop.
//!
//! Each outer iteration solves the restricted dual master by consensus ADMM
//! at the current tolerance stage (warm-started from the previous iterate),
//! prices every block at the final duals, and adds accepted columns. When no
//! block adds a column — or ADMM terminates after a single iteration, which
//! means the duals are already a fixed point of the enlarged pools — the
//! tolerances divide by the schedule factor; at target tolerances the run
//! terminates and each block recovers its primal from the final convexity
//! weights.

use std::time::Instant;

use serde::Serialize;

use crate::admm::{self, AdmmConfig, ConsensusAgents, WarmStart};
use crate::linalg;
use crate::model::{
    violation_from_residual, BlockAngularInstance, ColumnPool, ColumnProjection, LinkSense,
    ViolationValue,
};
use crate::runtime::agent::BlockAgent;
use crate::runtime::worker::PhaseClock;
use crate::{DdwError, Result};

/// Tolerance stages: start at `(5e-1, 5e-1)`, divide by 10 per stage, clamp
/// at the targets `(5e-2, 5e-4)`.
#[derive(Debug, Clone, Serialize)]
pub struct ToleranceSchedule {
    pub eps_p: f64,
    pub eps_d: f64,
    pub target_p: f64,
    pub target_d: f64,
    pub factor: f64,
    stage: usize,
}

fn snap(v: f64, target: f64) -> f64 {
    if v <= target * (1.0 + 1e-9) {
        target
    } else {
        v
    }
}

impl Default for ToleranceSchedule {
    fn default() -> Self {
        Self::new(5e-1, 5e-1, 5e-2, 5e-4, 10.0)
    }
}

impl ToleranceSchedule {
    pub fn new(eps_p: f64, eps_d: f64, target_p: f64, target_d: f64, factor: f64) -> Self {
        assert!(factor > 1.0);
        Self {
            eps_p: snap(eps_p, target_p),
            eps_d: snap(eps_d, target_d),
            target_p,
            target_d,
            factor,
            stage: 0,
        }
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn at_target(&self) -> bool {
        self.eps_p == self.target_p && self.eps_d == self.target_d
    }

    /// Divides both tolerances by the factor, clamping at the targets.
    pub fn advance(&mut self) {
        self.eps_p = snap(self.eps_p / self.factor, self.target_p);
        self.eps_d = snap(self.eps_d / self.factor, self.target_d);
        self.stage += 1;
    }
}

/// Driver configuration.
#[derive(Debug, Clone, Serialize)]
pub struct DdwConfig {
    pub schedule: ToleranceSchedule,
    /// ADMM parameters; per-stage tolerances are filled in by the driver.
    pub admm: AdmmConfig,
    /// Safety cap on outer iterations.
    pub max_outer: usize,
}

impl Default for DdwConfig {
    fn default() -> Self {
        Self {
            schedule: ToleranceSchedule::default(),
            admm: AdmmConfig::default(),
            max_outer: 10_000,
        }
    }
}

/// Instance facts the coordinator needs; no block data.
#[derive(Debug, Clone)]
pub struct RunMeta {
    pub num_blocks: usize,
    pub t: Vec<f64>,
    pub senses: Vec<LinkSense>,
}

impl From<&BlockAngularInstance> for RunMeta {
    fn from(inst: &BlockAngularInstance) -> Self {
        Self {
            num_blocks: inst.num_blocks(),
            t: inst.t.clone(),
            senses: inst.link_sense.clone(),
        }
    }
}

/// Seed reply: the initial column projection plus the norms used by the
/// bound certificates.
#[derive(Debug, Clone)]
pub struct SeedInfo {
    pub block: usize,
    pub column: ColumnProjection,
    /// `||A_n||_F`
    pub frob_norm: f64,
    /// `||upper_n||_2` (bounds every point of the block polytope)
    pub box_norm: f64,
    /// `||c_n||_2`
    pub cost_norm: f64,
}

#[derive(Debug, Clone)]
pub struct PriceInfo {
    pub block: usize,
    pub z_sep: f64,
    pub threshold: f64,
    pub duplicate: bool,
    pub column: Option<ColumnProjection>,
}

#[derive(Debug, Clone)]
pub struct RecoverInfo {
    pub block: usize,
    pub x_hat: Vec<f64>,
    pub cost_share: f64,
    pub link_image: Vec<f64>,
}

/// Per-endpoint phase times in seconds.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WorkerStats {
    pub endpoint: usize,
    pub t_update: f64,
    pub t_comm: f64,
    pub t_sync: f64,
}

/// Everything the driver asks of the block agents, over any transport.
pub trait DdwAgents: ConsensusAgents {
    /// Epoch bookkeeping before each phase.
    fn begin_outer(&mut self, outer: usize, stage: usize);
    fn seed(&mut self) -> Result<Vec<SeedInfo>>;
    fn price(&mut self, pi_hat: &[f64], u_hats: &[f64], eps_d_target: f64)
        -> Result<Vec<PriceInfo>>;
    fn recover(&mut self) -> Result<Vec<RecoverInfo>>;
    fn stats(&mut self) -> Result<Vec<WorkerStats>>;
    fn shutdown(&mut self) -> Result<()>;
}

/// One bound certificate: a measured quantity against its budget.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub budget: f64,
}

impl BoundCheck {
    fn new(name: &str, measured: f64, budget: f64) -> Self {
        Self {
            name: name.into(),
            pass: measured <= budget,
            measured,
            budget,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DdwStatus {
    Converged,
    /// ADMM hit its iteration cap; partial results retained.
    AdmmIterCap,
    /// The outer loop hit its safety cap.
    OuterIterCap,
}

/// Full run record. Serialized as the per-run JSON detail file.
#[derive(Debug, Clone, Serialize)]
pub struct DdwReport {
    pub status: DdwStatus,
    pub num_blocks: usize,
    pub num_links: usize,
    /// Objective of the recovered primal.
    pub z_hat: f64,
    pub x_hat: Vec<Vec<f64>>,
    /// `sum_n A_n x_hat_n - t`.
    pub link_residual: Vec<f64>,
    /// Most-violated-row relative feasibility violation.
    pub violation: ViolationValue,
    /// Relative optimality gap versus an oracle optimum; filled by the
    /// benchmark layer when one is available.
    pub gap_vs_oracle: Option<f64>,
    pub outer_iters: usize,
    pub admm_iters_total: usize,
    pub admm_iters_per_outer: Vec<usize>,
    pub final_pi: Vec<f64>,
    pub final_u: Vec<f64>,
    pub final_rho: f64,
    pub final_eps_p: f64,
    pub final_eps_d: f64,
    /// Last pricing round's reduced costs per block.
    pub final_z_sep: Vec<f64>,
    /// Realized restricted-dual objective `t.pi + sum u_n`.
    pub z_rdm_hat: f64,
    /// Worst copy-constraint imbalance over all ADMM iterations.
    pub alpha_imbalance: f64,
    pub pool_sizes: Vec<usize>,
    /// Coordinator-side column projections per block.
    pub pools: Vec<Vec<ColumnProjection>>,
    /// `sum_n ||A_n||_F ||upper_n||`: the optimality-gap constant.
    pub gamma: f64,
    /// `max_n 10 ||c_n||`: the dual box constant.
    pub big_m: f64,
    pub worker_stats: Vec<WorkerStats>,
    pub bound_checks: Vec<BoundCheck>,
    pub wall_time_s: f64,
}

impl DdwReport {
    pub fn mean_utilization(&self) -> f64 {
        if self.worker_stats.is_empty() {
            return 1.0;
        }
        let sum: f64 = self
            .worker_stats
            .iter()
            .map(|s| utilization_of(s))
            .sum::<f64>();
        sum / self.worker_stats.len() as f64
    }
}

fn utilization_of(s: &WorkerStats) -> f64 {
    let total = s.t_update + s.t_comm + s.t_sync;
    if total <= 0.0 {
        1.0
    } else {
        s.t_update / total
    }
}

/// Recovers one block's primal from its convexity weights:
/// `x_hat = sum_i lambda_i x_i` over the pool prefix the weights cover.
/// Tiny negative weights (>= -1e-9) are clamped to zero and the vector is
/// renormalized to sum to one.
pub fn recover_primal(pool: &ColumnPool, lambda: &[f64]) -> Result<Vec<f64>> {
    if lambda.is_empty() || lambda.len() > pool.len() {
        return Err(DdwError::InvariantViolation(format!(
            "block {}: {} weights for a pool of {} columns",
            pool.block,
            lambda.len(),
            pool.len()
        )));
    }
    let sum: f64 = lambda.iter().sum();
    if (sum - 1.0).abs() > 1e-5 {
        return Err(DdwError::InvariantViolation(format!(
            "block {}: convexity weights sum to {sum}, expected 1",
            pool.block
        )));
    }
    let mut clamped = Vec::with_capacity(lambda.len());
    for &l in lambda {
        if l < -1e-9 {
            return Err(DdwError::InvariantViolation(format!(
                "block {}: negative convexity weight {l}",
                pool.block
            )));
        }
        clamped.push(l.max(0.0));
    }
    let total: f64 = clamped.iter().sum();
    let dim = pool.columns()[0].point.len();
    let mut x = vec![0.0; dim];
    for (l, col) in clamped.iter().zip(pool.columns()) {
        linalg::axpy(l / total, &col.point, &mut x);
    }
    Ok(x)
}

/// Convenience plural form.
pub fn recover_primal_all(pools: &[ColumnPool], lambdas: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    pools
        .iter()
        .zip(lambdas)
        .map(|(p, l)| recover_primal(p, l))
        .collect()
}

fn theorem1_checks(
    senses: &[LinkSense],
    residual: &[f64],
    num_blocks: usize,
    eps_p: f64,
) -> Vec<BoundCheck> {
    let budget = num_blocks as f64 * eps_p + 1e-5;
    let mut out = Vec::new();
    let has_eq = senses.iter().any(|s| *s == LinkSense::Equality);
    let has_ge = senses.iter().any(|s| *s == LinkSense::GreaterEqual);
    if has_eq {
        let norm: f64 = senses
            .iter()
            .zip(residual)
            .filter(|(s, _)| **s == LinkSense::Equality)
            .map(|(_, r)| r * r)
            .sum::<f64>()
            .sqrt();
        out.push(BoundCheck::new("feasibility_equality", norm, budget));
    }
    if has_ge {
        let norm: f64 = senses
            .iter()
            .zip(residual)
            .filter(|(s, _)| **s == LinkSense::GreaterEqual)
            .map(|(_, r)| (-r).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt();
        out.push(BoundCheck::new("feasibility_shortfall", norm, budget));
    }
    out
}

/// Worst pricing-safety violation over the pooled columns: every reduced
/// cost at the final duals must stay above `-||A_n^i|| eps_d - slack`.
fn lemma2_check(
    pools: &[Vec<ColumnProjection>],
    pi: &[f64],
    u: &[f64],
    eps_d: f64,
) -> BoundCheck {
    let mut worst = f64::NEG_INFINITY;
    for (n, pool) in pools.iter().enumerate() {
        for col in pool {
            let rc = col.cost - linalg::dot(&col.link, pi) - u[n];
            let floor = -col.link_norm * eps_d;
            worst = worst.max(floor - rc); // positive = violation
        }
    }
    if worst == f64::NEG_INFINITY {
        worst = 0.0;
    }
    BoundCheck::new("pricing_safety", worst, 1e-6)
}

/// Runs the full algorithm against a set of block agents.
pub fn run_ddw(agents: &mut dyn DdwAgents, meta: &RunMeta, cfg: &DdwConfig) -> Result<DdwReport> {
    let start = Instant::now();
    let n = meta.num_blocks;
    let m = meta.t.len();
    assert_eq!(agents.num_blocks(), n);

    agents.begin_outer(0, 0);
    let seeds = agents.seed()?;
    let mut pools: Vec<Vec<ColumnProjection>> = seeds.iter().map(|s| vec![s.column.clone()]).collect();
    let gamma: f64 = seeds.iter().map(|s| s.frob_norm * s.box_norm).sum();
    let big_m: f64 = seeds
        .iter()
        .map(|s| 10.0 * s.cost_norm)
        .fold(0.0, f64::max);

    let mut schedule = cfg.schedule.clone();
    let mut warm = WarmStart::cold(n, m, cfg.admm.rho0);
    let mut status = DdwStatus::Converged;
    let mut outer = 0usize;
    let mut admm_total = 0usize;
    let mut admm_per_outer = Vec::new();
    let mut alpha_imbalance: f64 = 0.0;
    let mut final_u = vec![0.0; n];
    let mut final_z_sep = vec![0.0; n];
    let mut final_rho = cfg.admm.rho0;

    loop {
        outer += 1;
        if outer > cfg.max_outer {
            status = DdwStatus::OuterIterCap;
            break;
        }
        agents.begin_outer(outer, schedule.stage());
        let admm_cfg = cfg
            .admm
            .clone()
            .with_tolerances(schedule.eps_p, schedule.eps_d);
        let run = match admm::solve_rdm(agents, &admm_cfg, warm.clone()) {
            Ok(run) => run,
            Err(DdwError::NonConvergence { iterations, .. }) => {
                status = DdwStatus::AdmmIterCap;
                admm_total += iterations;
                admm_per_outer.push(iterations);
                break;
            }
            Err(e) => return Err(e),
        };
        admm_total += run.iterations;
        admm_per_outer.push(run.iterations);
        alpha_imbalance = alpha_imbalance.max(run.alpha_imbalance);
        warm = WarmStart {
            pi: run.state.pi.clone(),
            alpha_blocks: run.state.alpha_blocks.clone(),
            rho: run.state.rho,
        };
        final_u = run.state.u_blocks.clone();
        final_rho = run.state.rho;

        // Price every block at the final consensus duals; the threshold
        // always uses the target dual tolerance.
        let prices = agents.price(&warm.pi, &final_u, schedule.target_d)?;
        let mut added = false;
        for p in &prices {
            final_z_sep[p.block] = p.z_sep;
            if let Some(col) = &p.column {
                pools[p.block].push(col.clone());
                added = true;
            }
        }

        // Stage control: a one-iteration ADMM solve means the duals were
        // already a fixed point, so newly priced columns cannot have
        // genuinely negative reduced cost; move on even if columns arrived.
        if run.iterations == 1 || !added {
            if schedule.at_target() {
                break;
            }
            schedule.advance();
        }
    }

    let recoveries = agents.recover()?;
    let worker_stats = agents.stats()?;

    let mut z_hat = 0.0;
    let mut link_residual: Vec<f64> = meta.t.iter().map(|v| -v).collect();
    let mut x_hat = Vec::with_capacity(n);
    for r in &recoveries {
        z_hat += r.cost_share;
        for i in 0..m {
            link_residual[i] += r.link_image[i];
        }
        x_hat.push(r.x_hat.clone());
    }
    let violation = violation_from_residual(&meta.senses, &meta.t, &link_residual);
    let z_rdm_hat = linalg::dot(&meta.t, &warm.pi) + final_u.iter().sum::<f64>();

    let mut bound_checks = theorem1_checks(&meta.senses, &link_residual, n, schedule.eps_p);
    bound_checks.push(lemma2_check(&pools, &warm.pi, &final_u, schedule.eps_d));
    bound_checks.push(BoundCheck::new(
        "multiplier_balance",
        alpha_imbalance,
        1e-9,
    ));

    Ok(DdwReport {
        status,
        num_blocks: n,
        num_links: m,
        z_hat,
        x_hat,
        link_residual,
        violation,
        gap_vs_oracle: None,
        outer_iters: outer,
        admm_iters_total: admm_total,
        admm_iters_per_outer: admm_per_outer,
        final_pi: warm.pi,
        final_u,
        final_rho,
        final_eps_p: schedule.eps_p,
        final_eps_d: schedule.eps_d,
        final_z_sep,
        z_rdm_hat,
        alpha_imbalance,
        pool_sizes: pools.iter().map(Vec::len).collect(),
        pools,
        gamma,
        big_m,
        worker_stats,
        bound_checks,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Recomputes every bound certificate from the instance and the run record,
/// independently of the driver's own bookkeeping. `z_star` (the oracle
/// optimum) adds the optimality-gap certificate
/// `z_hat - z_star <= gamma (eps_d + 1) + m M N eps_p`.
pub fn certify_bounds(
    instance: &BlockAngularInstance,
    report: &DdwReport,
    eps_p: f64,
    eps_d: f64,
    z_star: Option<f64>,
) -> Vec<BoundCheck> {
    let n = instance.num_blocks();
    let m = instance.num_links();
    let (_, residual) =
        crate::model::evaluate_primal(instance, &report.x_hat).expect("report matches instance");
    let mut checks = theorem1_checks(&instance.link_sense, &residual, n, eps_p);
    checks.push(lemma2_check(
        &report.pools,
        &report.final_pi,
        &report.final_u,
        eps_d,
    ));
    checks.push(BoundCheck::new(
        "multiplier_balance",
        report.alpha_imbalance,
        1e-9,
    ));
    if let Some(z_star) = z_star {
        let gamma: f64 = instance
            .blocks
            .iter()
            .map(|b| b.link_mat.frobenius_norm() * linalg::norm2(&b.upper))
            .sum();
        let big_m = instance
            .blocks
            .iter()
            .map(|b| 10.0 * linalg::norm2(&b.cost))
            .fold(0.0, f64::max);
        let budget = gamma * (eps_d + 1.0) + m as f64 * big_m * n as f64 * eps_p;
        checks.push(BoundCheck::new(
            "optimality_gap_bound",
            report.z_hat - z_star,
            budget,
        ));
    }
    checks
}

// --- In-process agents (no transport) --------------------------------------

/// Drives the block agents by direct calls, sequentially, in block order.
/// The reference backend for tests and the `LocalAgents`-vs-transport
/// equivalence arguments; also usable for single-process solves.
#[derive(Clone)]
pub struct LocalAgents {
    agents: Vec<BlockAgent>,
    clock: PhaseClock,
}

impl LocalAgents {
    pub fn new(instance: &BlockAngularInstance) -> Self {
        let n = instance.num_blocks();
        let agents = (0..n)
            .map(|b| {
                BlockAgent::new(
                    b,
                    instance.blocks[b].clone(),
                    n,
                    instance.t.clone(),
                    &instance.link_sense,
                )
            })
            .collect();
        Self {
            agents,
            clock: PhaseClock::default(),
        }
    }

    pub fn agents(&self) -> &[BlockAgent] {
        &self.agents
    }

    /// Zeroes every agent's dual state (for cold-start comparisons).
    pub fn reset_duals(&mut self) {
        for a in &mut self.agents {
            a.reset_duals();
        }
    }
}

fn agent_err(e: crate::runtime::agent::AgentError) -> DdwError {
    match e {
        crate::runtime::agent::AgentError::OutOfOrder(d) => {
            DdwError::InvariantViolation(format!("out of order: {d}"))
        }
        crate::runtime::agent::AgentError::Internal(d) => DdwError::InvariantViolation(d),
    }
}

impl ConsensusAgents for LocalAgents {
    fn num_blocks(&self) -> usize {
        self.agents.len()
    }

    fn admm_round(&mut self, _k: usize, pi: &[f64], rho: f64) -> Result<Vec<admm::AgentDual>> {
        let t0 = Instant::now();
        let out = self
            .agents
            .iter_mut()
            .map(|a| a.handle_broadcast(pi, rho).map_err(agent_err))
            .collect();
        self.clock.t_update += t0.elapsed().as_secs_f64();
        out
    }
}

impl DdwAgents for LocalAgents {
    fn begin_outer(&mut self, _outer: usize, _stage: usize) {}

    fn seed(&mut self) -> Result<Vec<SeedInfo>> {
        let t0 = Instant::now();
        let out = self
            .agents
            .iter_mut()
            .map(|a| {
                a.handle_seed()
                    .map(|s| SeedInfo {
                        block: a.block_id,
                        column: s.column,
                        frob_norm: s.frob_norm,
                        box_norm: s.box_norm,
                        cost_norm: s.cost_norm,
                    })
                    .map_err(agent_err)
            })
            .collect();
        self.clock.t_update += t0.elapsed().as_secs_f64();
        out
    }

    fn price(
        &mut self,
        pi_hat: &[f64],
        u_hats: &[f64],
        eps_d_target: f64,
    ) -> Result<Vec<PriceInfo>> {
        let t0 = Instant::now();
        let out = self
            .agents
            .iter_mut()
            .map(|a| {
                a.handle_price(pi_hat, u_hats[a.block_id], eps_d_target)
                    .map(|p| PriceInfo {
                        block: a.block_id,
                        z_sep: p.z_sep,
                        threshold: p.threshold,
                        duplicate: p.duplicate,
                        column: p.column,
                    })
                    .map_err(agent_err)
            })
            .collect();
        self.clock.t_update += t0.elapsed().as_secs_f64();
        out
    }

    fn recover(&mut self) -> Result<Vec<RecoverInfo>> {
        self.agents
            .iter_mut()
            .map(|a| {
                a.handle_recover()
                    .map(|r| RecoverInfo {
                        block: a.block_id,
                        x_hat: r.x_hat,
                        cost_share: r.cost_share,
                        link_image: r.link_image,
                    })
                    .map_err(agent_err)
            })
            .collect()
    }

    fn stats(&mut self) -> Result<Vec<WorkerStats>> {
        Ok(vec![WorkerStats {
            endpoint: 0,
            t_update: self.clock.t_update,
            t_comm: 0.0,
            t_sync: 0.0,
        }])
    }

    fn shutdown(&mut self) -> Result<()> {
        Ok(())
    }
}
