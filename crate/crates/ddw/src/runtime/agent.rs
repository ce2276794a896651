//! Worker-side state for one block.
//!
//! A `BlockAgent` owns its block data and column pool; nothing but dual
//! vectors and column projections ever leaves it. Multiplier updates are
//! deferred: the agent applies the step for iteration `k` when it learns
//! `pi^{k+1}` at the start of round `k+1` (or from the price request that
//! ends the consensus phase), using the penalty that was in effect during
//! round `k`. The coordinator mirrors the same update, so both sides hold
//! bitwise-identical multipliers without ever exchanging them.

use crate::admm::{self, AgentDual, DualBox};
use crate::driver::recover_primal;
use crate::linalg;
use crate::model::{BlockData, ColumnPool, ColumnProjection, LinkSense};
use crate::pricing;

/// Handler failures, mapped onto protocol error codes by the worker loop.
#[derive(Debug)]
pub enum AgentError {
    /// Request arrived before the agent was ready for it (e.g. a consensus
    /// round before seeding).
    OutOfOrder(String),
    Internal(String),
}

impl AgentError {
    fn internal(e: impl std::fmt::Display) -> Self {
        Self::Internal(e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub column: ColumnProjection,
    pub frob_norm: f64,
    pub box_norm: f64,
    pub cost_norm: f64,
}

#[derive(Debug, Clone)]
pub struct PriceOutcomeLite {
    pub z_sep: f64,
    pub threshold: f64,
    pub duplicate: bool,
    pub column: Option<ColumnProjection>,
}

#[derive(Debug, Clone)]
pub struct RecoverOutcome {
    pub x_hat: Vec<f64>,
    pub cost_share: f64,
    pub link_image: Vec<f64>,
}

/// One block's worker state.
#[derive(Clone)]
pub struct BlockAgent {
    pub block_id: usize,
    data: BlockData,
    num_blocks: usize,
    t: Vec<f64>,
    dual_box: DualBox,
    pool: ColumnPool,
    alpha: Vec<f64>,
    last_pi_n: Vec<f64>,
    last_u_n: f64,
    last_lambda: Vec<f64>,
    last_rho: f64,
    pending_alpha: bool,
    seeded: bool,
}

impl BlockAgent {
    pub fn new(
        block_id: usize,
        data: BlockData,
        num_blocks: usize,
        t: Vec<f64>,
        senses: &[LinkSense],
    ) -> Self {
        let dual_box = DualBox::for_block(&data, senses);
        let m = t.len();
        Self {
            block_id,
            data,
            num_blocks,
            t,
            dual_box,
            pool: ColumnPool::new(block_id),
            alpha: vec![0.0; m],
            last_pi_n: vec![0.0; m],
            last_u_n: 0.0,
            last_lambda: Vec::new(),
            last_rho: 1.0,
            pending_alpha: false,
            seeded: false,
        }
    }

    pub fn pool(&self) -> &ColumnPool {
        &self.pool
    }

    pub fn last_lambda(&self) -> &[f64] {
        &self.last_lambda
    }

    /// Zeroes all dual state (multipliers and deferred updates). Used for
    /// cold-start comparisons.
    pub fn reset_duals(&mut self) {
        self.alpha.iter_mut().for_each(|v| *v = 0.0);
        self.pending_alpha = false;
    }

    fn apply_pending_alpha(&mut self, pi_new: &[f64]) {
        if self.pending_alpha {
            self.alpha =
                admm::multiplier_update(&self.alpha, self.last_rho, pi_new, &self.last_pi_n);
            self.pending_alpha = false;
        }
    }

    /// Seeds the pool with the block's cost-minimizing vertex (idempotent)
    /// and reports the norms the coordinator needs for certificates.
    pub fn handle_seed(&mut self) -> Result<SeedOutcome, AgentError> {
        if self.pool.is_empty() {
            let col = pricing::seed_initial_column(&self.data, self.block_id)
                .map_err(AgentError::internal)?;
            self.pool.push(col);
        }
        self.seeded = true;
        self.alpha.iter_mut().for_each(|v| *v = 0.0);
        self.pending_alpha = false;
        Ok(SeedOutcome {
            column: ColumnProjection::from(&self.pool.columns()[0]),
            frob_norm: self.data.link_mat.frobenius_norm(),
            box_norm: linalg::norm2(&self.data.upper),
            cost_norm: linalg::norm2(&self.data.cost),
        })
    }

    /// One consensus round: apply the deferred multiplier step at the
    /// broadcast iterate, then solve the augmented dual subproblem.
    pub fn handle_broadcast(&mut self, pi: &[f64], rho: f64) -> Result<AgentDual, AgentError> {
        if !self.seeded {
            return Err(AgentError::OutOfOrder(format!(
                "block {} received a consensus round before seeding",
                self.block_id
            )));
        }
        self.apply_pending_alpha(pi);
        let step = admm::worker_step(
            &self.data,
            &self.pool,
            self.num_blocks,
            &self.t,
            pi,
            &self.alpha,
            rho,
            &self.dual_box,
        )
        .map_err(AgentError::internal)?;
        let sum_lambda: f64 = step.lambda.iter().sum();
        self.last_pi_n = step.pi_n.clone();
        self.last_u_n = step.u_n;
        self.last_lambda = step.lambda;
        self.last_rho = rho;
        self.pending_alpha = true;
        Ok(AgentDual {
            block: self.block_id,
            pi_n: step.pi_n,
            u_n: step.u_n,
            sum_lambda,
        })
    }

    /// Prices the block at the final consensus duals; an accepted column
    /// joins the local pool and only its projection is returned.
    pub fn handle_price(
        &mut self,
        pi_hat: &[f64],
        u_hat: f64,
        eps_d_target: f64,
    ) -> Result<PriceOutcomeLite, AgentError> {
        if !self.seeded {
            return Err(AgentError::OutOfOrder(format!(
                "block {} received a price request before seeding",
                self.block_id
            )));
        }
        // pi_hat is the consensus iterate that closed the ADMM phase; the
        // deferred multiplier step uses it so warm starts stay in sync with
        // the coordinator's mirror.
        self.apply_pending_alpha(pi_hat);
        let outcome = pricing::price(&self.data, &self.pool, pi_hat, u_hat, eps_d_target)
            .map_err(AgentError::internal)?;
        let projection = outcome.column.as_ref().map(ColumnProjection::from);
        if let Some(col) = outcome.column {
            self.pool.push(col);
        }
        Ok(PriceOutcomeLite {
            z_sep: outcome.z_sep,
            threshold: outcome.threshold,
            duplicate: outcome.duplicate,
            column: projection,
        })
    }

    /// Assembles the block primal from the last convexity weights.
    pub fn handle_recover(&mut self) -> Result<RecoverOutcome, AgentError> {
        if self.last_lambda.is_empty() {
            return Err(AgentError::OutOfOrder(format!(
                "block {} has no convexity weights to recover from",
                self.block_id
            )));
        }
        let x_hat =
            recover_primal(&self.pool, &self.last_lambda).map_err(AgentError::internal)?;
        let cost_share = linalg::dot(&self.data.cost, &x_hat);
        let link_image = self.data.link_mat.matvec(&x_hat);
        Ok(RecoverOutcome {
            x_hat,
            cost_share,
            link_image,
        })
    }
}
