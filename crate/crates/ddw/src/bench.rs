//! Benchmark metrics, baseline solvers, and reporting.
//!
//! Three solve paths share the oracle chain: the direct simplex solve fixes
//! `z*`, classical Dantzig-Wolfe must agree with it to 1e-6 relative, and the
//! distributed run's optimality gap is measured against that common optimum.
//! Results land in a CSV table (one row per run) plus a JSON detail file per
//! distributed run.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::driver::{self, DdwConfig, DdwReport, RunMeta};
use crate::instgen::GenSpec;
use crate::linalg;
use crate::model::{
    evaluate_primal, violation_from_residual, BlockAngularInstance, ColumnPool, LinkSense,
    ViolationValue,
};
use crate::pricing;
use crate::runtime::{partition_blocks, Coordinator, InProcessTransport, TcpTransport};
use crate::solver::{solve_lp, LpProblem, LpStatus, Sense};
use crate::{DdwError, Result};

/// Relative optimality gap `|z_hat - z_star| / |z_star|`; when `z_star = 0`
/// the absolute gap is reported with a flag (the relative formula is
/// undefined there).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gap {
    pub value: f64,
    pub absolute_fallback: bool,
}

pub fn optimality_gap(z_hat: f64, z_star: f64) -> Gap {
    if z_star == 0.0 {
        Gap {
            value: z_hat.abs(),
            absolute_fallback: true,
        }
    } else {
        Gap {
            value: (z_hat - z_star).abs() / z_star.abs(),
            absolute_fallback: false,
        }
    }
}

/// Relative feasibility violation of a candidate primal at the most violated
/// linking row.
pub fn rel_feas_violation(
    instance: &BlockAngularInstance,
    x_hat: &[Vec<f64>],
) -> Result<ViolationValue> {
    let (_, residual) = evaluate_primal(instance, x_hat)?;
    Ok(violation_from_residual(
        &instance.link_sense,
        &instance.t,
        &residual,
    ))
}

/// Parallel speedup `t_1 / t_p`.
pub fn speedup(t_1: f64, t_p: f64) -> Result<f64> {
    if t_p <= 0.0 {
        return Err(DdwError::InvalidInput("t_p must be positive".into()));
    }
    Ok(t_1 / t_p)
}

/// Core utilization `T_u / (T_u + T_c + T_s)`.
pub fn utilization(t_u: f64, t_c: f64, t_s: f64) -> Result<f64> {
    let total = t_u + t_c + t_s;
    if total <= 0.0 {
        return Err(DdwError::InvalidInput(
            "phase times sum to zero".into(),
        ));
    }
    Ok(t_u / total)
}

/// Outcome of the direct (whole-LP) baseline.
#[derive(Debug, Clone)]
pub struct DirectOutcome {
    pub objective: f64,
    pub x_hat: Vec<Vec<f64>>,
    pub time_s: f64,
}

/// Solves the assembled LP with the built-in simplex.
pub fn solve_direct(instance: &BlockAngularInstance) -> Result<DirectOutcome> {
    let start = Instant::now();
    let solution = solve_lp(&instance.to_direct_lp())?;
    match solution.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(DdwError::InvalidInput("instance is infeasible".into()))
        }
        LpStatus::Unbounded => {
            return Err(DdwError::InvalidInput("instance is unbounded".into()))
        }
    }
    let mut x_hat = Vec::with_capacity(instance.num_blocks());
    let mut offset = 0;
    for b in &instance.blocks {
        x_hat.push(solution.x[offset..offset + b.dim()].to_vec());
        offset += b.dim();
    }
    Ok(DirectOutcome {
        objective: solution.objective,
        x_hat,
        time_s: start.elapsed().as_secs_f64(),
    })
}

/// Outcome of the classical (central-master) Dantzig-Wolfe baseline.
#[derive(Debug, Clone)]
pub struct ClassicalOutcome {
    pub objective: f64,
    pub x_hat: Vec<Vec<f64>>,
    /// Pricing rounds until no negative reduced cost remained.
    pub rounds: usize,
    /// Largest artificial value in the final master (must be ~0).
    pub max_artificial: f64,
    pub time_s: f64,
}

/// Classical Dantzig-Wolfe: central restricted master solved by simplex with
/// exact duals, pricing in parallel across blocks, columns accepted while
/// any reduced cost is below `-1e-9`. Initial master feasibility comes from
/// big-M artificials on the linking rows with `M = 10 max_n ||c_n||`.
pub fn solve_classical_dwd(instance: &BlockAngularInstance) -> Result<ClassicalOutcome> {
    let start = Instant::now();
    let n = instance.num_blocks();
    let m = instance.num_links();
    let big_m = instance
        .blocks
        .iter()
        .map(|b| 10.0 * linalg::norm2(&b.cost))
        .fold(0.0, f64::max);

    let mut pools: Vec<ColumnPool> = Vec::with_capacity(n);
    for (b, block) in instance.blocks.iter().enumerate() {
        let mut pool = ColumnPool::new(b);
        pool.push(pricing::seed_initial_column(block, b)?);
        pools.push(pool);
    }

    let mut rounds = 0usize;
    let cap = 10_000;
    loop {
        rounds += 1;
        if rounds > cap {
            return Err(DdwError::NonConvergence {
                iterations: cap,
                r_p: f64::NAN,
                r_d: f64::NAN,
            });
        }

        // Assemble the restricted master. Variables: per-block convexity
        // weights, then artificials. `>=` linking rows are stored negated
        // (as `<=`), so their duals come back sign-flipped.
        let mut cost = Vec::new();
        let mut lambda_of_block = Vec::new();
        for pool in &pools {
            for col in pool.columns() {
                cost.push(col.cost);
                lambda_of_block.push(pool.block);
            }
        }
        let art_start = cost.len();
        let mut art_of_row = Vec::new();
        for (i, sense) in instance.link_sense.iter().enumerate() {
            match sense {
                LinkSense::GreaterEqual => {
                    cost.push(big_m);
                    art_of_row.push((i, 1.0));
                }
                LinkSense::Equality => {
                    cost.push(big_m);
                    art_of_row.push((i, 1.0));
                    cost.push(big_m);
                    art_of_row.push((i, -1.0));
                }
            }
        }
        let total_vars = cost.len();
        let lower = vec![0.0; total_vars];
        let upper = vec![f64::INFINITY; total_vars];
        let mut lp = LpProblem::new(Sense::Min, cost, lower, upper);

        let mut ge_row_of_link = vec![usize::MAX; m];
        let mut eq_row_of_link = vec![usize::MAX; m];
        for (i, sense) in instance.link_sense.iter().enumerate() {
            let mut row = vec![0.0; total_vars];
            let mut var = 0usize;
            for pool in &pools {
                for col in pool.columns() {
                    row[var] = col.link[i];
                    var += 1;
                }
            }
            for (a, &(art_row, sign)) in art_of_row.iter().enumerate() {
                if art_row == i {
                    row[art_start + a] = sign;
                }
            }
            match sense {
                LinkSense::GreaterEqual => {
                    // row.x >= t  as  -row.x <= -t
                    ge_row_of_link[i] = lp.le_rows.len();
                    lp.add_le_row(row.iter().map(|v| -v).collect(), -instance.t[i]);
                }
                LinkSense::Equality => {
                    eq_row_of_link[i] = lp.eq_rows.len();
                    lp.add_eq_row(row, instance.t[i]);
                }
            }
        }
        let conv_eq_start = lp.eq_rows.len();
        for b in 0..n {
            let mut row = vec![0.0; total_vars];
            for (var, &owner) in lambda_of_block.iter().enumerate() {
                if owner == b {
                    row[var] = 1.0;
                }
            }
            lp.add_eq_row(row, 1.0);
        }

        let master = solve_lp(&lp)?;
        if master.status != LpStatus::Optimal {
            return Err(DdwError::InvariantViolation(format!(
                "restricted master not optimal: {:?} (big-M artificials should prevent this)",
                master.status
            )));
        }

        // Exact duals for pricing.
        let num_le = lp.le_rows.len();
        let mut pi = vec![0.0; m];
        for i in 0..m {
            pi[i] = match instance.link_sense[i] {
                LinkSense::GreaterEqual => -master.row_duals[ge_row_of_link[i]],
                LinkSense::Equality => master.row_duals[num_le + eq_row_of_link[i]],
            };
        }
        let u: Vec<f64> = (0..n)
            .map(|b| master.row_duals[num_le + conv_eq_start + b])
            .collect();

        // Parallel pricing, results reduced in block order.
        let outcomes: Vec<Result<(f64, Vec<f64>)>> = std::thread::scope(|scope| {
            let handles: Vec<_> = instance
                .blocks
                .iter()
                .map(|block| {
                    let pi = &pi;
                    scope.spawn(move || pricing::best_vertex(block, pi))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("pricing thread panicked"))
                .collect()
        });

        let mut added = false;
        for (b, outcome) in outcomes.into_iter().enumerate() {
            let (value, x) = outcome?;
            let z_sep = value - u[b];
            if z_sep < -1e-9 {
                let col = crate::model::Column::from_point(b, x, &instance.blocks[b]);
                if pools[b].push(col) {
                    added = true;
                }
            }
        }

        if !added {
            // Terminal master: extract the primal and the artificial check.
            let max_artificial = (art_start..total_vars)
                .map(|v| master.x[v])
                .fold(0.0, f64::max);
            let mut x_hat = Vec::with_capacity(n);
            let mut var = 0usize;
            for (b, pool) in pools.iter().enumerate() {
                let mut x = vec![0.0; instance.blocks[b].dim()];
                for col in pool.columns() {
                    linalg::axpy(master.x[var], &col.point, &mut x);
                    var += 1;
                }
                x_hat.push(x);
            }
            return Ok(ClassicalOutcome {
                objective: master.objective,
                x_hat,
                rounds,
                max_artificial,
                time_s: start.elapsed().as_secs_f64(),
            });
        }
    }
}

// --- Distributed-run entry points -------------------------------------------

/// Runs the distributed algorithm with worker threads over the in-process
/// channel transport (`num_workers` endpoints).
pub fn run_ddw_inprocess(
    instance: &BlockAngularInstance,
    cfg: &DdwConfig,
    num_workers: usize,
) -> Result<DdwReport> {
    let n = instance.num_blocks();
    let transport = InProcessTransport::spawn(instance, num_workers);
    let mut block_endpoint = vec![0usize; n];
    for (e, range) in partition_blocks(n, num_workers).into_iter().enumerate() {
        for b in range {
            block_endpoint[b] = e;
        }
    }
    let mut coordinator = Coordinator::new(transport, n, block_endpoint);
    let meta = RunMeta::from(instance);
    let report = driver::run_ddw(&mut coordinator, &meta, cfg)?;
    driver::DdwAgents::shutdown(&mut coordinator)?;
    coordinator.transport_mut().join();
    Ok(report)
}

/// Runs the distributed algorithm against already-listening TCP workers,
/// one endpoint per address (the `--workers` list or `DDW_WORKERS`).
pub fn run_ddw_tcp(
    instance: &BlockAngularInstance,
    cfg: &DdwConfig,
    addrs: &[String],
) -> Result<DdwReport> {
    let n = instance.num_blocks();
    let transport = TcpTransport::connect(addrs)?;
    let mut block_endpoint = vec![0usize; n];
    for (e, range) in partition_blocks(n, addrs.len()).into_iter().enumerate() {
        for b in range {
            block_endpoint[b] = e;
        }
    }
    let mut coordinator = Coordinator::new(transport, n, block_endpoint);
    let meta = RunMeta::from(instance);
    let report = driver::run_ddw(&mut coordinator, &meta, cfg)?;
    driver::DdwAgents::shutdown(&mut coordinator)?;
    Ok(report)
}

// --- CSV reporting -----------------------------------------------------------

/// One benchmark table row. The CSV column set is fixed:
/// `instance,N,m,vars,mode,z,gap,violation,outer_iters,admm_iters,time_s,speedup,mean_utilization`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub instance: String,
    #[serde(rename = "N")]
    pub num_blocks: usize,
    pub m: usize,
    pub vars: usize,
    pub mode: String,
    pub z: f64,
    pub gap: f64,
    pub violation: f64,
    pub outer_iters: usize,
    pub admm_iters: usize,
    pub time_s: f64,
    pub speedup: f64,
    pub mean_utilization: f64,
}

pub fn write_csv(path: &Path, rows: &[RunMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<RunMetrics>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec.map_err(csv_err)?);
    }
    Ok(rows)
}

fn csv_err(e: csv::Error) -> DdwError {
    DdwError::InvalidInput(format!("csv: {e}"))
}

// --- Suites ------------------------------------------------------------------

/// Default published seeds for the desk-scale table grid.
pub const TABLE1_SEEDS: [u64; 3] = [11, 23, 47];
/// The desk-scale grid: every (blocks, links) cell uses 100 total variables.
pub const TABLE1_BLOCKS: [usize; 4] = [2, 4, 5, 10];
pub const TABLE1_LINKS: [usize; 4] = [1, 2, 5, 10];
pub const TABLE1_TOTAL_VARS: usize = 100;

/// One fully-solved grid cell: the instance, the oracle optimum, both
/// baselines, and the distributed run.
pub struct SuiteRun {
    pub spec: GenSpec,
    pub seed_used: u64,
    pub instance: BlockAngularInstance,
    pub z_star: f64,
    pub direct_time_s: f64,
    pub classical: ClassicalOutcome,
    pub report: DdwReport,
}

impl SuiteRun {
    pub fn name(&self) -> String {
        format!(
            "N{}_m{}_v{}_s{}",
            self.spec.num_blocks,
            self.spec.num_links,
            self.spec.vars_per_block * self.spec.num_blocks,
            self.seed_used
        )
    }

    /// The three table rows (direct, classical, ddw) for this run.
    pub fn metrics(&self) -> Vec<RunMetrics> {
        let total_vars = self.spec.vars_per_block * self.spec.num_blocks;
        let base = |mode: &str, z: f64, time_s: f64| RunMetrics {
            instance: self.name(),
            num_blocks: self.spec.num_blocks,
            m: self.spec.num_links,
            vars: total_vars,
            mode: mode.into(),
            z,
            gap: optimality_gap(z, self.z_star).value,
            violation: 0.0,
            outer_iters: 0,
            admm_iters: 0,
            time_s,
            speedup: 1.0,
            mean_utilization: 1.0,
        };
        let mut rows = vec![
            base("direct", self.z_star, self.direct_time_s),
            RunMetrics {
                outer_iters: self.classical.rounds,
                ..base("classical", self.classical.objective, self.classical.time_s)
            },
        ];
        rows.push(RunMetrics {
            violation: self.report.violation.value,
            outer_iters: self.report.outer_iters,
            admm_iters: self.report.admm_iters_total,
            mean_utilization: self.report.mean_utilization(),
            ..base("ddw", self.report.z_hat, self.report.wall_time_s)
        });
        rows
    }
}

/// Generates, oracle-solves, and distributed-solves one cell.
pub fn run_cell(spec: &GenSpec, cfg: &DdwConfig) -> Result<SuiteRun> {
    let (instance, seed_used) = crate::instgen::generate_feasible(spec, 50)?;
    let direct = solve_direct(&instance)?;
    let classical = solve_classical_dwd(&instance)?;
    let mut report = run_ddw_inprocess(&instance, cfg, spec.num_blocks)?;
    report.gap_vs_oracle = Some(optimality_gap(report.z_hat, direct.objective).value);
    Ok(SuiteRun {
        spec: GenSpec {
            seed: seed_used,
            ..*spec
        },
        seed_used,
        instance,
        z_star: direct.objective,
        direct_time_s: direct.time_s,
        classical,
        report,
    })
}

/// Runs the full desk-scale grid (`TABLE1_BLOCKS x TABLE1_LINKS x seeds`).
pub fn run_table1_suite(seeds: &[u64], cfg: &DdwConfig) -> Result<Vec<SuiteRun>> {
    let mut runs = Vec::new();
    for &num_blocks in &TABLE1_BLOCKS {
        for &num_links in &TABLE1_LINKS {
            for &seed in seeds {
                let spec = GenSpec {
                    seed,
                    num_blocks,
                    vars_per_block: TABLE1_TOTAL_VARS / num_blocks,
                    num_links,
                };
                runs.push(run_cell(&spec, cfg)?);
            }
        }
    }
    Ok(runs)
}

/// One point of the worker-scaling series.
pub struct ScalingPoint {
    pub workers: usize,
    pub time_s: f64,
    pub speedup: f64,
    pub mean_utilization: f64,
    pub report: DdwReport,
}

/// Solves one instance repeatedly with varying worker counts; speedups are
/// relative to the first count in the list (normally 1).
pub fn run_scaling_suite(
    instance: &BlockAngularInstance,
    cfg: &DdwConfig,
    worker_counts: &[usize],
) -> Result<Vec<ScalingPoint>> {
    let mut points: Vec<ScalingPoint> = Vec::new();
    let mut t_base = None;
    for &workers in worker_counts {
        let report = run_ddw_inprocess(instance, cfg, workers)?;
        let time_s = report.wall_time_s;
        let base = *t_base.get_or_insert(time_s);
        points.push(ScalingPoint {
            workers,
            time_s,
            speedup: speedup(base, time_s)?,
            mean_utilization: report.mean_utilization(),
            report,
        });
    }
    Ok(points)
}

/// Writes a run's JSON detail file.
pub fn write_detail(path: &Path, report: &DdwReport) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| DdwError::InvalidInput(format!("report serialization: {e}")))?;
    f.write_all(json.as_bytes())?;
    Ok(())
}
