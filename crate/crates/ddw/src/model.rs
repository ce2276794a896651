//! Problem data for block-angular LPs: instances, blocks, columns, pools.
//!
//! An instance is `min sum c_n.x_n` subject to per-block constraints
//! `B_n x_n <= b_n`, box bounds `lower <= x_n <= upper`, and `m` linking rows
//! `sum_n A_n x_n (= | >=) t`. Everything is dense `f64`. Instances are
//! immutable after construction and safe to share read-only across workers;
//! a [`ColumnPool`] is mutated only by its owning worker.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Mat};
use crate::solver::{LpProblem, Sense};

/// Sense of one linking row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkSense {
    #[serde(rename = "=")]
    Equality,
    #[serde(rename = ">=")]
    GreaterEqual,
}

/// One block: local polytope `{x : B x <= b, lower <= x <= upper}` plus its
/// cost vector and its columns in the linking rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockData {
    /// Cost vector for this block's variables.
    pub cost: Vec<f64>,
    /// Local constraint matrix (rows of `B x <= b`).
    pub local_mat: Mat,
    /// Local right-hand side.
    pub local_rhs: Vec<f64>,
    /// Variable lower bounds.
    pub lower: Vec<f64>,
    /// Variable upper bounds (the box keeps the block bounded).
    pub upper: Vec<f64>,
    /// This block's coefficients in the linking rows (`m x dim`).
    pub link_mat: Mat,
}

impl BlockData {
    pub fn dim(&self) -> usize {
        self.cost.len()
    }
}

/// Where an instance came from; not part of the on-disk format.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMeta {
    pub generator: String,
    pub seed: u64,
}

/// A full block-angular instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockAngularInstance {
    pub link_sense: Vec<LinkSense>,
    /// Linking right-hand side, length `m`.
    pub t: Vec<f64>,
    pub blocks: Vec<BlockData>,
    pub meta: InstanceMeta,
}

impl BlockAngularInstance {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_links(&self) -> usize {
        self.t.len()
    }

    pub fn total_vars(&self) -> usize {
        self.blocks.iter().map(BlockData::dim).sum()
    }

    /// Assembles the whole instance as a single LP for the direct baseline.
    ///
    /// `>=` linking rows are negated into `<=` form; their duals therefore
    /// come back sign-flipped relative to the instance row.
    pub fn to_direct_lp(&self) -> LpProblem {
        let n = self.total_vars();
        let mut cost = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        for b in &self.blocks {
            cost.extend_from_slice(&b.cost);
            lower.extend_from_slice(&b.lower);
            upper.extend_from_slice(&b.upper);
        }
        let mut lp = LpProblem::new(Sense::Min, cost, lower, upper);
        // Linking rows over the concatenated variable vector.
        for (i, sense) in self.link_sense.iter().enumerate() {
            let mut row = Vec::with_capacity(n);
            for b in &self.blocks {
                row.extend_from_slice(b.link_mat.row(i));
            }
            match sense {
                LinkSense::Equality => lp.add_eq_row(row, self.t[i]),
                LinkSense::GreaterEqual => {
                    // A x >= t  <=>  -A x <= -t
                    lp.add_le_row(row.iter().map(|v| -v).collect(), -self.t[i]);
                }
            }
        }
        // Block rows live on each block's own slice of the variables.
        let mut offset = 0usize;
        for b in &self.blocks {
            for r in 0..b.local_mat.rows() {
                let mut row = vec![0.0; n];
                row[offset..offset + b.dim()].copy_from_slice(b.local_mat.row(r));
                lp.add_le_row(row, b.local_rhs[r]);
            }
            offset += b.dim();
        }
        lp
    }
}

/// A data defect found by [`validate`]. Defects are data, not failures.
#[derive(Debug, Clone, PartialEq)]
pub struct Defect {
    /// What part of the instance the defect is about, e.g. `"t"` or `"block 0"`.
    pub location: String,
    pub detail: String,
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.detail)
    }
}

fn check_finite(defects: &mut Vec<Defect>, location: &str, name: &str, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            defects.push(Defect {
                location: location.to_string(),
                detail: format!("{name}[{i}] is not finite ({v})"),
            });
        }
    }
}

/// Checks an instance for dimension mismatches, non-finite entries, and
/// inverted box bounds. Returns every defect found; empty means well-formed.
pub fn validate(instance: &BlockAngularInstance) -> Vec<Defect> {
    let mut defects = Vec::new();
    let m = instance.link_sense.len();
    if instance.t.len() != m {
        defects.push(Defect {
            location: "t".into(),
            detail: format!(
                "t has length {} but there are {} linking rows",
                instance.t.len(),
                m
            ),
        });
    }
    check_finite(&mut defects, "t", "t", &instance.t);
    if instance.blocks.is_empty() {
        defects.push(Defect {
            location: "blocks".into(),
            detail: "instance has no blocks".into(),
        });
    }
    for (n, b) in instance.blocks.iter().enumerate() {
        let loc = format!("block {n}");
        let dim = b.dim();
        if b.link_mat.rows() != m {
            defects.push(Defect {
                location: loc.clone(),
                detail: format!("A has {} rows, expected {}", b.link_mat.rows(), m),
            });
        }
        if b.link_mat.cols() != dim {
            defects.push(Defect {
                location: loc.clone(),
                detail: format!("A has {} columns, expected {}", b.link_mat.cols(), dim),
            });
        }
        if b.local_mat.rows() != b.local_rhs.len() {
            defects.push(Defect {
                location: loc.clone(),
                detail: format!(
                    "B has {} rows but b has length {}",
                    b.local_mat.rows(),
                    b.local_rhs.len()
                ),
            });
        }
        if b.local_mat.cols() != dim {
            defects.push(Defect {
                location: loc.clone(),
                detail: format!("B has {} columns, expected {}", b.local_mat.cols(), dim),
            });
        }
        if b.lower.len() != dim || b.upper.len() != dim {
            defects.push(Defect {
                location: loc.clone(),
                detail: format!(
                    "bounds have lengths {}/{}, expected {}",
                    b.lower.len(),
                    b.upper.len(),
                    dim
                ),
            });
        } else {
            for j in 0..dim {
                if b.lower[j] > b.upper[j] {
                    defects.push(Defect {
                        location: loc.clone(),
                        detail: format!(
                            "inverted bounds at variable {j}: lower {} > upper {}",
                            b.lower[j], b.upper[j]
                        ),
                    });
                }
            }
        }
        check_finite(&mut defects, &loc, "c", &b.cost);
        check_finite(&mut defects, &loc, "B", b.local_mat.as_slice());
        check_finite(&mut defects, &loc, "b", &b.local_rhs);
        check_finite(&mut defects, &loc, "A", b.link_mat.as_slice());
        check_finite(&mut defects, &loc, "lower", &b.lower);
        check_finite(&mut defects, &loc, "upper", &b.upper);
    }
    defects
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("block {block}: point has dimension {got}, expected {expected}")]
    DimensionMismatch {
        block: usize,
        got: usize,
        expected: usize,
    },
    #[error("instance file: {0}")]
    Format(String),
}

/// Evaluates a candidate primal point: returns `(sum c_n.x_n, sum A_n x_n - t)`.
///
/// A positive residual component is surplus for a `>=` row.
pub fn evaluate_primal(
    instance: &BlockAngularInstance,
    x_hat: &[Vec<f64>],
) -> Result<(f64, Vec<f64>), ModelError> {
    if x_hat.len() != instance.num_blocks() {
        return Err(ModelError::DimensionMismatch {
            block: x_hat.len().min(instance.num_blocks()),
            got: x_hat.len(),
            expected: instance.num_blocks(),
        });
    }
    let mut objective = 0.0;
    let mut residual: Vec<f64> = instance.t.iter().map(|v| -v).collect();
    for (n, (b, x)) in instance.blocks.iter().zip(x_hat).enumerate() {
        if x.len() != b.dim() {
            return Err(ModelError::DimensionMismatch {
                block: n,
                got: x.len(),
                expected: b.dim(),
            });
        }
        objective += linalg::dot(&b.cost, x);
        let image = b.link_mat.matvec(x);
        for i in 0..residual.len() {
            residual[i] += image[i];
        }
    }
    Ok((objective, residual))
}

/// Relative feasibility violation at the most violated linking row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViolationValue {
    pub value: f64,
    /// Set when the picked row has `t = 0` and the violation is reported
    /// absolute instead of relative.
    pub absolute_fallback: bool,
    /// The arg-max row, when any row exists.
    pub row: Option<usize>,
}

/// Most-violated-row metric from a precomputed residual `sum A x - t`.
///
/// `>=` rows count shortfall `max(t - sum Ax, 0)`; equality rows count
/// `|residual|` both in the arg-max and the numerator. The result divides by
/// `|t|` at the picked row, falling back to the absolute value (flagged)
/// when that entry is zero.
pub fn violation_from_residual(
    senses: &[LinkSense],
    t: &[f64],
    residual: &[f64],
) -> ViolationValue {
    let mut pick: Option<(usize, f64)> = None;
    for i in 0..senses.len() {
        let key = match senses[i] {
            LinkSense::GreaterEqual => -residual[i],
            LinkSense::Equality => residual[i].abs(),
        };
        if pick.map_or(true, |(_, best)| key > best) {
            pick = Some((i, key));
        }
    }
    let Some((row, key)) = pick else {
        return ViolationValue {
            value: 0.0,
            absolute_fallback: false,
            row: None,
        };
    };
    let numerator = match senses[row] {
        LinkSense::GreaterEqual => key.max(0.0),
        LinkSense::Equality => key,
    };
    if numerator == 0.0 {
        return ViolationValue {
            value: 0.0,
            absolute_fallback: false,
            row: Some(row),
        };
    }
    if t[row] == 0.0 {
        ViolationValue {
            value: numerator,
            absolute_fallback: true,
            row: Some(row),
        }
    } else {
        ViolationValue {
            value: numerator / t[row].abs(),
            absolute_fallback: false,
            row: Some(row),
        }
    }
}

/// An extreme point of a block polytope together with its cached master data.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub block: usize,
    /// The extreme point itself. Stays on the owning worker in distributed
    /// runs; only `cost`/`link` cross the wire.
    pub point: Vec<f64>,
    /// Cached `c_n . x`.
    pub cost: f64,
    /// Cached `A_n x`, length `m`.
    pub link: Vec<f64>,
    /// 2-norm of `link`.
    pub link_norm: f64,
}

impl Column {
    /// Builds a column from a block point, caching cost and linking image.
    pub fn from_point(block_id: usize, point: Vec<f64>, block: &BlockData) -> Self {
        let cost = linalg::dot(&block.cost, &point);
        let link = block.link_mat.matvec(&point);
        let link_norm = linalg::norm2(&link);
        Self {
            block: block_id,
            point,
            cost,
            link,
            link_norm,
        }
    }
}

/// What the coordinator sees of a column: its master-problem data only. The
/// underlying extreme point never leaves the owning worker.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnProjection {
    pub cost: f64,
    pub link: Vec<f64>,
    pub link_norm: f64,
}

impl ColumnProjection {
    pub fn new(cost: f64, link: Vec<f64>) -> Self {
        let link_norm = linalg::norm2(&link);
        Self {
            cost,
            link,
            link_norm,
        }
    }
}

impl From<&Column> for ColumnProjection {
    fn from(c: &Column) -> Self {
        Self {
            cost: c.cost,
            link: c.link.clone(),
            link_norm: c.link_norm,
        }
    }
}

/// Rounds a point to the 1e-9 grid used for column deduplication.
pub fn dedup_key(point: &[f64]) -> Vec<i64> {
    point.iter().map(|v| (v * 1e9).round() as i64).collect()
}

/// Append-only set of columns for one block, deduplicated on the 1e-9 grid.
#[derive(Debug, Clone)]
pub struct ColumnPool {
    pub block: usize,
    columns: Vec<Column>,
    keys: HashSet<Vec<i64>>,
}

impl ColumnPool {
    pub fn new(block: usize) -> Self {
        Self {
            block,
            columns: Vec::new(),
            keys: HashSet::new(),
        }
    }

    /// Adds a column unless an identical (rounded) point is already stored.
    /// Returns `false` for duplicates.
    pub fn push(&mut self, column: Column) -> bool {
        debug_assert_eq!(column.block, self.block);
        if self.keys.insert(dedup_key(&column.point)) {
            self.columns.push(column);
            true
        } else {
            false
        }
    }

    pub fn contains_point(&self, point: &[f64]) -> bool {
        self.keys.contains(&dedup_key(point))
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Largest `||A_n^i||` over the pool; 0 for an empty pool.
    pub fn max_link_norm(&self) -> f64 {
        self.columns
            .iter()
            .fold(0.0_f64, |m, c| m.max(c.link_norm))
    }
}

// --- On-disk format -------------------------------------------------------
//
// A UTF-8 JSON document, version 1:
// {version, seed, N, m, senses, t, blocks:[{c, B, b, lower, upper, A}, ...]}
// with B and A flattened row-major. Numbers use the shortest representation
// that round-trips. The loader rejects unknown versions.

pub const INSTANCE_FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct BlockFile {
    c: Vec<f64>,
    #[serde(rename = "B")]
    local_mat: Vec<f64>,
    b: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    #[serde(rename = "A")]
    link_mat: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    version: u64,
    seed: u64,
    #[serde(rename = "N")]
    num_blocks: u64,
    m: u64,
    senses: Vec<LinkSense>,
    t: Vec<f64>,
    blocks: Vec<BlockFile>,
}

/// Serializes an instance into the version-1 JSON document.
pub fn to_json(instance: &BlockAngularInstance) -> String {
    let file = InstanceFile {
        version: INSTANCE_FORMAT_VERSION,
        seed: instance.meta.seed,
        num_blocks: instance.num_blocks() as u64,
        m: instance.num_links() as u64,
        senses: instance.link_sense.clone(),
        t: instance.t.clone(),
        blocks: instance
            .blocks
            .iter()
            .map(|b| BlockFile {
                c: b.cost.clone(),
                local_mat: b.local_mat.as_slice().to_vec(),
                b: b.local_rhs.clone(),
                lower: b.lower.clone(),
                upper: b.upper.clone(),
                link_mat: b.link_mat.as_slice().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("instance serialization cannot fail")
}

/// Parses the version-1 JSON document.
pub fn from_json(text: &str) -> Result<BlockAngularInstance, ModelError> {
    let file: InstanceFile =
        serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
    if file.version != INSTANCE_FORMAT_VERSION {
        return Err(ModelError::Format(format!(
            "unknown instance format version {} (expected {})",
            file.version, INSTANCE_FORMAT_VERSION
        )));
    }
    let m = file.m as usize;
    if file.senses.len() != m || file.t.len() != m {
        return Err(ModelError::Format(
            "senses/t length does not match m".into(),
        ));
    }
    if file.blocks.len() != file.num_blocks as usize {
        return Err(ModelError::Format("N does not match blocks length".into()));
    }
    let mut blocks = Vec::with_capacity(file.blocks.len());
    for (i, b) in file.blocks.into_iter().enumerate() {
        let dim = b.c.len();
        let local_rows = b.b.len();
        if b.local_mat.len() != local_rows * dim {
            return Err(ModelError::Format(format!(
                "block {i}: B has {} entries, expected {}",
                b.local_mat.len(),
                local_rows * dim
            )));
        }
        if b.link_mat.len() != m * dim {
            return Err(ModelError::Format(format!(
                "block {i}: A has {} entries, expected {}",
                b.link_mat.len(),
                m * dim
            )));
        }
        if b.lower.len() != dim || b.upper.len() != dim {
            return Err(ModelError::Format(format!("block {i}: bad bounds length")));
        }
        blocks.push(BlockData {
            cost: b.c,
            local_mat: Mat::from_row_major(local_rows, dim, b.local_mat),
            local_rhs: b.b,
            lower: b.lower,
            upper: b.upper,
            link_mat: Mat::from_row_major(m, dim, b.link_mat),
        });
    }
    Ok(BlockAngularInstance {
        link_sense: file.senses,
        t: file.t,
        blocks,
        meta: InstanceMeta {
            generator: "file".into(),
            seed: file.seed,
        },
    })
}

pub fn save(instance: &BlockAngularInstance, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, to_json(instance))
}

pub fn load(path: &Path) -> Result<BlockAngularInstance, crate::DdwError> {
    let text = std::fs::read_to_string(path)?;
    Ok(from_json(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_block_instance() -> BlockAngularInstance {
        // Block 0: 2 vars, one local row; block 1: 1 var, one local row; m = 2.
        BlockAngularInstance {
            link_sense: vec![LinkSense::GreaterEqual, LinkSense::Equality],
            t: vec![1.0, 2.0],
            blocks: vec![
                BlockData {
                    cost: vec![1.0, 2.0],
                    local_mat: Mat::from_rows(&[vec![1.0, 1.0]]),
                    local_rhs: vec![10.0],
                    lower: vec![0.0, 0.0],
                    upper: vec![30.0, 30.0],
                    link_mat: Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
                },
                BlockData {
                    cost: vec![-1.0],
                    local_mat: Mat::from_rows(&[vec![2.0]]),
                    local_rhs: vec![8.0],
                    lower: vec![0.0],
                    upper: vec![30.0],
                    link_mat: Mat::from_rows(&[vec![3.0], vec![1.0]]),
                },
            ],
            meta: InstanceMeta {
                generator: "test".into(),
                seed: 0,
            },
        }
    }

    #[test]
    fn validate_clean_instance() {
        assert!(validate(&two_block_instance()).is_empty());
    }

    #[test]
    fn validate_reports_t_length_mismatch() {
        let mut inst = two_block_instance();
        inst.t.pop();
        let defects = validate(&inst);
        assert_eq!(defects.len(), 1);
        assert_eq!(defects[0].location, "t");
    }

    #[test]
    fn validate_reports_inverted_bound() {
        let mut inst = two_block_instance();
        inst.blocks[0].lower[0] = 31.0;
        let defects = validate(&inst);
        assert_eq!(defects.len(), 1);
        assert_eq!(defects[0].location, "block 0");
        assert!(defects[0].detail.contains("inverted"));
    }

    #[test]
    fn validate_reports_nan() {
        let mut inst = two_block_instance();
        inst.blocks[1].cost[0] = f64::NAN;
        let defects = validate(&inst);
        assert_eq!(defects.len(), 1);
        assert!(defects[0].detail.contains("not finite"));
    }

    #[test]
    fn evaluate_zero_point() {
        let inst = two_block_instance();
        let (obj, res) = evaluate_primal(&inst, &[vec![0.0, 0.0], vec![0.0]]).unwrap();
        assert_eq!(obj, 0.0);
        assert_eq!(res, vec![-1.0, -2.0]);
    }

    #[test]
    fn evaluate_identity_block_hits_zero_residual() {
        // Single block, A = I, t = A x; residual must vanish.
        let inst = BlockAngularInstance {
            link_sense: vec![LinkSense::Equality, LinkSense::Equality],
            t: vec![3.0, 4.0],
            blocks: vec![BlockData {
                cost: vec![1.0, 1.0],
                local_mat: Mat::zeros(0, 2),
                local_rhs: vec![],
                lower: vec![0.0, 0.0],
                upper: vec![30.0, 30.0],
                link_mat: Mat::identity(2),
            }],
            meta: InstanceMeta {
                generator: "test".into(),
                seed: 0,
            },
        };
        let (_, res) = evaluate_primal(&inst, &[vec![3.0, 4.0]]).unwrap();
        assert_eq!(res, vec![0.0, 0.0]);
    }

    #[test]
    fn evaluate_matches_naive_triple_loop() {
        // Independent oracle: recompute objective and residual with plain loops.
        let inst = two_block_instance();
        let x_hat = vec![vec![0.7, 1.3], vec![2.5]];
        let (obj, res) = evaluate_primal(&inst, &x_hat).unwrap();

        let mut want_obj = 0.0;
        let mut want_res: Vec<f64> = inst.t.iter().map(|v| -v).collect();
        for (b, x) in inst.blocks.iter().zip(&x_hat) {
            for j in 0..b.dim() {
                want_obj += b.cost[j] * x[j];
                for i in 0..inst.num_links() {
                    want_res[i] += b.link_mat.get(i, j) * x[j];
                }
            }
        }
        assert!((obj - want_obj).abs() <= 1e-12 * (1.0 + want_obj.abs()));
        for i in 0..want_res.len() {
            assert!((res[i] - want_res[i]).abs() <= 1e-12 * (1.0 + want_res[i].abs()));
        }
    }

    #[test]
    fn evaluate_rejects_bad_dimension() {
        let inst = two_block_instance();
        let err = evaluate_primal(&inst, &[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap_err();
        match err {
            ModelError::DimensionMismatch { block, .. } => assert_eq!(block, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn column_caches_match_recomputation() {
        let inst = two_block_instance();
        let col = Column::from_point(1, vec![2.0], &inst.blocks[1]);
        let want_cost = linalg::dot(&inst.blocks[1].cost, &col.point);
        let want_link = inst.blocks[1].link_mat.matvec(&col.point);
        assert!((col.cost - want_cost).abs() <= 1e-12 * (1.0 + want_cost.abs()));
        for i in 0..want_link.len() {
            assert!((col.link[i] - want_link[i]).abs() <= 1e-12 * (1.0 + want_link[i].abs()));
        }
        // Frobenius bound used by the optimality-gap certificate.
        assert!(
            col.link_norm
                <= inst.blocks[1].link_mat.frobenius_norm() * linalg::norm2(&col.point) + 1e-12
        );
    }

    #[test]
    fn pool_rejects_duplicates() {
        let inst = two_block_instance();
        let mut pool = ColumnPool::new(0);
        let c1 = Column::from_point(0, vec![1.0, 2.0], &inst.blocks[0]);
        let c2 = Column::from_point(0, vec![1.0 + 1e-12, 2.0], &inst.blocks[0]);
        assert!(pool.push(c1));
        // Same point up to the 1e-9 rounding grid.
        assert!(!pool.push(c2));
        assert_eq!(pool.len(), 1);
        assert!(pool.contains_point(&[1.0, 2.0]));
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let inst = two_block_instance();
        let text = to_json(&inst);
        let back = from_json(&text).unwrap();
        assert_eq!(back.t, inst.t);
        assert_eq!(back.link_sense, inst.link_sense);
        assert_eq!(back.blocks, inst.blocks);
        // Serialization is deterministic.
        assert_eq!(text, to_json(&back));

        let bad = text.replace("\"version\":1", "\"version\":2");
        assert!(from_json(&bad).is_err());
    }
}
