//! Coordinator/worker message passing for the distributed solver.
//!
//! The outer algorithm is bulk-synchronous: the coordinator broadcasts, every
//! block replies, and a full barrier (the [`gather`] call) completes before
//! the next step. Replies are surfaced ordered by block id regardless of
//! arrival order, so iteration results never depend on scheduling. Two
//! transports implement the same [`Transport`] contract: [`InProcessTransport`]
//! runs workers as threads over channels, [`TcpTransport`] speaks the
//! length-prefixed frame protocol of [`wire`] across sockets.
//!
//! Every message carries `(outer, inner)` epoch tags; a reply from a stale
//! epoch or a duplicated block reply is a protocol error, never silent
//! corruption.

pub mod agent;
pub mod inprocess;
pub mod tcp;
pub mod wire;
pub mod worker;

pub use agent::BlockAgent;
pub use inprocess::InProcessTransport;
pub use tcp::{serve_worker, TcpTransport};

use std::collections::BTreeMap;
use std::time::Duration;

use thiserror::Error;

use crate::admm::{AgentDual, ConsensusAgents};
use crate::driver::{DdwAgents, PriceInfo, RecoverInfo, SeedInfo, WorkerStats};
use crate::model::ColumnProjection;
use crate::Result;

/// Default barrier timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

/// Worker-reported failure classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    /// A request arrived before the worker was in a state to serve it.
    OutOfOrder = 1,
    /// The frame could not be decoded.
    Malformed = 2,
    /// The handler failed internally (solver error, invariant violation).
    Internal = 3,
}

impl ErrorCode {
    pub fn from_u32(v: u32) -> Option<Self> {
        match v {
            1 => Some(Self::OutOfOrder),
            2 => Some(Self::Malformed),
            3 => Some(Self::Internal),
            _ => None,
        }
    }
}

/// Protocol messages. All variants carry the `(outer, inner)` epoch.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Coordinator -> workers: consensus iterate for one ADMM round.
    BroadcastPi {
        outer: u32,
        inner: u32,
        /// Tolerance-schedule stage, for diagnostics.
        stage: u8,
        pi: Vec<f64>,
        rho: f64,
    },
    /// Worker -> coordinator: one block's dual copy.
    WorkerDual {
        outer: u32,
        inner: u32,
        block: u32,
        pi_n: Vec<f64>,
        u_n: f64,
        sum_lambda: f64,
    },
    /// Coordinator -> worker: price one block at the final duals.
    PriceRequest {
        outer: u32,
        inner: u32,
        block: u32,
        pi_hat: Vec<f64>,
        u_hat: f64,
        eps_d_target: f64,
    },
    /// Worker -> coordinator: pricing outcome; the column, when present, is
    /// the master-data projection only.
    PriceResult {
        outer: u32,
        inner: u32,
        block: u32,
        z_sep: f64,
        threshold: f64,
        duplicate: bool,
        column: Option<ColumnProjection>,
    },
    SeedRequest {
        outer: u32,
        inner: u32,
        block: u32,
    },
    /// Seed column projection plus the block norms the coordinator needs for
    /// bound certificates (`||A_n||_F`, `||upper_n||`, `||c_n||`).
    SeedResult {
        outer: u32,
        inner: u32,
        block: u32,
        column: ColumnProjection,
        frob_norm: f64,
        box_norm: f64,
        cost_norm: f64,
    },
    RecoverRequest {
        outer: u32,
        inner: u32,
        block: u32,
    },
    /// Recovered block primal with its objective share and linking image.
    RecoverResult {
        outer: u32,
        inner: u32,
        block: u32,
        x_hat: Vec<f64>,
        cost_share: f64,
        link_image: Vec<f64>,
    },
    StatsRequest {
        outer: u32,
        inner: u32,
    },
    /// Per-endpoint phase times: compute, serialization/transit, barrier idle.
    StatsResult {
        outer: u32,
        inner: u32,
        endpoint: u32,
        t_update: f64,
        t_comm: f64,
        t_sync: f64,
    },
    Shutdown {
        outer: u32,
        inner: u32,
    },
    Error {
        outer: u32,
        inner: u32,
        code: ErrorCode,
        detail: String,
    },
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("gather timed out after {0:.1?}")]
    Timeout(Duration),
    #[error("epoch mismatch in {what}: expected outer {expected_outer} inner {expected_inner}, got outer {got_outer} inner {got_inner}")]
    EpochMismatch {
        what: String,
        expected_outer: u32,
        expected_inner: u32,
        got_outer: u32,
        got_inner: u32,
    },
    #[error("duplicate reply for block {block}")]
    DuplicateReply { block: u32 },
    #[error("unexpected message: {detail}")]
    UnexpectedMessage { detail: String },
    #[error("worker error ({code:?}): {detail}")]
    Worker { code: ErrorCode, detail: String },
    #[error("endpoint {endpoint} disconnected")]
    Disconnected { endpoint: usize },
    #[error("frame decode failed: {0}")]
    Decode(String),
    #[error("transport io: {0}")]
    Io(#[from] std::io::Error),
}

/// Coordinator-side message channel to the worker endpoints.
///
/// Each endpoint hosts one or more block agents; messages addressed to a
/// block are routed to its endpoint. Delivery is exactly-once and per-peer
/// FIFO; `recv` surfaces replies from any endpoint as they arrive.
pub trait Transport {
    fn num_endpoints(&self) -> usize;
    fn send(&mut self, endpoint: usize, msg: &Message) -> std::result::Result<(), ProtocolError>;
    fn recv(&mut self, timeout: Duration) -> std::result::Result<Message, ProtocolError>;

    fn broadcast(&mut self, msg: &Message) -> std::result::Result<(), ProtocolError> {
        for e in 0..self.num_endpoints() {
            self.send(e, msg)?;
        }
        Ok(())
    }
}

/// Collects exactly `expected` block-tagged replies and returns them ordered
/// by block id. `accept` validates each message (epoch checks) and extracts
/// the block id and payload; worker [`Message::Error`]s abort the gather.
pub fn gather<T, F, V>(
    transport: &mut T,
    expected: usize,
    timeout: Duration,
    mut accept: F,
) -> std::result::Result<Vec<V>, ProtocolError>
where
    T: Transport + ?Sized,
    F: FnMut(Message) -> std::result::Result<(u32, V), ProtocolError>,
{
    let deadline = std::time::Instant::now() + timeout;
    let mut replies: BTreeMap<u32, V> = BTreeMap::new();
    while replies.len() < expected {
        let remaining = deadline
            .checked_duration_since(std::time::Instant::now())
            .ok_or(ProtocolError::Timeout(timeout))?;
        let msg = transport.recv(remaining)?;
        if let Message::Error { code, detail, .. } = msg {
            return Err(ProtocolError::Worker { code, detail });
        }
        let (block, value) = accept(msg)?;
        if replies.insert(block, value).is_some() {
            return Err(ProtocolError::DuplicateReply { block });
        }
    }
    Ok(replies.into_values().collect())
}

/// Coordinator over a [`Transport`]: implements the agent traits the driver
/// and the consensus loop run against.
pub struct Coordinator<T: Transport> {
    transport: T,
    num_blocks: usize,
    /// endpoint hosting each block
    block_endpoint: Vec<usize>,
    outer: u32,
    inner: u32,
    stage: u8,
    timeout: Duration,
}

/// Splits `num_blocks` into contiguous chunks, one per endpoint.
pub fn partition_blocks(num_blocks: usize, num_endpoints: usize) -> Vec<std::ops::Range<usize>> {
    assert!(num_endpoints >= 1 && num_endpoints <= num_blocks);
    let base = num_blocks / num_endpoints;
    let extra = num_blocks % num_endpoints;
    let mut out = Vec::with_capacity(num_endpoints);
    let mut start = 0;
    for e in 0..num_endpoints {
        let len = base + usize::from(e < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

impl<T: Transport> Coordinator<T> {
    pub fn new(transport: T, num_blocks: usize, block_endpoint: Vec<usize>) -> Self {
        assert_eq!(block_endpoint.len(), num_blocks);
        Self {
            transport,
            num_blocks,
            block_endpoint,
            outer: 0,
            inner: 0,
            stage: 0,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }
}

impl<T: Transport> ConsensusAgents for Coordinator<T> {
    fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    fn admm_round(&mut self, k: usize, pi: &[f64], rho: f64) -> Result<Vec<AgentDual>> {
        self.inner = k as u32;
        let msg = Message::BroadcastPi {
            outer: self.outer,
            inner: self.inner,
            stage: self.stage,
            pi: pi.to_vec(),
            rho,
        };
        self.transport.broadcast(&msg)?;
        let outer = self.outer;
        let inner = self.inner;
        let duals = gather(&mut self.transport, self.num_blocks, self.timeout, |m| {
            match m {
                Message::WorkerDual {
                    outer: o,
                    inner: i,
                    block,
                    pi_n,
                    u_n,
                    sum_lambda,
                } => {
                    if o != outer || i != inner {
                        return Err(ProtocolError::EpochMismatch {
                            what: "WorkerDual".into(),
                            expected_outer: outer,
                            expected_inner: inner,
                            got_outer: o,
                            got_inner: i,
                        });
                    }
                    Ok((
                        block,
                        AgentDual {
                            block: block as usize,
                            pi_n,
                            u_n,
                            sum_lambda,
                        },
                    ))
                }
                other => Err(ProtocolError::UnexpectedMessage {
                    detail: format!("expected WorkerDual, got {other:?}"),
                }),
            }
        })?;
        Ok(duals)
    }
}

impl<T: Transport> DdwAgents for Coordinator<T> {
    fn begin_outer(&mut self, outer: usize, stage: usize) {
        self.outer = outer as u32;
        self.inner = 0;
        self.stage = stage as u8;
    }

    fn seed(&mut self) -> Result<Vec<SeedInfo>> {
        for block in 0..self.num_blocks {
            let msg = Message::SeedRequest {
                outer: self.outer,
                inner: 0,
                block: block as u32,
            };
            self.transport.send(self.block_endpoint[block], &msg)?;
        }
        let (outer, n) = (self.outer, self.num_blocks);
        let infos = gather(&mut self.transport, n, self.timeout, |m| match m {
            Message::SeedResult {
                outer: o,
                block,
                column,
                frob_norm,
                box_norm,
                cost_norm,
                ..
            } => {
                if o != outer {
                    return Err(ProtocolError::EpochMismatch {
                        what: "SeedResult".into(),
                        expected_outer: outer,
                        expected_inner: 0,
                        got_outer: o,
                        got_inner: 0,
                    });
                }
                Ok((
                    block,
                    SeedInfo {
                        block: block as usize,
                        column,
                        frob_norm,
                        box_norm,
                        cost_norm,
                    },
                ))
            }
            other => Err(ProtocolError::UnexpectedMessage {
                detail: format!("expected SeedResult, got {other:?}"),
            }),
        })?;
        Ok(infos)
    }

    fn price(
        &mut self,
        pi_hat: &[f64],
        u_hats: &[f64],
        eps_d_target: f64,
    ) -> Result<Vec<PriceInfo>> {
        for block in 0..self.num_blocks {
            let msg = Message::PriceRequest {
                outer: self.outer,
                inner: self.inner,
                block: block as u32,
                pi_hat: pi_hat.to_vec(),
                u_hat: u_hats[block],
                eps_d_target,
            };
            self.transport.send(self.block_endpoint[block], &msg)?;
        }
        let (outer, n) = (self.outer, self.num_blocks);
        let infos = gather(&mut self.transport, n, self.timeout, |m| match m {
            Message::PriceResult {
                outer: o,
                block,
                z_sep,
                threshold,
                duplicate,
                column,
                ..
            } => {
                if o != outer {
                    return Err(ProtocolError::EpochMismatch {
                        what: "PriceResult".into(),
                        expected_outer: outer,
                        expected_inner: 0,
                        got_outer: o,
                        got_inner: 0,
                    });
                }
                Ok((
                    block,
                    PriceInfo {
                        block: block as usize,
                        z_sep,
                        threshold,
                        duplicate,
                        column,
                    },
                ))
            }
            other => Err(ProtocolError::UnexpectedMessage {
                detail: format!("expected PriceResult, got {other:?}"),
            }),
        })?;
        Ok(infos)
    }

    fn recover(&mut self) -> Result<Vec<RecoverInfo>> {
        for block in 0..self.num_blocks {
            let msg = Message::RecoverRequest {
                outer: self.outer,
                inner: self.inner,
                block: block as u32,
            };
            self.transport.send(self.block_endpoint[block], &msg)?;
        }
        let n = self.num_blocks;
        let infos = gather(&mut self.transport, n, self.timeout, |m| match m {
            Message::RecoverResult {
                block,
                x_hat,
                cost_share,
                link_image,
                ..
            } => Ok((
                block,
                RecoverInfo {
                    block: block as usize,
                    x_hat,
                    cost_share,
                    link_image,
                },
            )),
            other => Err(ProtocolError::UnexpectedMessage {
                detail: format!("expected RecoverResult, got {other:?}"),
            }),
        })?;
        Ok(infos)
    }

    fn stats(&mut self) -> Result<Vec<WorkerStats>> {
        let msg = Message::StatsRequest {
            outer: self.outer,
            inner: self.inner,
        };
        self.transport.broadcast(&msg)?;
        let n = self.transport.num_endpoints();
        let stats = gather(&mut self.transport, n, self.timeout, |m| match m {
            Message::StatsResult {
                endpoint,
                t_update,
                t_comm,
                t_sync,
                ..
            } => Ok((
                endpoint,
                WorkerStats {
                    endpoint: endpoint as usize,
                    t_update,
                    t_comm,
                    t_sync,
                },
            )),
            other => Err(ProtocolError::UnexpectedMessage {
                detail: format!("expected StatsResult, got {other:?}"),
            }),
        })?;
        Ok(stats)
    }

    fn shutdown(&mut self) -> Result<()> {
        self.transport.broadcast(&Message::Shutdown {
            outer: self.outer,
            inner: self.inner,
        })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    /// Transport fed from a script, for gather-contract tests.
    struct Scripted {
        incoming: VecDeque<Message>,
    }

    impl Transport for Scripted {
        fn num_endpoints(&self) -> usize {
            1
        }
        fn send(&mut self, _e: usize, _m: &Message) -> std::result::Result<(), ProtocolError> {
            Ok(())
        }
        fn recv(&mut self, _t: Duration) -> std::result::Result<Message, ProtocolError> {
            self.incoming
                .pop_front()
                .ok_or(ProtocolError::Timeout(Duration::ZERO))
        }
    }

    fn dual(block: u32, inner: u32) -> Message {
        Message::WorkerDual {
            outer: 1,
            inner,
            block,
            pi_n: vec![block as f64],
            u_n: 0.0,
            sum_lambda: 1.0,
        }
    }

    fn accept_dual(expected_inner: u32) -> impl FnMut(Message) -> std::result::Result<(u32, f64), ProtocolError> {
        move |m| match m {
            Message::WorkerDual {
                inner, block, pi_n, ..
            } => {
                if inner != expected_inner {
                    return Err(ProtocolError::EpochMismatch {
                        what: "WorkerDual".into(),
                        expected_outer: 1,
                        expected_inner,
                        got_outer: 1,
                        got_inner: inner,
                    });
                }
                Ok((block, pi_n[0]))
            }
            other => Err(ProtocolError::UnexpectedMessage {
                detail: format!("{other:?}"),
            }),
        }
    }

    #[test]
    fn gather_orders_by_block_id() {
        // Replies arrive 3, 1, 2: gather yields 1, 2, 3.
        let mut t = Scripted {
            incoming: [dual(3, 5), dual(1, 5), dual(2, 5)].into(),
        };
        let got = gather(&mut t, 3, Duration::from_secs(1), accept_dual(5)).unwrap();
        assert_eq!(got, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn gather_rejects_stale_epoch() {
        let mut t = Scripted {
            incoming: [dual(1, 4), dual(2, 5)].into(),
        };
        let err = gather(&mut t, 2, Duration::from_secs(1), accept_dual(5)).unwrap_err();
        assert!(matches!(err, ProtocolError::EpochMismatch { .. }));
    }

    #[test]
    fn gather_rejects_duplicate_block() {
        let mut t = Scripted {
            incoming: [dual(1, 5), dual(1, 5)].into(),
        };
        let err = gather(&mut t, 2, Duration::from_secs(1), accept_dual(5)).unwrap_err();
        assert!(matches!(err, ProtocolError::DuplicateReply { block: 1 }));
    }

    #[test]
    fn gather_surfaces_worker_errors() {
        let mut t = Scripted {
            incoming: [Message::Error {
                outer: 1,
                inner: 5,
                code: ErrorCode::OutOfOrder,
                detail: "seed first".into(),
            }]
            .into(),
        };
        let err = gather(&mut t, 1, Duration::from_secs(1), accept_dual(5)).unwrap_err();
        assert!(matches!(
            err,
            ProtocolError::Worker {
                code: ErrorCode::OutOfOrder,
                ..
            }
        ));
    }

    #[test]
    fn partition_is_contiguous_and_balanced() {
        let parts = partition_blocks(8, 4);
        assert_eq!(parts, vec![0..2, 2..4, 4..6, 6..8]);
        let parts = partition_blocks(7, 3);
        assert_eq!(parts, vec![0..3, 3..5, 5..7]);
        let parts = partition_blocks(3, 3);
        assert_eq!(parts, vec![0..1, 1..2, 2..3]);
    }
}
