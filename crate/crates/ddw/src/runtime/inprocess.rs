//! In-process transport: workers run as threads, messages cross on channels.
//!
//! This is the default transport for benchmarks. Message values are moved
//! intact (no serialization), so runs are bitwise-reproducible.

use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, SyncSender};
use std::thread::JoinHandle;
use std::time::Duration;

use super::agent::BlockAgent;
use super::worker::{run_worker, LinkError, WorkerLink};
use super::{partition_blocks, Message, ProtocolError, Transport};
use crate::model::BlockAngularInstance;

struct ChannelLink {
    rx: Receiver<Message>,
    tx: Sender<Message>,
}

impl WorkerLink for ChannelLink {
    fn recv(&mut self) -> Result<Message, LinkError> {
        self.rx.recv().map_err(|_| LinkError::Disconnected)
    }
    fn send(&mut self, msg: &Message) -> Result<(), LinkError> {
        self.tx
            .send(msg.clone())
            .map_err(|_| LinkError::Disconnected)
    }
}

/// Channel transport with one worker thread per endpoint.
pub struct InProcessTransport {
    to_workers: Vec<SyncSender<Message>>,
    from_workers: Receiver<Message>,
    handles: Vec<JoinHandle<()>>,
}

impl InProcessTransport {
    /// Spawns `num_endpoints` worker threads, each hosting a contiguous
    /// chunk of the instance's blocks.
    pub fn spawn(instance: &BlockAngularInstance, num_endpoints: usize) -> Self {
        let n = instance.num_blocks();
        let parts = partition_blocks(n, num_endpoints);
        let (reply_tx, from_workers) = mpsc::channel::<Message>();
        let mut to_workers = Vec::with_capacity(num_endpoints);
        let mut handles = Vec::with_capacity(num_endpoints);
        for (endpoint, range) in parts.into_iter().enumerate() {
            let mut agents: Vec<BlockAgent> = range
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
            // Bounded request queue: the coordinator is bulk-synchronous, so
            // a small buffer suffices and keeps memory flat.
            let (req_tx, req_rx) = mpsc::sync_channel::<Message>(64);
            let tx = reply_tx.clone();
            let handle = std::thread::Builder::new()
                .name(format!("ddw-worker-{endpoint}"))
                .spawn(move || {
                    let mut link = ChannelLink { rx: req_rx, tx };
                    // A disconnect just ends the worker; coordinator-side
                    // gathers surface the failure.
                    let _ = run_worker(&mut link, endpoint, &mut agents);
                })
                .expect("spawn worker thread");
            to_workers.push(req_tx);
            handles.push(handle);
        }
        Self {
            to_workers,
            from_workers,
            handles,
        }
    }

    /// Waits for all worker threads to exit (after a `Shutdown` broadcast).
    pub fn join(&mut self) {
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for InProcessTransport {
    fn drop(&mut self) {
        // Closing the request channels unblocks the workers.
        self.to_workers.clear();
        self.join();
    }
}

impl Transport for InProcessTransport {
    fn num_endpoints(&self) -> usize {
        self.to_workers.len()
    }

    fn send(&mut self, endpoint: usize, msg: &Message) -> Result<(), ProtocolError> {
        self.to_workers[endpoint]
            .send(msg.clone())
            .map_err(|_| ProtocolError::Disconnected { endpoint })
    }

    fn recv(&mut self, timeout: Duration) -> Result<Message, ProtocolError> {
        match self.from_workers.recv_timeout(timeout) {
            Ok(m) => Ok(m),
            Err(RecvTimeoutError::Timeout) => Err(ProtocolError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                Err(ProtocolError::Disconnected { endpoint: usize::MAX })
            }
        }
    }
}
