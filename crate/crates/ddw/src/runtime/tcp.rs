//! TCP transport speaking the framed protocol of [`super::wire`].
//!
//! The coordinator connects to a list of worker addresses (one endpoint per
//! address); a reader thread per socket forwards decoded frames into a
//! single queue. Worker processes serve one connection each via
//! [`serve_worker`]. Floats cross the wire as their exact IEEE-754 bits, so
//! results match the in-process transport bit for bit.

use std::io::Write;
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::Duration;

use super::agent::BlockAgent;
use super::wire;
use super::worker::{run_worker, FramedLink, LinkError};
use super::{Message, ProtocolError, Transport};
use crate::model::BlockAngularInstance;

enum Inbound {
    Frame(Message),
    Closed { endpoint: usize, detail: String },
}

/// Coordinator side of the TCP transport.
pub struct TcpTransport {
    writers: Vec<TcpStream>,
    incoming: Receiver<Inbound>,
    _readers: Vec<JoinHandle<()>>,
}

impl TcpTransport {
    /// Connects to every worker address. Addresses come from the
    /// `--workers host:port,...` flag or the `DDW_WORKERS` environment
    /// variable.
    pub fn connect<A: ToSocketAddrs + std::fmt::Display>(
        addrs: &[A],
    ) -> Result<Self, ProtocolError> {
        let (tx, incoming) = mpsc::channel();
        let mut writers = Vec::with_capacity(addrs.len());
        let mut readers = Vec::with_capacity(addrs.len());
        for (endpoint, addr) in addrs.iter().enumerate() {
            let stream = TcpStream::connect(addr)?;
            stream.set_nodelay(true)?;
            let mut read_half = stream.try_clone()?;
            let tx = tx.clone();
            let handle = std::thread::Builder::new()
                .name(format!("ddw-tcp-reader-{endpoint}"))
                .spawn(move || loop {
                    match wire::read_frame(&mut read_half) {
                        Ok(Ok(msg)) => {
                            if tx.send(Inbound::Frame(msg)).is_err() {
                                return;
                            }
                        }
                        Ok(Err(decode)) => {
                            let _ = tx.send(Inbound::Closed {
                                endpoint,
                                detail: decode.to_string(),
                            });
                            return;
                        }
                        Err(e) => {
                            let _ = tx.send(Inbound::Closed {
                                endpoint,
                                detail: e.to_string(),
                            });
                            return;
                        }
                    }
                })
                .expect("spawn tcp reader");
            writers.push(stream);
            readers.push(handle);
        }
        Ok(Self {
            writers,
            incoming,
            _readers: readers,
        })
    }
}

impl Transport for TcpTransport {
    fn num_endpoints(&self) -> usize {
        self.writers.len()
    }

    fn send(&mut self, endpoint: usize, msg: &Message) -> Result<(), ProtocolError> {
        let frame = wire::encode(msg);
        self.writers[endpoint]
            .write_all(&frame)
            .map_err(ProtocolError::Io)
    }

    fn recv(&mut self, timeout: Duration) -> Result<Message, ProtocolError> {
        match self.incoming.recv_timeout(timeout) {
            Ok(Inbound::Frame(m)) => Ok(m),
            Ok(Inbound::Closed { endpoint, detail }) => {
                if detail.contains("unexpected end of file") {
                    Err(ProtocolError::Disconnected { endpoint })
                } else {
                    Err(ProtocolError::Decode(format!(
                        "endpoint {endpoint}: {detail}"
                    )))
                }
            }
            Err(RecvTimeoutError::Timeout) => Err(ProtocolError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                Err(ProtocolError::Disconnected { endpoint: usize::MAX })
            }
        }
    }
}

/// Runs one worker endpoint: binds `listen`, accepts a single coordinator
/// connection, and serves the given block range of `instance`.
pub fn serve_worker(
    listen: &str,
    instance: &BlockAngularInstance,
    blocks: std::ops::Range<usize>,
    endpoint: usize,
) -> Result<(), ProtocolError> {
    let listener = TcpListener::bind(listen)?;
    let (stream, _peer) = listener.accept()?;
    stream.set_nodelay(true)?;
    serve_stream(stream, instance, blocks, endpoint)
}

/// Serves an already-accepted coordinator connection.
pub fn serve_stream(
    stream: TcpStream,
    instance: &BlockAngularInstance,
    blocks: std::ops::Range<usize>,
    endpoint: usize,
) -> Result<(), ProtocolError> {
    let n = instance.num_blocks();
    let mut agents: Vec<BlockAgent> = blocks
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
    let mut link = FramedLink { stream };
    match run_worker(&mut link, endpoint, &mut agents) {
        Ok(()) => Ok(()),
        Err(LinkError::Disconnected) => Ok(()),
        Err(LinkError::Decode(d)) => Err(ProtocolError::Decode(d)),
        Err(LinkError::Io(e)) => Err(ProtocolError::Io(e)),
    }
}
