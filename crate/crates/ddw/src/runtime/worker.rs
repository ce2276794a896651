//! The worker event loop shared by both transports.
//!
//! [`run_worker`] serves a set of block agents over a [`WorkerLink`]. The
//! loop also keeps the phase clocks: time blocked waiting for the next
//! request counts as synchronization (`t_sync`), encoding/sending replies as
//! communication (`t_comm`), and handler work as useful compute (`t_update`).

use std::time::Instant;

use super::agent::{AgentError, BlockAgent};
use super::wire;
use super::{ErrorCode, Message};

/// One worker endpoint's side of the message channel.
pub trait WorkerLink {
    fn recv(&mut self) -> Result<Message, LinkError>;
    fn send(&mut self, msg: &Message) -> Result<(), LinkError>;
}

#[derive(Debug)]
pub enum LinkError {
    Disconnected,
    Decode(String),
    Io(std::io::Error),
}

/// Framed link over any byte stream (TCP in production, in-memory duplexes
/// in tests).
pub struct FramedLink<S: std::io::Read + std::io::Write> {
    pub stream: S,
}

impl<S: std::io::Read + std::io::Write> WorkerLink for FramedLink<S> {
    fn recv(&mut self) -> Result<Message, LinkError> {
        match wire::read_frame(&mut self.stream) {
            Ok(Ok(msg)) => Ok(msg),
            Ok(Err(e)) => Err(LinkError::Decode(e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(LinkError::Disconnected),
            Err(e) => Err(LinkError::Io(e)),
        }
    }

    fn send(&mut self, msg: &Message) -> Result<(), LinkError> {
        let frame = wire::encode(msg);
        self.stream.write_all(&frame).map_err(LinkError::Io)?;
        self.stream.flush().map_err(LinkError::Io)
    }
}

/// Phase-time accumulators for one endpoint, in seconds.
#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseClock {
    pub t_update: f64,
    pub t_comm: f64,
    pub t_sync: f64,
}

fn error_reply(outer: u32, inner: u32, err: AgentError) -> Message {
    let (code, detail) = match err {
        AgentError::OutOfOrder(d) => (ErrorCode::OutOfOrder, d),
        AgentError::Internal(d) => (ErrorCode::Internal, d),
    };
    Message::Error {
        outer,
        inner,
        code,
        detail,
    }
}

/// Serves `agents` (ordered by block id) until a `Shutdown` arrives or the
/// peer disconnects. Handler failures are reported as `Error` messages; a
/// malformed frame gets an `Error` reply and closes the loop.
pub fn run_worker(
    link: &mut dyn WorkerLink,
    endpoint: usize,
    agents: &mut [BlockAgent],
) -> Result<(), LinkError> {
    let mut clock = PhaseClock::default();
    loop {
        let wait_start = Instant::now();
        let msg = match link.recv() {
            Ok(m) => m,
            Err(LinkError::Disconnected) => return Ok(()),
            Err(LinkError::Decode(detail)) => {
                let _ = link.send(&Message::Error {
                    outer: 0,
                    inner: 0,
                    code: ErrorCode::Malformed,
                    detail,
                });
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        clock.t_sync += wait_start.elapsed().as_secs_f64();

        let mut replies: Vec<Message> = Vec::new();
        let work_start = Instant::now();
        match msg {
            Message::BroadcastPi {
                outer,
                inner,
                pi,
                rho,
                ..
            } => {
                for agent in agents.iter_mut() {
                    match agent.handle_broadcast(&pi, rho) {
                        Ok(d) => replies.push(Message::WorkerDual {
                            outer,
                            inner,
                            block: d.block as u32,
                            pi_n: d.pi_n,
                            u_n: d.u_n,
                            sum_lambda: d.sum_lambda,
                        }),
                        Err(e) => replies.push(error_reply(outer, inner, e)),
                    }
                }
            }
            Message::SeedRequest {
                outer,
                inner,
                block,
            } => match find_agent(agents, block) {
                Ok(agent) => match agent.handle_seed() {
                    Ok(s) => replies.push(Message::SeedResult {
                        outer,
                        inner,
                        block,
                        column: s.column,
                        frob_norm: s.frob_norm,
                        box_norm: s.box_norm,
                        cost_norm: s.cost_norm,
                    }),
                    Err(e) => replies.push(error_reply(outer, inner, e)),
                },
                Err(e) => replies.push(error_reply(outer, inner, e)),
            },
            Message::PriceRequest {
                outer,
                inner,
                block,
                pi_hat,
                u_hat,
                eps_d_target,
            } => match find_agent(agents, block) {
                Ok(agent) => match agent.handle_price(&pi_hat, u_hat, eps_d_target) {
                    Ok(p) => replies.push(Message::PriceResult {
                        outer,
                        inner,
                        block,
                        z_sep: p.z_sep,
                        threshold: p.threshold,
                        duplicate: p.duplicate,
                        column: p.column,
                    }),
                    Err(e) => replies.push(error_reply(outer, inner, e)),
                },
                Err(e) => replies.push(error_reply(outer, inner, e)),
            },
            Message::RecoverRequest {
                outer,
                inner,
                block,
            } => match find_agent(agents, block) {
                Ok(agent) => match agent.handle_recover() {
                    Ok(r) => replies.push(Message::RecoverResult {
                        outer,
                        inner,
                        block,
                        x_hat: r.x_hat,
                        cost_share: r.cost_share,
                        link_image: r.link_image,
                    }),
                    Err(e) => replies.push(error_reply(outer, inner, e)),
                },
                Err(e) => replies.push(error_reply(outer, inner, e)),
            },
            Message::StatsRequest { outer, inner } => {
                replies.push(Message::StatsResult {
                    outer,
                    inner,
                    endpoint: endpoint as u32,
                    t_update: clock.t_update,
                    t_comm: clock.t_comm,
                    t_sync: clock.t_sync,
                });
            }
            Message::Shutdown { .. } => return Ok(()),
            other => {
                replies.push(Message::Error {
                    outer: 0,
                    inner: 0,
                    code: ErrorCode::Malformed,
                    detail: format!("worker cannot serve {other:?}"),
                });
            }
        }
        clock.t_update += work_start.elapsed().as_secs_f64();

        let send_start = Instant::now();
        for reply in &replies {
            link.send(reply)?;
        }
        clock.t_comm += send_start.elapsed().as_secs_f64();
    }
}

fn find_agent<'a>(
    agents: &'a mut [BlockAgent],
    block: u32,
) -> Result<&'a mut BlockAgent, AgentError> {
    agents
        .iter_mut()
        .find(|a| a.block_id == block as usize)
        .ok_or_else(|| AgentError::OutOfOrder(format!("block {block} is not hosted here")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::model::{BlockData, LinkSense};

    fn agent(block_id: usize) -> BlockAgent {
        let data = BlockData {
            cost: vec![1.0, 2.0],
            local_mat: Mat::zeros(0, 2),
            local_rhs: vec![],
            lower: vec![0.0, 0.0],
            upper: vec![30.0, 30.0],
            link_mat: Mat::from_rows(&[vec![1.0, -1.0]]),
        };
        BlockAgent::new(block_id, data, 1, vec![2.0], &[LinkSense::GreaterEqual])
    }

    /// In-memory link driven by a script of incoming messages.
    struct ScriptLink {
        incoming: std::collections::VecDeque<Message>,
        sent: Vec<Message>,
    }

    impl WorkerLink for ScriptLink {
        fn recv(&mut self) -> Result<Message, LinkError> {
            self.incoming.pop_front().ok_or(LinkError::Disconnected)
        }
        fn send(&mut self, msg: &Message) -> Result<(), LinkError> {
            self.sent.push(msg.clone());
            Ok(())
        }
    }

    #[test]
    fn shutdown_first_message_exits_cleanly() {
        let mut link = ScriptLink {
            incoming: [Message::Shutdown { outer: 0, inner: 0 }].into(),
            sent: vec![],
        };
        let mut agents = [agent(0)];
        run_worker(&mut link, 0, &mut agents).unwrap();
        assert!(link.sent.is_empty());
    }

    #[test]
    fn broadcast_before_seed_is_out_of_order() {
        let mut link = ScriptLink {
            incoming: [
                Message::BroadcastPi {
                    outer: 1,
                    inner: 1,
                    stage: 0,
                    pi: vec![0.0],
                    rho: 100.0,
                },
                Message::Shutdown { outer: 1, inner: 1 },
            ]
            .into(),
            sent: vec![],
        };
        let mut agents = [agent(0)];
        run_worker(&mut link, 0, &mut agents).unwrap();
        assert_eq!(link.sent.len(), 1);
        assert!(matches!(
            link.sent[0],
            Message::Error {
                code: ErrorCode::OutOfOrder,
                ..
            }
        ));
    }

    #[test]
    fn scripted_exchange_transcript_is_byte_identical() {
        // Two consensus iterations over a framed in-memory stream; the reply
        // transcript must be byte-identical across runs.
        let script = |agents: &mut [BlockAgent]| -> Vec<u8> {
            let msgs = vec![
                Message::SeedRequest {
                    outer: 1,
                    inner: 0,
                    block: 0,
                },
                Message::BroadcastPi {
                    outer: 1,
                    inner: 1,
                    stage: 0,
                    pi: vec![0.0],
                    rho: 100.0,
                },
                Message::BroadcastPi {
                    outer: 1,
                    inner: 2,
                    stage: 0,
                    pi: vec![0.125],
                    rho: 100.0,
                },
                Message::StatsRequest { outer: 1, inner: 2 },
                Message::Shutdown { outer: 1, inner: 2 },
            ];
            let mut input = Vec::new();
            for m in &msgs {
                input.extend(wire::encode(m));
            }
            struct Duplex {
                input: std::io::Cursor<Vec<u8>>,
                output: Vec<u8>,
            }
            impl std::io::Read for Duplex {
                fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
                    self.input.read(buf)
                }
            }
            impl std::io::Write for Duplex {
                fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                    self.output.extend_from_slice(buf);
                    Ok(buf.len())
                }
                fn flush(&mut self) -> std::io::Result<()> {
                    Ok(())
                }
            }
            let mut link = FramedLink {
                stream: Duplex {
                    input: std::io::Cursor::new(input),
                    output: Vec::new(),
                },
            };
            run_worker(&mut link, 0, agents).unwrap();
            link.stream.output
        };
        let mut agents_a = [agent(0)];
        let mut agents_b = [agent(0)];
        let ta = script(&mut agents_a);
        let tb = script(&mut agents_b);
        // Stats frames carry wall-clock times; compare everything before the
        // stats reply, which is all the numeric protocol content.
        let cut = |bytes: &[u8]| -> Vec<u8> {
            let mut cursor = std::io::Cursor::new(bytes.to_vec());
            let mut out = Vec::new();
            while let Ok(Ok(msg)) = wire::read_frame(&mut cursor) {
                if matches!(msg, Message::StatsResult { .. }) {
                    break;
                }
                out.extend(wire::encode(&msg));
            }
            out
        };
        let (ca, cb) = (cut(&ta), cut(&tb));
        assert!(!ca.is_empty());
        assert_eq!(ca, cb, "transcripts diverged across identical runs");
    }
}
