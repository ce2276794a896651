//! Binary framing for the coordinator/worker protocol.
//!
//! Frame layout (all integers little-endian):
//!
//! ```text
//! "DDW1" (4 bytes) | u32 payload length | u8 message tag | payload
//! ```
//!
//! The length field counts the payload only (not the tag). Within payloads:
//! `u32` and `f64` are little-endian, vectors are a `u32` element count
//! followed by the elements, strings are a `u32` byte count followed by
//! UTF-8, booleans are one byte (0/1), and options are one presence byte
//! followed by the value. This layout is a compatibility contract; the tests
//! pin exact bytes.

use super::{ErrorCode, Message};
use crate::model::ColumnProjection;

pub const MAGIC: &[u8; 4] = b"DDW1";
/// Sanity cap on incoming frames (64 MiB).
const MAX_PAYLOAD: u32 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeError(pub String);

impl std::fmt::Display for DecodeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

const TAG_BROADCAST_PI: u8 = 1;
const TAG_WORKER_DUAL: u8 = 2;
const TAG_PRICE_REQUEST: u8 = 3;
const TAG_PRICE_RESULT: u8 = 4;
const TAG_SEED_REQUEST: u8 = 5;
const TAG_SEED_RESULT: u8 = 6;
const TAG_RECOVER_REQUEST: u8 = 7;
const TAG_RECOVER_RESULT: u8 = 8;
const TAG_STATS_REQUEST: u8 = 9;
const TAG_STATS_RESULT: u8 = 10;
const TAG_SHUTDOWN: u8 = 11;
const TAG_ERROR: u8 = 12;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn byte(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn vec(&mut self, v: &[f64]) {
        self.u32(v.len() as u32);
        for x in v {
            self.f64(*x);
        }
    }
    fn string(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.buf.len() {
            return Err(DecodeError("payload truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn byte(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
    fn vec(&mut self) -> Result<Vec<f64>, DecodeError> {
        let n = self.u32()? as usize;
        if n > (MAX_PAYLOAD as usize) / 8 {
            return Err(DecodeError("vector length out of range".into()));
        }
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.f64()?);
        }
        Ok(v)
    }
    fn string(&mut self) -> Result<String, DecodeError> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| DecodeError("invalid UTF-8".into()))
    }
    fn finish(&self) -> Result<(), DecodeError> {
        if self.pos != self.buf.len() {
            Err(DecodeError(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            )))
        } else {
            Ok(())
        }
    }
}

/// Encodes a message into a complete frame.
pub fn encode(msg: &Message) -> Vec<u8> {
    let mut w = Writer::new();
    let tag = match msg {
        Message::BroadcastPi {
            outer,
            inner,
            stage,
            pi,
            rho,
        } => {
            w.u32(*outer);
            w.u32(*inner);
            w.byte(*stage);
            w.f64(*rho);
            w.vec(pi);
            TAG_BROADCAST_PI
        }
        Message::WorkerDual {
            outer,
            inner,
            block,
            pi_n,
            u_n,
            sum_lambda,
        } => {
            w.u32(*outer);
            w.u32(*inner);
            w.u32(*block);
            w.f64(*u_n);
            w.f64(*sum_lambda);
            w.vec(pi_n);
            TAG_WORKER_DUAL
        }
        Message::PriceRequest {
            outer,
            inner,
            block,
            pi_hat,
            u_hat,
            eps_d_target,
        } => {
            w.u32(*outer);
            w.u32(*inner);
            w.u32(*block);
            w.f64(*u_hat);
            w.f64(*eps_d_target);
            w.vec(pi_hat);
            TAG_PRICE_REQUEST
        }
        Message::PriceResult {
            outer,
            inner,
            block,
            z_sep,
            threshold,
            duplicate,
            column,
        } => {
            w.u32(*outer);
            w.u32(*inner);
            w.u32(*block);
            w.f64(*z_sep);
            w.f64(*threshold);
            w.byte(u8::from(*duplicate));
            match column {
                None => w.byte(0),
                Some(c) => {
                    w.byte(1);
                    w.f64(c.cost);
                    w.vec(&c.link);
                }
            }
            TAG_PRICE_RESULT
        }
        Message::SeedRequest {
            outer,
            inner,
            block,
        } => {
            w.u32(*outer);
            w.u32(*inner);
            w.u32(*block);
            TAG_SEED_REQUEST
        }
        Message::SeedResult {
            outer,
            inner,
            block,
            column,
            frob_norm,
            box_norm,
            cost_norm,
        } => {
            w.u32(*outer);
            w.u32(*inner);
            w.u32(*block);
            w.f64(column.cost);
            w.f64(*frob_norm);
            w.f64(*box_norm);
            w.f64(*cost_norm);
            w.vec(&column.link);
            TAG_SEED_RESULT
        }
        Message::RecoverRequest {
            outer,
            inner,
            block,
        } => {
            w.u32(*outer);
            w.u32(*inner);
            w.u32(*block);
            TAG_RECOVER_REQUEST
        }
        Message::RecoverResult {
            outer,
            inner,
            block,
            x_hat,
            cost_share,
            link_image,
        } => {
            w.u32(*outer);
            w.u32(*inner);
            w.u32(*block);
            w.f64(*cost_share);
            w.vec(x_hat);
            w.vec(link_image);
            TAG_RECOVER_RESULT
        }
        Message::StatsRequest { outer, inner } => {
            w.u32(*outer);
            w.u32(*inner);
            TAG_STATS_REQUEST
        }
        Message::StatsResult {
            outer,
            inner,
            endpoint,
            t_update,
            t_comm,
            t_sync,
        } => {
            w.u32(*outer);
            w.u32(*inner);
            w.u32(*endpoint);
            w.f64(*t_update);
            w.f64(*t_comm);
            w.f64(*t_sync);
            TAG_STATS_RESULT
        }
        Message::Shutdown { outer, inner } => {
            w.u32(*outer);
            w.u32(*inner);
            TAG_SHUTDOWN
        }
        Message::Error {
            outer,
            inner,
            code,
            detail,
        } => {
            w.u32(*outer);
            w.u32(*inner);
            w.u32(*code as u32);
            w.string(detail);
            TAG_ERROR
        }
    };
    let payload = w.buf;
    let mut frame = Vec::with_capacity(9 + payload.len());
    frame.extend_from_slice(MAGIC);
    frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    frame.push(tag);
    frame.extend_from_slice(&payload);
    frame
}

/// Decodes one payload given its tag (the frame header is consumed by the
/// link layer).
pub fn decode(tag: u8, payload: &[u8]) -> Result<Message, DecodeError> {
    let mut r = Reader::new(payload);
    let msg = match tag {
        TAG_BROADCAST_PI => {
            let outer = r.u32()?;
            let inner = r.u32()?;
            let stage = r.byte()?;
            let rho = r.f64()?;
            let pi = r.vec()?;
            Message::BroadcastPi {
                outer,
                inner,
                stage,
                pi,
                rho,
            }
        }
        TAG_WORKER_DUAL => {
            let outer = r.u32()?;
            let inner = r.u32()?;
            let block = r.u32()?;
            let u_n = r.f64()?;
            let sum_lambda = r.f64()?;
            let pi_n = r.vec()?;
            Message::WorkerDual {
                outer,
                inner,
                block,
                pi_n,
                u_n,
                sum_lambda,
            }
        }
        TAG_PRICE_REQUEST => {
            let outer = r.u32()?;
            let inner = r.u32()?;
            let block = r.u32()?;
            let u_hat = r.f64()?;
            let eps_d_target = r.f64()?;
            let pi_hat = r.vec()?;
            Message::PriceRequest {
                outer,
                inner,
                block,
                pi_hat,
                u_hat,
                eps_d_target,
            }
        }
        TAG_PRICE_RESULT => {
            let outer = r.u32()?;
            let inner = r.u32()?;
            let block = r.u32()?;
            let z_sep = r.f64()?;
            let threshold = r.f64()?;
            let duplicate = r.byte()? != 0;
            let column = match r.byte()? {
                0 => None,
                1 => {
                    let cost = r.f64()?;
                    let link = r.vec()?;
                    Some(ColumnProjection::new(cost, link))
                }
                other => {
                    return Err(DecodeError(format!("bad option byte {other}")));
                }
            };
            Message::PriceResult {
                outer,
                inner,
                block,
                z_sep,
                threshold,
                duplicate,
                column,
            }
        }
        TAG_SEED_REQUEST => Message::SeedRequest {
            outer: r.u32()?,
            inner: r.u32()?,
            block: r.u32()?,
        },
        TAG_SEED_RESULT => {
            let outer = r.u32()?;
            let inner = r.u32()?;
            let block = r.u32()?;
            let cost = r.f64()?;
            let frob_norm = r.f64()?;
            let box_norm = r.f64()?;
            let cost_norm = r.f64()?;
            let link = r.vec()?;
            Message::SeedResult {
                outer,
                inner,
                block,
                column: ColumnProjection::new(cost, link),
                frob_norm,
                box_norm,
                cost_norm,
            }
        }
        TAG_RECOVER_REQUEST => Message::RecoverRequest {
            outer: r.u32()?,
            inner: r.u32()?,
            block: r.u32()?,
        },
        TAG_RECOVER_RESULT => {
            let outer = r.u32()?;
            let inner = r.u32()?;
            let block = r.u32()?;
            let cost_share = r.f64()?;
            let x_hat = r.vec()?;
            let link_image = r.vec()?;
            Message::RecoverResult {
                outer,
                inner,
                block,
                x_hat,
                cost_share,
                link_image,
            }
        }
        TAG_STATS_REQUEST => Message::StatsRequest {
            outer: r.u32()?,
            inner: r.u32()?,
        },
        TAG_STATS_RESULT => Message::StatsResult {
            outer: r.u32()?,
            inner: r.u32()?,
            endpoint: r.u32()?,
            t_update: r.f64()?,
            t_comm: r.f64()?,
            t_sync: r.f64()?,
        },
        TAG_SHUTDOWN => Message::Shutdown {
            outer: r.u32()?,
            inner: r.u32()?,
        },
        TAG_ERROR => {
            let outer = r.u32()?;
            let inner = r.u32()?;
            let code = ErrorCode::from_u32(r.u32()?)
                .ok_or_else(|| DecodeError("unknown error code".into()))?;
            let detail = r.string()?;
            Message::Error {
                outer,
                inner,
                code,
                detail,
            }
        }
        other => return Err(DecodeError(format!("unknown message tag {other}"))),
    };
    r.finish()?;
    Ok(msg)
}

/// Reads one frame from a byte stream.
pub fn read_frame<R: std::io::Read>(reader: &mut R) -> std::io::Result<Result<Message, DecodeError>> {
    let mut header = [0u8; 9];
    reader.read_exact(&mut header)?;
    if &header[..4] != MAGIC {
        return Ok(Err(DecodeError("bad magic".into())));
    }
    let len = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Ok(Err(DecodeError(format!("oversized frame ({len} bytes)"))));
    }
    let tag = header[8];
    let mut payload = vec![0u8; len as usize];
    reader.read_exact(&mut payload)?;
    Ok(decode(tag, &payload))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(msg: Message) {
        let frame = encode(&msg);
        assert_eq!(&frame[..4], MAGIC);
        let len = u32::from_le_bytes(frame[4..8].try_into().unwrap()) as usize;
        assert_eq!(frame.len(), 9 + len);
        let back = decode(frame[8], &frame[9..]).unwrap();
        assert_eq!(back, msg);
    }

    #[test]
    fn all_variants_round_trip() {
        round_trip(Message::BroadcastPi {
            outer: 3,
            inner: 17,
            stage: 2,
            pi: vec![1.5, -2.25],
            rho: 100.0,
        });
        round_trip(Message::WorkerDual {
            outer: 3,
            inner: 17,
            block: 4,
            pi_n: vec![0.5],
            u_n: -9.75,
            sum_lambda: 1.0,
        });
        round_trip(Message::PriceRequest {
            outer: 1,
            inner: 0,
            block: 0,
            pi_hat: vec![],
            u_hat: 2.0,
            eps_d_target: 5e-4,
        });
        round_trip(Message::PriceResult {
            outer: 1,
            inner: 0,
            block: 0,
            z_sep: -3.5,
            threshold: -0.01,
            duplicate: false,
            column: Some(ColumnProjection::new(12.0, vec![3.0, 4.0])),
        });
        round_trip(Message::PriceResult {
            outer: 1,
            inner: 0,
            block: 2,
            z_sep: 0.25,
            threshold: -0.01,
            duplicate: true,
            column: None,
        });
        round_trip(Message::SeedRequest {
            outer: 0,
            inner: 0,
            block: 7,
        });
        round_trip(Message::SeedResult {
            outer: 0,
            inner: 0,
            block: 7,
            column: ColumnProjection::new(-1.0, vec![0.0, 2.0]),
            frob_norm: 5.0,
            box_norm: 30.0,
            cost_norm: 4.0,
        });
        round_trip(Message::RecoverRequest {
            outer: 9,
            inner: 0,
            block: 1,
        });
        round_trip(Message::RecoverResult {
            outer: 9,
            inner: 0,
            block: 1,
            x_hat: vec![1.0, 2.0, 3.0],
            cost_share: 6.5,
            link_image: vec![4.5],
        });
        round_trip(Message::StatsRequest { outer: 9, inner: 0 });
        round_trip(Message::StatsResult {
            outer: 9,
            inner: 0,
            endpoint: 2,
            t_update: 1.5,
            t_comm: 0.25,
            t_sync: 3.0,
        });
        round_trip(Message::Shutdown { outer: 9, inner: 0 });
        round_trip(Message::Error {
            outer: 9,
            inner: 0,
            code: ErrorCode::OutOfOrder,
            detail: "seed first".into(),
        });
    }

    #[test]
    fn frame_bytes_are_pinned() {
        // Golden frame: the layout is a compatibility contract.
        let msg = Message::Shutdown { outer: 1, inner: 2 };
        let frame = encode(&msg);
        assert_eq!(
            frame,
            vec![
                b'D', b'D', b'W', b'1', // magic
                8, 0, 0, 0,   // payload length = 8
                11,           // tag Shutdown
                1, 0, 0, 0,   // outer
                2, 0, 0, 0,   // inner
            ]
        );

        let msg = Message::BroadcastPi {
            outer: 1,
            inner: 1,
            stage: 0,
            pi: vec![1.0],
            rho: 100.0,
        };
        let frame = encode(&msg);
        let mut want = Vec::new();
        want.extend_from_slice(b"DDW1");
        want.extend_from_slice(&29u32.to_le_bytes()); // 4+4+1+8+4+8
        want.push(1);
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&1u32.to_le_bytes());
        want.push(0);
        want.extend_from_slice(&100.0f64.to_le_bytes());
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&1.0f64.to_le_bytes());
        assert_eq!(frame, want);
    }

    #[test]
    fn trailing_bytes_rejected() {
        let msg = Message::Shutdown { outer: 0, inner: 0 };
        let frame = encode(&msg);
        let mut payload = frame[9..].to_vec();
        payload.push(0xFF);
        assert!(decode(11, &payload).is_err());
    }

    #[test]
    fn stream_reader_handles_frames() {
        let a = Message::Shutdown { outer: 5, inner: 6 };
        let b = Message::StatsRequest { outer: 5, inner: 6 };
        let mut bytes = encode(&a);
        bytes.extend(encode(&b));
        let mut cursor = std::io::Cursor::new(bytes);
        assert_eq!(read_frame(&mut cursor).unwrap().unwrap(), a);
        assert_eq!(read_frame(&mut cursor).unwrap().unwrap(), b);
        assert!(read_frame(&mut cursor).is_err()); // EOF
    }
}
