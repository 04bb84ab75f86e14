//! Typed payload bodies carried inside control messages.
//!
//! Every message kind maps to one body shape; `TrafficBuffer` and
//! `PatternRequest` share the packet-list shape, and the three alert kinds
//! share the alert shape. Bodies serialize big-endian with no padding, and
//! decoding is strict: the payload must contain exactly the bytes the shape
//! calls for. Floats travel as raw IEEE bits so values survive a round trip
//! unchanged.
//!
//! A packet record is 16 bytes: user u32, vm u16, size u32, dscp code u8,
//! attack flag u8, signature u32.

use crate::firewall::Dscp;
use crate::traffic::SimPacket;
use crate::wire::{MsgKind, MAX_PAYLOAD};
use crate::{UserId, VmId};

pub const PACKET_RECORD_LEN: usize = 16;

/// Most packet records one message can carry without overflowing the
/// header's 16-bit length field.
pub const MAX_PACKETS_PER_MESSAGE: usize = (MAX_PAYLOAD - 4) / PACKET_RECORD_LEN;

/// Most `(user, bytes)` entries one consumption report can carry.
pub const MAX_USERS_PER_REPORT: usize = (MAX_PAYLOAD - 4) / 12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PayloadError {
    #[error("payload truncated: need {need} bytes, got {got}")]
    Truncated { need: usize, got: usize },
    #[error("{0} trailing bytes after body")]
    TrailingBytes(usize),
    #[error("unknown dscp code {0}")]
    BadDscp(u8),
    #[error("unknown ack opcode {0}")]
    BadAckOp(u8),
    #[error("non-finite value in field {0}")]
    NonFinite(&'static str),
    #[error("{0} packets exceed the per-message limit")]
    TooManyPackets(usize),
    #[error("{0} users exceed the per-report limit")]
    TooManyUsers(usize),
    #[error("verdict signature must be nonzero")]
    ZeroVerdict,
}

/// What an `Ack` asks of its recipient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckOp {
    Plain = 0,
    RestoreAlpha = 1,
}

impl AckOp {
    fn from_code(code: u8) -> Result<Self, PayloadError> {
        match code {
            0 => Ok(AckOp::Plain),
            1 => Ok(AckOp::RestoreAlpha),
            other => Err(PayloadError::BadAckOp(other)),
        }
    }
}

/// Decoded message body.
#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Empty,
    Ack { op: AckOp, vm: VmId },
    Alert { vm: VmId, load: f64, alpha: f64 },
    HighUsers { vm: VmId, users: Vec<(UserId, u64)> },
    Packets { vm: VmId, packets: Vec<SimPacket> },
    PatternResult { vm: VmId, verdict: Option<u32> },
    RuleUpdate { signature: u32 },
    Policing { vm: VmId, target_pct: f64, clamp: f64 },
    BandwidthChange { vm: VmId, budget_pct: f64 },
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], PayloadError> {
        if self.buf.len() - self.pos < n {
            return Err(PayloadError::Truncated { need: self.pos + n, got: self.buf.len() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, PayloadError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, PayloadError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, PayloadError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, PayloadError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self, field: &'static str) -> Result<f64, PayloadError> {
        let v = f64::from_be_bytes(self.take(8)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(PayloadError::NonFinite(field));
        }
        Ok(v)
    }

    fn finish(self) -> Result<(), PayloadError> {
        let left = self.buf.len() - self.pos;
        if left != 0 {
            return Err(PayloadError::TrailingBytes(left));
        }
        Ok(())
    }
}

fn put_f64(out: &mut Vec<u8>, v: f64, field: &'static str) -> Result<(), PayloadError> {
    if !v.is_finite() {
        return Err(PayloadError::NonFinite(field));
    }
    out.extend_from_slice(&v.to_be_bytes());
    Ok(())
}

fn encode_packet(out: &mut Vec<u8>, p: &SimPacket) {
    out.extend_from_slice(&p.user.0.to_be_bytes());
    out.extend_from_slice(&p.vm.0.to_be_bytes());
    out.extend_from_slice(&p.size.to_be_bytes());
    out.push(p.dscp.code());
    out.push(p.is_attack as u8);
    out.extend_from_slice(&p.signature.to_be_bytes());
}

fn decode_packet(r: &mut Reader) -> Result<SimPacket, PayloadError> {
    let user = UserId(r.u32()?);
    let vm = VmId(r.u16()?);
    let size = r.u32()?;
    let dscp_code = r.u8()?;
    let dscp = Dscp::from_code(dscp_code).ok_or(PayloadError::BadDscp(dscp_code))?;
    let is_attack = r.u8()? != 0;
    let signature = r.u32()?;
    Ok(SimPacket { user, vm, size, dscp, is_attack, signature })
}

impl Body {
    pub fn encode(&self) -> Result<Vec<u8>, PayloadError> {
        let mut out = Vec::new();
        match self {
            Body::Empty => {}
            Body::Ack { op, vm } => {
                out.push(*op as u8);
                out.extend_from_slice(&vm.0.to_be_bytes());
            }
            Body::Alert { vm, load, alpha } => {
                out.extend_from_slice(&vm.0.to_be_bytes());
                put_f64(&mut out, *load, "load")?;
                put_f64(&mut out, *alpha, "alpha")?;
            }
            Body::HighUsers { vm, users } => {
                if users.len() > MAX_USERS_PER_REPORT {
                    return Err(PayloadError::TooManyUsers(users.len()));
                }
                out.extend_from_slice(&vm.0.to_be_bytes());
                out.extend_from_slice(&(users.len() as u16).to_be_bytes());
                for (user, bytes) in users {
                    out.extend_from_slice(&user.0.to_be_bytes());
                    out.extend_from_slice(&bytes.to_be_bytes());
                }
            }
            Body::Packets { vm, packets } => {
                if packets.len() > MAX_PACKETS_PER_MESSAGE {
                    return Err(PayloadError::TooManyPackets(packets.len()));
                }
                out.extend_from_slice(&vm.0.to_be_bytes());
                out.extend_from_slice(&(packets.len() as u16).to_be_bytes());
                for p in packets {
                    encode_packet(&mut out, p);
                }
            }
            Body::PatternResult { vm, verdict } => {
                if *verdict == Some(0) {
                    return Err(PayloadError::ZeroVerdict);
                }
                out.extend_from_slice(&vm.0.to_be_bytes());
                out.extend_from_slice(&verdict.unwrap_or(0).to_be_bytes());
            }
            Body::RuleUpdate { signature } => {
                out.extend_from_slice(&signature.to_be_bytes());
            }
            Body::Policing { vm, target_pct, clamp } => {
                out.extend_from_slice(&vm.0.to_be_bytes());
                put_f64(&mut out, *target_pct, "target_pct")?;
                put_f64(&mut out, *clamp, "clamp")?;
            }
            Body::BandwidthChange { vm, budget_pct } => {
                out.extend_from_slice(&vm.0.to_be_bytes());
                put_f64(&mut out, *budget_pct, "budget_pct")?;
            }
        }
        Ok(out)
    }

    /// Decodes a payload against the shape its kind dictates.
    pub fn decode(kind: MsgKind, payload: &[u8]) -> Result<Body, PayloadError> {
        let mut r = Reader::new(payload);
        let body = match kind {
            MsgKind::Alloha => Body::Empty,
            MsgKind::Ack => {
                let op = AckOp::from_code(r.u8()?)?;
                let vm = VmId(r.u16()?);
                Body::Ack { op, vm }
            }
            MsgKind::Alert1 | MsgKind::Alert2 | MsgKind::Alert3 => {
                let vm = VmId(r.u16()?);
                let load = r.f64("load")?;
                let alpha = r.f64("alpha")?;
                Body::Alert { vm, load, alpha }
            }
            MsgKind::HighUsersReport => {
                let vm = VmId(r.u16()?);
                let count = r.u16()? as usize;
                let mut users = Vec::with_capacity(count);
                for _ in 0..count {
                    users.push((UserId(r.u32()?), r.u64()?));
                }
                Body::HighUsers { vm, users }
            }
            MsgKind::TrafficBuffer | MsgKind::PatternRequest => {
                let vm = VmId(r.u16()?);
                let count = r.u16()? as usize;
                let mut packets = Vec::with_capacity(count);
                for _ in 0..count {
                    packets.push(decode_packet(&mut r)?);
                }
                Body::Packets { vm, packets }
            }
            MsgKind::PatternResult => {
                let vm = VmId(r.u16()?);
                let raw = r.u32()?;
                Body::PatternResult { vm, verdict: (raw != 0).then_some(raw) }
            }
            MsgKind::RuleUpdate => Body::RuleUpdate { signature: r.u32()? },
            MsgKind::PolicingCommand => {
                let vm = VmId(r.u16()?);
                let target_pct = r.f64("target_pct")?;
                let clamp = r.f64("clamp")?;
                Body::Policing { vm, target_pct, clamp }
            }
            MsgKind::BandwidthChangeNotice => {
                let vm = VmId(r.u16()?);
                let budget_pct = r.f64("budget_pct")?;
                Body::BandwidthChange { vm, budget_pct }
            }
        };
        r.finish()?;
        Ok(body)
    }
}
