//! Control-plane message codec.
//!
//! Every message between the management server and its subsystems is framed
//! by a fixed 10-byte header followed by an opaque payload. All multi-byte
//! fields are big-endian:
//!
//! ```text
//! byte 0        source (3 bits, msb) | kind (5 bits)
//! bytes 1..3    sequence number, u16
//! bytes 3..7    authentication key, u32
//! byte 7        next protocol (IANA layer-4 number)
//! bytes 8..10   payload length, u16
//! bytes 10..    payload
//! ```
//!
//! The 3-bit source field caps the deployment at eight device roles; five are
//! assigned. The 5-bit kind field carries the twelve message types below,
//! leaving 12..=31 reserved and rejected on decode.

pub const HEADER_LEN: usize = 10;
pub const MAX_PAYLOAD: usize = u16::MAX as usize;

/// Layer-4 protocol number carried in every control message (IANA: TCP).
pub const PROTO_TCP: u8 = 6;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum WireError {
    #[error("payload too long: {0} bytes, max {MAX_PAYLOAD}")]
    FieldOverflow(usize),
    #[error("truncated frame: need {need} bytes, got {got}")]
    Truncated { need: usize, got: usize },
    #[error("invalid source code {0:#05b}")]
    InvalidSource(u8),
    #[error("invalid message kind {0}")]
    InvalidKind(u8),
}

/// Device role a message originates from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum SourceId {
    ControlCenter = 0b000,
    Firewall = 0b001,
    Agent = 0b010,
    MiningCenter = 0b011,
    Idps = 0b100,
}

impl SourceId {
    pub const ALL: [SourceId; 5] = [
        SourceId::ControlCenter,
        SourceId::Firewall,
        SourceId::Agent,
        SourceId::MiningCenter,
        SourceId::Idps,
    ];

    pub fn from_code(code: u8) -> Result<Self, WireError> {
        match code {
            0b000 => Ok(SourceId::ControlCenter),
            0b001 => Ok(SourceId::Firewall),
            0b010 => Ok(SourceId::Agent),
            0b011 => Ok(SourceId::MiningCenter),
            0b100 => Ok(SourceId::Idps),
            other => Err(WireError::InvalidSource(other)),
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Message type, 5-bit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum MsgKind {
    Alloha = 0,
    Alert1 = 1,
    Alert2 = 2,
    Alert3 = 3,
    Ack = 4,
    HighUsersReport = 5,
    TrafficBuffer = 6,
    PatternRequest = 7,
    PatternResult = 8,
    RuleUpdate = 9,
    PolicingCommand = 10,
    BandwidthChangeNotice = 11,
}

impl MsgKind {
    pub const ALL: [MsgKind; 12] = [
        MsgKind::Alloha,
        MsgKind::Alert1,
        MsgKind::Alert2,
        MsgKind::Alert3,
        MsgKind::Ack,
        MsgKind::HighUsersReport,
        MsgKind::TrafficBuffer,
        MsgKind::PatternRequest,
        MsgKind::PatternResult,
        MsgKind::RuleUpdate,
        MsgKind::PolicingCommand,
        MsgKind::BandwidthChangeNotice,
    ];

    pub fn from_code(code: u8) -> Result<Self, WireError> {
        if (code as usize) < Self::ALL.len() {
            Ok(Self::ALL[code as usize])
        } else {
            Err(WireError::InvalidKind(code))
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgKind::Alloha => "alloha",
            MsgKind::Alert1 => "alert1",
            MsgKind::Alert2 => "alert2",
            MsgKind::Alert3 => "alert3",
            MsgKind::Ack => "ack",
            MsgKind::HighUsersReport => "high_users_report",
            MsgKind::TrafficBuffer => "traffic_buffer",
            MsgKind::PatternRequest => "pattern_request",
            MsgKind::PatternResult => "pattern_result",
            MsgKind::RuleUpdate => "rule_update",
            MsgKind::PolicingCommand => "policing_command",
            MsgKind::BandwidthChangeNotice => "bandwidth_change_notice",
        }
    }
}

/// A framed control-plane message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlMessage {
    pub source: SourceId,
    pub kind: MsgKind,
    pub seq: u16,
    pub auth_key: u32,
    pub next_proto: u8,
    pub payload: Vec<u8>,
}

/// Serializes header + payload. Fails only if the payload exceeds the
/// 16-bit length field.
pub fn encode_header(msg: &ControlMessage) -> Result<Vec<u8>, WireError> {
    if msg.payload.len() > MAX_PAYLOAD {
        return Err(WireError::FieldOverflow(msg.payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + msg.payload.len());
    out.push(((msg.source as u8) << 5) | (msg.kind as u8));
    out.extend_from_slice(&msg.seq.to_be_bytes());
    out.extend_from_slice(&msg.auth_key.to_be_bytes());
    out.push(msg.next_proto);
    out.extend_from_slice(&(msg.payload.len() as u16).to_be_bytes());
    out.extend_from_slice(&msg.payload);
    Ok(out)
}

/// Parses one message from the front of `data`, returning it along with the
/// unconsumed remainder. Exactly `HEADER_LEN + payload length` bytes are
/// consumed; trailing bytes are not an error.
pub fn decode_header(data: &[u8]) -> Result<(ControlMessage, &[u8]), WireError> {
    if data.len() < HEADER_LEN {
        return Err(WireError::Truncated { need: HEADER_LEN, got: data.len() });
    }
    let source = SourceId::from_code(data[0] >> 5)?;
    let kind = MsgKind::from_code(data[0] & 0b0001_1111)?;
    let seq = u16::from_be_bytes([data[1], data[2]]);
    let auth_key = u32::from_be_bytes([data[3], data[4], data[5], data[6]]);
    let next_proto = data[7];
    let payload_len = u16::from_be_bytes([data[8], data[9]]) as usize;
    let total = HEADER_LEN + payload_len;
    if data.len() < total {
        return Err(WireError::Truncated { need: total, got: data.len() });
    }
    let msg = ControlMessage {
        source,
        kind,
        seq,
        auth_key,
        next_proto,
        payload: data[HEADER_LEN..total].to_vec(),
    };
    Ok((msg, &data[total..]))
}

/// Shared-key check: the receiver compares the key field against the key it
/// holds for the claimed sender.
pub fn authenticate(msg: &ControlMessage, expected_key: u32) -> bool {
    msg.auth_key == expected_key
}
