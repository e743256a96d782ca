//! Payload layouts of host-generated traffic.
//!
//! Data frames (ethertype 0x0800) start with a type byte:
//!
//! ```text
//! 1 ping request | session u32 | seq u32 | sent_micros u64 | zero padding
//! 2 ping reply   | (request payload echoed back)
//! 3 segment      | conn u32 | seq u32 | zero padding up to the segment size
//! 4 ack          | conn u32 | seq u32
//! ```
//!
//! Address-resolution frames (ethertype 0x0806) carry `op u8 | target mac`,
//! op 1 = request (broadcast), 2 = reply (unicast).

use byteorder::{BigEndian, ReadBytesExt};

use crate::wire::MacAddr;

pub const DEFAULT_PING_PAYLOAD: usize = 56;
pub const DEFAULT_SEGMENT_BYTES: usize = 1464;
pub const PING_HEADER: usize = 17;
pub const SEGMENT_HEADER: usize = 9;

const PING_REQUEST: u8 = 1;
const PING_REPLY: u8 = 2;
const SEGMENT: u8 = 3;
const ACK: u8 = 4;

const ARP_REQUEST: u8 = 1;
const ARP_REPLY: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataPayload {
    PingRequest { session: u32, seq: u32, sent_micros: u64 },
    PingReply { session: u32, seq: u32, sent_micros: u64 },
    Segment { conn: u32, seq: u32 },
    Ack { conn: u32, seq: u32 },
}

impl DataPayload {
    /// Serializes, zero-padding to `size` bytes when the header is shorter.
    pub fn encode(&self, size: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(size.max(PING_HEADER));
        match *self {
            DataPayload::PingRequest {
                session,
                seq,
                sent_micros,
            }
            | DataPayload::PingReply {
                session,
                seq,
                sent_micros,
            } => {
                out.push(if matches!(self, DataPayload::PingRequest { .. }) {
                    PING_REQUEST
                } else {
                    PING_REPLY
                });
                out.extend_from_slice(&session.to_be_bytes());
                out.extend_from_slice(&seq.to_be_bytes());
                out.extend_from_slice(&sent_micros.to_be_bytes());
            }
            DataPayload::Segment { conn, seq } | DataPayload::Ack { conn, seq } => {
                out.push(if matches!(self, DataPayload::Segment { .. }) {
                    SEGMENT
                } else {
                    ACK
                });
                out.extend_from_slice(&conn.to_be_bytes());
                out.extend_from_slice(&seq.to_be_bytes());
            }
        }
        if out.len() < size {
            out.resize(size, 0);
        }
        out
    }

    pub fn decode(mut bytes: &[u8]) -> Option<DataPayload> {
        let kind = bytes.read_u8().ok()?;
        match kind {
            PING_REQUEST | PING_REPLY => {
                let session = bytes.read_u32::<BigEndian>().ok()?;
                let seq = bytes.read_u32::<BigEndian>().ok()?;
                let sent_micros = bytes.read_u64::<BigEndian>().ok()?;
                Some(if kind == PING_REQUEST {
                    DataPayload::PingRequest {
                        session,
                        seq,
                        sent_micros,
                    }
                } else {
                    DataPayload::PingReply {
                        session,
                        seq,
                        sent_micros,
                    }
                })
            }
            SEGMENT | ACK => {
                let conn = bytes.read_u32::<BigEndian>().ok()?;
                let seq = bytes.read_u32::<BigEndian>().ok()?;
                Some(if kind == SEGMENT {
                    DataPayload::Segment { conn, seq }
                } else {
                    DataPayload::Ack { conn, seq }
                })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArpPayload {
    Request { target: MacAddr },
    Reply { target: MacAddr },
}

impl ArpPayload {
    pub fn encode(&self) -> Vec<u8> {
        let (op, target) = match *self {
            ArpPayload::Request { target } => (ARP_REQUEST, target),
            ArpPayload::Reply { target } => (ARP_REPLY, target),
        };
        let mut out = vec![op];
        out.extend_from_slice(&target.0);
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<ArpPayload> {
        if bytes.len() != 7 {
            return None;
        }
        let mut mac = [0u8; 6];
        mac.copy_from_slice(&bytes[1..]);
        let target = MacAddr(mac);
        match bytes[0] {
            ARP_REQUEST => Some(ArpPayload::Request { target }),
            ARP_REPLY => Some(ArpPayload::Reply { target }),
            _ => None,
        }
    }
}
