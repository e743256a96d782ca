//! Fixed-layout big-endian encodings for events and southbound messages.
//!
//! Both families share one framing:
//!
//! ```text
//! magic u32 | version u8 | tag u8 | payload_len u32 | payload
//! ```
//!
//! Events use magic `EVNT` and start every payload with `seq u64 | ts_micros u64`.
//! Southbound messages use magic `SBMG` and carry no common prefix.

use byteorder::{BigEndian, ReadBytesExt};

use super::error::{DecodeError, EncodeError};
use super::types::*;

pub const EVENT_MAGIC: u32 = 0x4556_4E54;
pub const SB_MAGIC: u32 = 0x5342_4D47;
pub const WIRE_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;

pub const SB_TAG_HELLO: u8 = 1;
pub const SB_TAG_PACKET_IN: u8 = 2;
pub const SB_TAG_PACKET_OUT: u8 = 3;
pub const SB_TAG_FLOW_MOD: u8 = 4;
pub const SB_TAG_PORT_STATUS: u8 = 5;

const ACTION_OUTPUT: u8 = 1;
const ACTION_FLOOD: u8 = 2;
const ACTION_DROP: u8 = 3;
const ACTION_CONTROLLER: u8 = 4;

const MATCH_IN_PORT: u8 = 1 << 0;
const MATCH_ETH_SRC: u8 = 1 << 1;
const MATCH_ETH_DST: u8 = 1 << 2;
const MATCH_ETHERTYPE: u8 = 1 << 3;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn framed(magic: u32, tag: u8) -> Writer {
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(&magic.to_be_bytes());
        buf.push(WIRE_VERSION);
        buf.push(tag);
        buf.extend_from_slice(&[0; 4]);
        Writer { buf }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn mac(&mut self, m: MacAddr) {
        self.buf.extend_from_slice(&m.0);
    }

    fn bool(&mut self, b: bool) {
        self.buf.push(b as u8);
    }

    fn frame(&mut self, f: &Frame) -> Result<(), EncodeError> {
        if f.payload.len() > MAX_PAYLOAD {
            return Err(EncodeError::PayloadTooLarge(f.payload.len()));
        }
        if !is_known_ethertype(f.ethertype) {
            return Err(EncodeError::UnknownEthertype(f.ethertype));
        }
        self.mac(f.dst);
        self.mac(f.src);
        self.u16(f.ethertype);
        self.u32(f.payload.len() as u32);
        self.buf.extend_from_slice(&f.payload);
        Ok(())
    }

    fn rule(&mut self, r: &FlowRule) -> Result<(), EncodeError> {
        self.u64(r.rule_id);
        self.u16(r.priority);
        let m = &r.matcher;
        let bitmap = m.in_port.map_or(0, |_| MATCH_IN_PORT)
            | m.eth_src.map_or(0, |_| MATCH_ETH_SRC)
            | m.eth_dst.map_or(0, |_| MATCH_ETH_DST)
            | m.ethertype.map_or(0, |_| MATCH_ETHERTYPE);
        self.u8(bitmap);
        if let Some(p) = m.in_port {
            self.u16(p);
        }
        if let Some(mac) = m.eth_src {
            self.mac(mac);
        }
        if let Some(mac) = m.eth_dst {
            self.mac(mac);
        }
        if let Some(t) = m.ethertype {
            self.u16(t);
        }
        let count = u8::try_from(r.actions.len()).map_err(|_| EncodeError::TooMany("actions"))?;
        self.u8(count);
        for action in &r.actions {
            let (kind, port) = match *action {
                Action::Output(p) => {
                    if p == FLOOD_PORT || p == CONTROLLER_PORT {
                        return Err(EncodeError::ReservedPort(p));
                    }
                    (ACTION_OUTPUT, p)
                }
                Action::Flood => (ACTION_FLOOD, FLOOD_PORT),
                Action::Drop => (ACTION_DROP, 0),
                Action::Controller => (ACTION_CONTROLLER, CONTROLLER_PORT),
            };
            self.u8(kind);
            self.u16(port);
        }
        self.u32(r.hard_timeout_s);
        self.u64(r.packet_count);
        self.u64(r.byte_count);
        Ok(())
    }

    fn finish(mut self) -> Vec<u8> {
        let len = (self.buf.len() - HEADER_LEN) as u32;
        self.buf[6..10].copy_from_slice(&len.to_be_bytes());
        self.buf
    }
}

/// Cursor over a payload whose length was already validated against the header.
/// Running off its end means the declared length disagrees with the content.
struct Reader<'a> {
    rest: &'a [u8],
    declared: usize,
}

impl<'a> Reader<'a> {
    fn short(&self) -> DecodeError {
        DecodeError::LengthMismatch {
            declared: self.declared,
            actual: self.declared - self.rest.len(),
        }
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        self.rest.read_u8().map_err(|_| self.short())
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        self.rest.read_u16::<BigEndian>().map_err(|_| self.short())
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        self.rest.read_u32::<BigEndian>().map_err(|_| self.short())
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        self.rest.read_u64::<BigEndian>().map_err(|_| self.short())
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.rest.len() < n {
            return Err(self.short());
        }
        let (head, tail) = self.rest.split_at(n);
        self.rest = tail;
        Ok(head)
    }

    fn mac(&mut self) -> Result<MacAddr, DecodeError> {
        let b = self.bytes(6)?;
        let mut o = [0u8; 6];
        o.copy_from_slice(b);
        Ok(MacAddr(o))
    }

    fn bool(&mut self) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(DecodeError::InvalidField("boolean")),
        }
    }

    fn dpid(&mut self) -> Result<DatapathId, DecodeError> {
        self.u64().map(DatapathId)
    }

    fn frame(&mut self) -> Result<Frame, DecodeError> {
        let dst = self.mac()?;
        let src = self.mac()?;
        let ethertype = self.u16()?;
        if !is_known_ethertype(ethertype) {
            return Err(DecodeError::InvalidField("ethertype"));
        }
        let plen = self.u32()? as usize;
        if plen > MAX_PAYLOAD {
            return Err(DecodeError::InvalidField("frame payload length"));
        }
        let payload = self.bytes(plen)?.to_vec();
        Ok(Frame {
            dst,
            src,
            ethertype,
            payload,
        })
    }

    fn rule(&mut self) -> Result<FlowRule, DecodeError> {
        let rule_id = self.u64()?;
        let priority = self.u16()?;
        let bitmap = self.u8()?;
        if bitmap & !(MATCH_IN_PORT | MATCH_ETH_SRC | MATCH_ETH_DST | MATCH_ETHERTYPE) != 0 {
            return Err(DecodeError::InvalidField("match bitmap"));
        }
        let in_port = if bitmap & MATCH_IN_PORT != 0 {
            Some(self.u16()?)
        } else {
            None
        };
        let eth_src = if bitmap & MATCH_ETH_SRC != 0 {
            Some(self.mac()?)
        } else {
            None
        };
        let eth_dst = if bitmap & MATCH_ETH_DST != 0 {
            Some(self.mac()?)
        } else {
            None
        };
        let ethertype = if bitmap & MATCH_ETHERTYPE != 0 {
            Some(self.u16()?)
        } else {
            None
        };
        let count = self.u8()?;
        let mut actions = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let kind = self.u8()?;
            let port = self.u16()?;
            let action = match (kind, port) {
                (ACTION_OUTPUT, p) if p != FLOOD_PORT && p != CONTROLLER_PORT => Action::Output(p),
                (ACTION_FLOOD, FLOOD_PORT) => Action::Flood,
                (ACTION_DROP, 0) => Action::Drop,
                (ACTION_CONTROLLER, CONTROLLER_PORT) => Action::Controller,
                _ => return Err(DecodeError::InvalidField("action")),
            };
            actions.push(action);
        }
        Ok(FlowRule {
            rule_id,
            priority,
            matcher: Match {
                in_port,
                eth_src,
                eth_dst,
                ethertype,
            },
            actions,
            hard_timeout_s: self.u32()?,
            packet_count: self.u64()?,
            byte_count: self.u64()?,
        })
    }

    fn finish(self) -> Result<(), DecodeError> {
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::LengthMismatch {
                declared: self.declared,
                actual: self.declared + self.rest.len(),
            })
        }
    }
}

/// Validates the framing header and returns `(tag, payload reader)`.
fn open(bytes: &[u8], magic: u32) -> Result<(u8, Reader<'_>), DecodeError> {
    let mut head = bytes;
    let found = head
        .read_u32::<BigEndian>()
        .map_err(|_| DecodeError::Truncated)?;
    if found != magic {
        return Err(DecodeError::BadMagic(found));
    }
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated);
    }
    let version = bytes[4];
    if version != WIRE_VERSION {
        return Err(DecodeError::UnknownVersion(version));
    }
    let tag = bytes[5];
    let declared = u32::from_be_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < declared {
        return Err(DecodeError::Truncated);
    }
    if payload.len() > declared {
        return Err(DecodeError::LengthMismatch {
            declared,
            actual: payload.len(),
        });
    }
    Ok((
        tag,
        Reader {
            rest: payload,
            declared,
        },
    ))
}

pub fn encode_event(e: &Event) -> Result<Vec<u8>, EncodeError> {
    let mut w = Writer::framed(EVENT_MAGIC, e.kind().tag());
    w.u64(e.seq);
    w.u64(e.ts_micros);
    match &e.body {
        EventBody::PacketException {
            dpid,
            in_port,
            frame,
        } => {
            w.u64(dpid.0);
            w.u16(*in_port);
            w.frame(frame)?;
        }
        EventBody::TopologyLink {
            src_dpid,
            src_port,
            dst_dpid,
            dst_port,
            up,
        } => {
            w.u64(src_dpid.0);
            w.u16(*src_port);
            w.u64(dst_dpid.0);
            w.u16(*dst_port);
            w.bool(*up);
        }
        EventBody::TopologyDevice { dpid, up } => {
            w.u64(dpid.0);
            w.bool(*up);
        }
        EventBody::TopologyPort { dpid, port, up } => {
            w.u64(dpid.0);
            w.u16(*port);
            w.bool(*up);
        }
        EventBody::FlowRuleEvent { op, dpid, rule } => {
            w.u8(op.code());
            w.u64(dpid.0);
            w.rule(rule)?;
        }
    }
    Ok(w.finish())
}

pub fn decode_event(bytes: &[u8]) -> Result<Event, DecodeError> {
    let (tag, mut r) = open(bytes, EVENT_MAGIC)?;
    let kind = EventKind::from_tag(tag).ok_or(DecodeError::UnknownTag(tag))?;
    let seq = r.u64()?;
    let ts_micros = r.u64()?;
    let body = match kind {
        EventKind::Packet => EventBody::PacketException {
            dpid: r.dpid()?,
            in_port: r.u16()?,
            frame: r.frame()?,
        },
        EventKind::Link => EventBody::TopologyLink {
            src_dpid: r.dpid()?,
            src_port: r.u16()?,
            dst_dpid: r.dpid()?,
            dst_port: r.u16()?,
            up: r.bool()?,
        },
        EventKind::Device => EventBody::TopologyDevice {
            dpid: r.dpid()?,
            up: r.bool()?,
        },
        EventKind::Port => EventBody::TopologyPort {
            dpid: r.dpid()?,
            port: r.u16()?,
            up: r.bool()?,
        },
        EventKind::FlowRule => {
            let op = FlowRuleOp::from_code(r.u8()?)
                .ok_or(DecodeError::InvalidField("flow rule op"))?;
            EventBody::FlowRuleEvent {
                op,
                dpid: r.dpid()?,
                rule: r.rule()?,
            }
        }
    };
    r.finish()?;
    Ok(Event {
        seq,
        ts_micros,
        body,
    })
}

pub fn encode_sb(m: &SbMessage) -> Result<Vec<u8>, EncodeError> {
    let w = match m {
        SbMessage::Hello { dpid, ports } => {
            let mut w = Writer::framed(SB_MAGIC, SB_TAG_HELLO);
            w.u64(dpid.0);
            let n = u16::try_from(ports.len()).map_err(|_| EncodeError::TooMany("ports"))?;
            w.u16(n);
            for p in ports {
                w.u16(*p);
            }
            w
        }
        SbMessage::PacketIn {
            dpid,
            in_port,
            frame,
        } => {
            let mut w = Writer::framed(SB_MAGIC, SB_TAG_PACKET_IN);
            w.u64(dpid.0);
            w.u16(*in_port);
            w.frame(frame)?;
            w
        }
        SbMessage::PacketOut {
            dpid,
            out_port,
            frame,
        } => {
            if let OutPort::Port(p) = out_port {
                if *p == FLOOD_PORT || *p == CONTROLLER_PORT {
                    return Err(EncodeError::ReservedPort(*p));
                }
            }
            let mut w = Writer::framed(SB_MAGIC, SB_TAG_PACKET_OUT);
            w.u64(dpid.0);
            w.u16(out_port.to_wire());
            w.frame(frame)?;
            w
        }
        SbMessage::FlowMod { dpid, op, rule } => {
            let mut w = Writer::framed(SB_MAGIC, SB_TAG_FLOW_MOD);
            w.u64(dpid.0);
            w.u8(op.code());
            w.rule(rule)?;
            w
        }
        SbMessage::PortStatus { dpid, port, up } => {
            let mut w = Writer::framed(SB_MAGIC, SB_TAG_PORT_STATUS);
            w.u64(dpid.0);
            w.u16(*port);
            w.bool(*up);
            w
        }
    };
    Ok(w.finish())
}

pub fn decode_sb(bytes: &[u8]) -> Result<SbMessage, DecodeError> {
    let (tag, mut r) = open(bytes, SB_MAGIC)?;
    let msg = match tag {
        SB_TAG_HELLO => {
            let dpid = r.dpid()?;
            let n = r.u16()?;
            let ports = (0..n).map(|_| r.u16()).collect::<Result<Vec<_>, _>>()?;
            SbMessage::Hello { dpid, ports }
        }
        SB_TAG_PACKET_IN => SbMessage::PacketIn {
            dpid: r.dpid()?,
            in_port: r.u16()?,
            frame: r.frame()?,
        },
        SB_TAG_PACKET_OUT => {
            let dpid = r.dpid()?;
            let out_port = match r.u16()? {
                FLOOD_PORT => OutPort::Flood,
                CONTROLLER_PORT => return Err(DecodeError::InvalidField("packet-out port")),
                p => OutPort::Port(p),
            };
            SbMessage::PacketOut {
                dpid,
                out_port,
                frame: r.frame()?,
            }
        }
        SB_TAG_FLOW_MOD => {
            let dpid = r.dpid()?;
            let op = FlowOp::from_code(r.u8()?).ok_or(DecodeError::InvalidField("flow mod op"))?;
            SbMessage::FlowMod {
                dpid,
                op,
                rule: r.rule()?,
            }
        }
        SB_TAG_PORT_STATUS => SbMessage::PortStatus {
            dpid: r.dpid()?,
            port: r.u16()?,
            up: r.bool()?,
        },
        other => return Err(DecodeError::UnknownTag(other)),
    };
    r.finish()?;
    Ok(msg)
}
