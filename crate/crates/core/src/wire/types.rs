use std::fmt;
use std::str::FromStr;

/// Ethertype used by link-discovery probes.
pub const ETH_DISCOVERY: u16 = 0x88CC;
/// Ethertype used by the address-resolution analog hosts broadcast before sending.
pub const ETH_ARP: u16 = 0x0806;
/// Ethertype carried by ordinary host traffic (pings, stream segments).
pub const ETH_DATA: u16 = 0x0800;

/// Largest frame payload accepted anywhere in the system.
pub const MAX_PAYLOAD: usize = 1500;
/// Bytes of Ethernet header counted toward a frame's length (dst + src + ethertype).
pub const ETH_HEADER_LEN: usize = 14;

/// Wire value of the FLOOD pseudo-port.
pub const FLOOD_PORT: u16 = 0xFFFF;
/// Wire value of the CONTROLLER pseudo-port.
pub const CONTROLLER_PORT: u16 = 0xFFFE;

pub fn is_known_ethertype(ethertype: u16) -> bool {
    matches!(ethertype, ETH_DISCOVERY | ETH_ARP | ETH_DATA)
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub const BROADCAST: MacAddr = MacAddr([0xFF; 6]);
    pub const ZERO: MacAddr = MacAddr([0; 6]);

    /// Deterministic address for host `index`: 02:00:00:00:00:NN for indices below 256,
    /// with higher indices spilling into the preceding octets.
    pub fn host(index: u32) -> MacAddr {
        let b = index.to_be_bytes();
        MacAddr([0x02, 0x00, b[0], b[1], b[2], b[3]])
    }

    pub fn is_broadcast(&self) -> bool {
        *self == Self::BROADCAST
    }

    pub fn octets(&self) -> [u8; 6] {
        self.0
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid MAC address {0:?}")]
pub struct ParseMacError(pub String);

impl FromStr for MacAddr {
    type Err = ParseMacError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let mut parts = s.split(':');
        for slot in out.iter_mut() {
            let part = parts.next().ok_or_else(|| ParseMacError(s.to_string()))?;
            if part.len() != 2 {
                return Err(ParseMacError(s.to_string()));
            }
            *slot = u8::from_str_radix(part, 16).map_err(|_| ParseMacError(s.to_string()))?;
        }
        if parts.next().is_some() {
            return Err(ParseMacError(s.to_string()));
        }
        Ok(MacAddr(out))
    }
}

/// Switch identifier, unique per switch for the lifetime of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct DatapathId(pub u64);

impl fmt::Display for DatapathId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Simplified Ethernet frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub dst: MacAddr,
    pub src: MacAddr,
    pub ethertype: u16,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(dst: MacAddr, src: MacAddr, ethertype: u16, payload: Vec<u8>) -> Frame {
        Frame {
            dst,
            src,
            ethertype,
            payload,
        }
    }

    /// Length counted by flow-rule byte counters.
    pub fn wire_len(&self) -> usize {
        ETH_HEADER_LEN + self.payload.len()
    }
}

/// Flow-table match. `None` fields are wildcards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Match {
    pub in_port: Option<u16>,
    pub eth_src: Option<MacAddr>,
    pub eth_dst: Option<MacAddr>,
    pub ethertype: Option<u16>,
}

impl Match {
    pub fn any() -> Match {
        Match::default()
    }

    pub fn eth_dst(mac: MacAddr) -> Match {
        Match {
            eth_dst: Some(mac),
            ..Match::default()
        }
    }

    pub fn matches(&self, in_port: u16, frame: &Frame) -> bool {
        self.in_port.is_none_or(|p| p == in_port)
            && self.eth_src.is_none_or(|m| m == frame.src)
            && self.eth_dst.is_none_or(|m| m == frame.dst)
            && self.ethertype.is_none_or(|t| t == frame.ethertype)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Output(u16),
    Flood,
    Drop,
    Controller,
}

/// Destination of a packet-out: one physical port or every up port except ingress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutPort {
    Port(u16),
    Flood,
}

impl OutPort {
    pub fn to_wire(self) -> u16 {
        match self {
            OutPort::Port(p) => p,
            OutPort::Flood => FLOOD_PORT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FlowRule {
    pub rule_id: u64,
    pub priority: u16,
    pub matcher: Match,
    pub actions: Vec<Action>,
    /// Seconds until unconditional removal; 0 means permanent.
    pub hard_timeout_s: u32,
    pub packet_count: u64,
    pub byte_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowOp {
    Add,
    Remove,
    Modify,
}

impl FlowOp {
    pub fn code(self) -> u8 {
        match self {
            FlowOp::Add => 1,
            FlowOp::Remove => 2,
            FlowOp::Modify => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<FlowOp> {
        match code {
            1 => Some(FlowOp::Add),
            2 => Some(FlowOp::Remove),
            3 => Some(FlowOp::Modify),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowRuleOp {
    Added,
    Removed,
    Updated,
}

impl FlowRuleOp {
    pub fn code(self) -> u8 {
        match self {
            FlowRuleOp::Added => 1,
            FlowRuleOp::Removed => 2,
            FlowRuleOp::Updated => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<FlowRuleOp> {
        match code {
            1 => Some(FlowRuleOp::Added),
            2 => Some(FlowRuleOp::Removed),
            3 => Some(FlowRuleOp::Updated),
            _ => None,
        }
    }
}

/// Controller <-> switch messages.
///
/// A `FlowMod` with op `Remove` travelling switch-to-core is the flow-removed
/// notification sent when a rule's hard timeout fires.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SbMessage {
    Hello {
        dpid: DatapathId,
        ports: Vec<u16>,
    },
    PacketIn {
        dpid: DatapathId,
        in_port: u16,
        frame: Frame,
    },
    PacketOut {
        dpid: DatapathId,
        out_port: OutPort,
        frame: Frame,
    },
    FlowMod {
        dpid: DatapathId,
        op: FlowOp,
        rule: FlowRule,
    },
    PortStatus {
        dpid: DatapathId,
        port: u16,
        up: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Packet,
    Link,
    Device,
    Port,
    FlowRule,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::Packet,
        EventKind::Link,
        EventKind::Device,
        EventKind::Port,
        EventKind::FlowRule,
    ];

    /// Wire tag of the event variant.
    pub fn tag(self) -> u8 {
        match self {
            EventKind::Packet => 1,
            EventKind::Link => 2,
            EventKind::Device => 3,
            EventKind::Port => 4,
            EventKind::FlowRule => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<EventKind> {
        EventKind::ALL.into_iter().find(|k| k.tag() == tag)
    }

    /// Bit in a subscription kind bitmap.
    pub fn bit(self) -> u8 {
        1 << (self.tag() - 1)
    }

    /// Broker topic carrying this kind.
    pub fn topic(self) -> &'static str {
        match self {
            EventKind::Packet => "events.packet",
            EventKind::Link => "events.link",
            EventKind::Device => "events.device",
            EventKind::Port => "events.port",
            EventKind::FlowRule => "events.flowrule",
        }
    }

    pub fn from_topic(topic: &str) -> Option<EventKind> {
        EventKind::ALL.into_iter().find(|k| k.topic() == topic)
    }
}

/// A set of event kinds, stored as the one-byte bitmap used on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct KindSet(u8);

impl KindSet {
    pub const EMPTY: KindSet = KindSet(0);

    pub fn all() -> KindSet {
        EventKind::ALL.into_iter().collect()
    }

    pub fn from_bits(bits: u8) -> KindSet {
        KindSet(bits & KindSet::all_bits())
    }

    fn all_bits() -> u8 {
        EventKind::ALL.iter().fold(0, |acc, k| acc | k.bit())
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, kind: EventKind) -> bool {
        self.0 & kind.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn with(self, kind: EventKind) -> KindSet {
        KindSet(self.0 | kind.bit())
    }

    pub fn iter(self) -> impl Iterator<Item = EventKind> {
        EventKind::ALL.into_iter().filter(move |k| self.contains(*k))
    }
}

impl FromIterator<EventKind> for KindSet {
    fn from_iter<I: IntoIterator<Item = EventKind>>(iter: I) -> Self {
        iter.into_iter().fold(KindSet::EMPTY, KindSet::with)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventBody {
    PacketException {
        dpid: DatapathId,
        in_port: u16,
        frame: Frame,
    },
    TopologyLink {
        src_dpid: DatapathId,
        src_port: u16,
        dst_dpid: DatapathId,
        dst_port: u16,
        up: bool,
    },
    TopologyDevice {
        dpid: DatapathId,
        up: bool,
    },
    TopologyPort {
        dpid: DatapathId,
        port: u16,
        up: bool,
    },
    FlowRuleEvent {
        op: FlowRuleOp,
        dpid: DatapathId,
        rule: FlowRule,
    },
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::PacketException { .. } => EventKind::Packet,
            EventBody::TopologyLink { .. } => EventKind::Link,
            EventBody::TopologyDevice { .. } => EventKind::Device,
            EventBody::TopologyPort { .. } => EventKind::Port,
            EventBody::FlowRuleEvent { .. } => EventKind::FlowRule,
        }
    }
}

/// A network event as emitted by the controller core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    /// Global emission order, assigned by the core.
    pub seq: u64,
    /// Microseconds since the core started.
    pub ts_micros: u64,
    pub body: EventBody,
}

impl Event {
    pub fn new(seq: u64, ts_micros: u64, body: EventBody) -> Event {
        Event {
            seq,
            ts_micros,
            body,
        }
    }

    pub fn kind(&self) -> EventKind {
        self.body.kind()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn host_macs_are_deterministic() {
        assert_eq!(MacAddr::host(7).to_string(), "02:00:00:00:00:07");
        assert_eq!(MacAddr::host(0x1ff).to_string(), "02:00:00:00:01:ff");
        assert!(MacAddr::BROADCAST.is_broadcast());
        assert_eq!(MacAddr::BROADCAST.to_string(), "ff:ff:ff:ff:ff:ff");
    }

    #[test]
    fn mac_parse() {
        let m: MacAddr = "02:00:00:00:00:2a".parse().unwrap();
        assert_eq!(m, MacAddr::host(42));
        assert!("02:00:00:00:00".parse::<MacAddr>().is_err());
        assert!("02:00:00:00:00:00:00".parse::<MacAddr>().is_err());
        assert!("zz:00:00:00:00:00".parse::<MacAddr>().is_err());
    }

    #[test]
    fn wildcard_match_matches_everything() {
        let f = Frame::new(MacAddr::host(1), MacAddr::host(2), ETH_DATA, vec![1, 2, 3]);
        assert!(Match::any().matches(9, &f));
        assert!(Match::eth_dst(MacAddr::host(1)).matches(1, &f));
        assert!(!Match::eth_dst(MacAddr::host(2)).matches(1, &f));
        let m = Match {
            in_port: Some(3),
            ..Match::any()
        };
        assert!(!m.matches(2, &f));
    }

    #[test]
    fn kind_bitmap() {
        let set: KindSet = [EventKind::Packet, EventKind::Port].into_iter().collect();
        assert_eq!(set.bits(), 0b1001);
        assert!(set.contains(EventKind::Port));
        assert!(!set.contains(EventKind::Link));
        assert_eq!(KindSet::all().bits(), 0b1_1111);
        assert_eq!(KindSet::from_bits(0xFF), KindSet::all());
        for kind in EventKind::ALL {
            assert_eq!(EventKind::from_tag(kind.tag()), Some(kind));
            assert_eq!(EventKind::from_topic(kind.topic()), Some(kind));
        }
    }
}
