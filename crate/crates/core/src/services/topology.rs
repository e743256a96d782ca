use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use byteorder::{BigEndian, ReadBytesExt};

use crate::controller::{ControlApi, CoreError, EventHandler};
use crate::wire::{
    DatapathId, Event, EventBody, EventKind, Frame, KindSet, MacAddr, OutPort, ETH_ARP,
    ETH_DISCOVERY,
};

use super::graph::{Hop, PathError, PortKey, TopologyGraph};

/// Body of a discovery probe: origin dpid u64 | origin port u16 | round u32.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscoveryPayload {
    pub dpid: DatapathId,
    pub port: u16,
    pub round: u32,
}

impl DiscoveryPayload {
    pub const LEN: usize = 14;

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::LEN);
        out.extend_from_slice(&self.dpid.0.to_be_bytes());
        out.extend_from_slice(&self.port.to_be_bytes());
        out.extend_from_slice(&self.round.to_be_bytes());
        out
    }

    pub fn decode(mut b: &[u8]) -> Option<DiscoveryPayload> {
        if b.len() != Self::LEN {
            return None;
        }
        Some(DiscoveryPayload {
            dpid: DatapathId(b.read_u64::<BigEndian>().ok()?),
            port: b.read_u16::<BigEndian>().ok()?,
            round: b.read_u32::<BigEndian>().ok()?,
        })
    }

    pub fn frame(&self) -> Frame {
        Frame::new(MacAddr::BROADCAST, MacAddr::ZERO, ETH_DISCOVERY, self.encode())
    }
}

/// Path and location queries the forwarding app makes against the
/// topology service.
pub trait TopologyQuery: Send + Sync {
    /// Reports where a frame from `mac` entered the network.
    fn learn_host(&self, mac: MacAddr, at: PortKey);
    fn host_location(&self, mac: MacAddr) -> Option<PortKey>;
    fn path_from(&self, from: DatapathId, dst: MacAddr) -> Result<Vec<Hop>, PathError>;
    fn flood_ports(&self, dpid: DatapathId, ingress: u16) -> Vec<u16>;
}

#[derive(Debug, Clone)]
pub struct TopologyConfig {
    /// Rounds a link may go unseen before it is dropped.
    pub stale_rounds: u32,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig { stale_rounds: 3 }
    }
}

/// Builds the network map from discovery probes, address-resolution
/// broadcasts and topology events.
pub struct TopologyService {
    cfg: TopologyConfig,
    control: Arc<dyn ControlApi>,
    graph: RwLock<TopologyGraph>,
    round: AtomicU32,
    malformed: AtomicU64,
    probes_seen: AtomicU64,
}

impl TopologyService {
    pub fn new(control: Arc<dyn ControlApi>, cfg: TopologyConfig) -> TopologyService {
        TopologyService {
            cfg,
            control,
            graph: RwLock::new(TopologyGraph::new()),
            round: AtomicU32::new(0),
            malformed: AtomicU64::new(0),
            probes_seen: AtomicU64::new(0),
        }
    }

    pub fn kinds() -> KindSet {
        [EventKind::Packet, EventKind::Link, EventKind::Device, EventKind::Port]
            .into_iter()
            .collect()
    }

    /// Copy of the current map.
    pub fn snapshot(&self) -> TopologyGraph {
        self.graph.read().unwrap().clone()
    }

    pub fn round(&self) -> u32 {
        self.round.load(Ordering::SeqCst)
    }

    /// Discovery packets that could not be parsed.
    pub fn malformed(&self) -> u64 {
        self.malformed.load(Ordering::Relaxed)
    }

    pub fn probes_seen(&self) -> u64 {
        self.probes_seen.load(Ordering::Relaxed)
    }

    /// Pulls switches and ports straight from the core, for services that
    /// start after the switches attached.
    pub fn sync(&self) -> Result<(), CoreError> {
        let dps = self.control.datapaths()?;
        let mut g = self.graph.write().unwrap();
        for dp in dps {
            g.add_switch(dp.dpid);
            for (port, up) in dp.ports {
                g.set_port(dp.dpid, port, up);
            }
        }
        Ok(())
    }

    /// Sends a probe out of every up port of every switch and ages out links
    /// not seen for too long. Returns the number of probes sent.
    pub fn discovery_round(&self) -> Result<usize, CoreError> {
        let dps = self.control.datapaths()?;
        let round = self.round.fetch_add(1, Ordering::SeqCst) + 1;
        let stale = {
            let mut g = self.graph.write().unwrap();
            for dp in &dps {
                g.add_switch(dp.dpid);
                for &(port, up) in &dp.ports {
                    g.set_port(dp.dpid, port, up);
                }
            }
            let stale = g.stale_links(round, self.cfg.stale_rounds);
            for &(a, b) in &stale {
                g.remove_link(a, b);
            }
            stale
        };
        for (a, b) in stale {
            log::debug!("link {}:{} -> {}:{} went stale", a.0, a.1, b.0, b.1);
            let _ = self.control.report_link(a, b, false);
        }
        let mut sent = 0;
        for dp in dps {
            for (port, up) in dp.ports {
                if !up {
                    continue;
                }
                let probe = DiscoveryPayload {
                    dpid: dp.dpid,
                    port,
                    round,
                };
                match self.control.packet_out(dp.dpid, OutPort::Port(port), probe.frame()) {
                    Ok(()) => sent += 1,
                    Err(CoreError::UnknownDatapath(_)) | Err(CoreError::Disconnected(_)) => break,
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(sent)
    }

    fn report_removed(&self, removed: Vec<(PortKey, PortKey)>) {
        for (a, b) in removed {
            let _ = self.control.report_link(a, b, false);
        }
    }

    pub fn handle(&self, ev: &Event) {
        match &ev.body {
            EventBody::PacketException {
                dpid,
                in_port,
                frame,
            } => match frame.ethertype {
                ETH_DISCOVERY => {
                    self.probes_seen.fetch_add(1, Ordering::Relaxed);
                    let Some(probe) = DiscoveryPayload::decode(&frame.payload) else {
                        self.malformed.fetch_add(1, Ordering::Relaxed);
                        return;
                    };
                    let src = (probe.dpid, probe.port);
                    let dst = (*dpid, *in_port);
                    let added = self.graph.write().unwrap().add_link(src, dst, probe.round);
                    if added {
                        let _ = self.control.report_link(src, dst, true);
                    }
                }
                ETH_ARP if frame.dst.is_broadcast() => {
                    self.graph
                        .write()
                        .unwrap()
                        .learn_host(frame.src, (*dpid, *in_port));
                }
                _ => {}
            },
            EventBody::TopologyLink {
                src_dpid,
                src_port,
                dst_dpid,
                dst_port,
                up,
            } => {
                let (a, b) = ((*src_dpid, *src_port), (*dst_dpid, *dst_port));
                let mut g = self.graph.write().unwrap();
                if *up {
                    let round = self.round();
                    g.add_link(a, b, round);
                } else {
                    g.remove_link(a, b);
                }
            }
            EventBody::TopologyDevice { dpid, up } => {
                let removed = {
                    let mut g = self.graph.write().unwrap();
                    if *up {
                        g.add_switch(*dpid);
                        Vec::new()
                    } else {
                        g.remove_switch(*dpid)
                    }
                };
                self.report_removed(removed);
            }
            EventBody::TopologyPort { dpid, port, up } => {
                let removed = {
                    let mut g = self.graph.write().unwrap();
                    g.add_switch(*dpid);
                    g.set_port(*dpid, *port, *up)
                };
                self.report_removed(removed);
            }
            EventBody::FlowRuleEvent { .. } => {}
        }
    }
}

impl EventHandler for TopologyService {
    fn kinds(&self) -> KindSet {
        TopologyService::kinds()
    }

    fn on_event(&self, event: &Event) {
        self.handle(event);
    }
}

impl TopologyQuery for TopologyService {
    fn learn_host(&self, mac: MacAddr, at: PortKey) {
        if self.graph.read().unwrap().host(mac) == Some(at) {
            return;
        }
        self.graph.write().unwrap().learn_host(mac, at);
    }

    fn host_location(&self, mac: MacAddr) -> Option<PortKey> {
        self.graph.read().unwrap().host(mac)
    }

    fn path_from(&self, from: DatapathId, dst: MacAddr) -> Result<Vec<Hop>, PathError> {
        self.graph.read().unwrap().path_from(from, dst)
    }

    fn flood_ports(&self, dpid: DatapathId, ingress: u16) -> Vec<u16> {
        self.graph.read().unwrap().flood_ports(dpid, Some(ingress))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_payload_layout() {
        let p = DiscoveryPayload {
            dpid: DatapathId(0x0102),
            port: 3,
            round: 7,
        };
        let bytes = p.encode();
        assert_eq!(bytes.len(), 14);
        assert_eq!(&bytes[..10], &[0, 0, 0, 0, 0, 0, 1, 2, 0, 3]);
        assert_eq!(DiscoveryPayload::decode(&bytes), Some(p));
        assert_eq!(DiscoveryPayload::decode(&bytes[..13]), None);
        let f = p.frame();
        assert!(f.dst.is_broadcast());
        assert_eq!(f.ethertype, ETH_DISCOVERY);
    }
}
