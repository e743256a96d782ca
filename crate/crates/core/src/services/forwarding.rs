use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crate::controller::{ControlApi, EventHandler, FlowModRequest};
use crate::wire::{
    Action, DatapathId, Event, EventBody, EventKind, Frame, KindSet, Match, OutPort,
    ETH_DISCOVERY,
};

use super::topology::TopologyQuery;

/// How the forwarder programs flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Install {
    /// Packet-out only; flow tables stay empty.
    None,
    Direct,
    Rest,
}

impl fmt::Display for Install {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Install::None => "none",
            Install::Direct => "direct",
            Install::Rest => "rest",
        })
    }
}

impl FromStr for Install {
    type Err = String;

    fn from_str(s: &str) -> Result<Install, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Install::None),
            "direct" => Ok(Install::Direct),
            "rest" => Ok(Install::Rest),
            other => Err(format!("unknown install channel {other:?} (none, direct, rest)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FwdConfig {
    pub install: Install,
    pub hard_timeout_s: u32,
    pub priority: u16,
}

impl Default for FwdConfig {
    fn default() -> Self {
        FwdConfig {
            install: Install::None,
            hard_timeout_s: 10,
            priority: 100,
        }
    }
}

impl FwdConfig {
    pub fn installs(&self) -> bool {
        self.install != Install::None
    }
}

/// What the forwarder did with one packet event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FwdAction {
    /// Discovery traffic, not ours.
    Ignored,
    Flooded { ports: Vec<u16> },
    Forwarded { out_port: u16, installed: Vec<u64> },
    /// The frame would have to leave through its ingress port.
    Dropped,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FwdStats {
    pub packets: u64,
    pub floods: u64,
    pub forwards: u64,
    pub flow_mods: u64,
    pub packet_outs: u64,
    pub errors: u64,
    /// Wall time spent inside installer calls.
    pub install_micros: u64,
}

#[derive(Default)]
struct Counters {
    packets: AtomicU64,
    floods: AtomicU64,
    forwards: AtomicU64,
    flow_mods: AtomicU64,
    packet_outs: AtomicU64,
    errors: AtomicU64,
    install_micros: AtomicU64,
}

/// Reactive forwarding: learns sources, floods unknown destinations along
/// the spanning tree, and forwards known ones along the shortest path.
pub struct Forwarder {
    cfg: FwdConfig,
    topology: Arc<dyn TopologyQuery>,
    control: Arc<dyn ControlApi>,
    installer: Arc<dyn ControlApi>,
    counters: Counters,
}

impl Forwarder {
    /// `control` returns packets; `installer` programs flows and may be a
    /// different channel to the same core.
    pub fn new(
        cfg: FwdConfig,
        topology: Arc<dyn TopologyQuery>,
        control: Arc<dyn ControlApi>,
        installer: Arc<dyn ControlApi>,
    ) -> Forwarder {
        Forwarder {
            cfg,
            topology,
            control,
            installer,
            counters: Counters::default(),
        }
    }

    pub fn config(&self) -> &FwdConfig {
        &self.cfg
    }

    pub fn kinds() -> KindSet {
        KindSet::EMPTY.with(EventKind::Packet)
    }

    pub fn stats(&self) -> FwdStats {
        let c = &self.counters;
        FwdStats {
            packets: c.packets.load(Ordering::Relaxed),
            floods: c.floods.load(Ordering::Relaxed),
            forwards: c.forwards.load(Ordering::Relaxed),
            flow_mods: c.flow_mods.load(Ordering::Relaxed),
            packet_outs: c.packet_outs.load(Ordering::Relaxed),
            errors: c.errors.load(Ordering::Relaxed),
            install_micros: c.install_micros.load(Ordering::Relaxed),
        }
    }

    fn out(&self, dpid: DatapathId, port: u16, frame: Frame) {
        match self.control.packet_out(dpid, OutPort::Port(port), frame) {
            Ok(()) => {
                self.counters.packet_outs.fetch_add(1, Ordering::Relaxed);
            }
            Err(e) => {
                self.counters.errors.fetch_add(1, Ordering::Relaxed);
                log::debug!("packet_out {dpid}:{port} failed: {e}");
            }
        }
    }

    fn flood(&self, dpid: DatapathId, in_port: u16, frame: &Frame) -> FwdAction {
        self.counters.floods.fetch_add(1, Ordering::Relaxed);
        let ports = self.topology.flood_ports(dpid, in_port);
        for &p in &ports {
            self.out(dpid, p, frame.clone());
        }
        FwdAction::Flooded { ports }
    }

    pub fn on_packet(&self, dpid: DatapathId, in_port: u16, frame: &Frame) -> FwdAction {
        if frame.ethertype == ETH_DISCOVERY {
            return FwdAction::Ignored;
        }
        self.counters.packets.fetch_add(1, Ordering::Relaxed);
        self.topology.learn_host(frame.src, (dpid, in_port));
        if frame.dst.is_broadcast() {
            return self.flood(dpid, in_port, frame);
        }
        let path = match self.topology.path_from(dpid, frame.dst) {
            Ok(p) => p,
            Err(_) => return self.flood(dpid, in_port, frame),
        };
        let out_port = path[0].out_port;
        if out_port == in_port && path.len() == 1 {
            return FwdAction::Dropped;
        }
        let mut installed = Vec::new();
        if self.cfg.installs() {
            for hop in &path {
                let req = FlowModRequest::add(
                    hop.dpid,
                    self.cfg.priority,
                    Match::eth_dst(frame.dst),
                    vec![Action::Output(hop.out_port)],
                    self.cfg.hard_timeout_s,
                );
                let started = Instant::now();
                let res = self.installer.flow_mod(req);
                self.counters
                    .install_micros
                    .fetch_add(started.elapsed().as_micros() as u64, Ordering::Relaxed);
                match res {
                    Ok(id) => {
                        self.counters.flow_mods.fetch_add(1, Ordering::Relaxed);
                        installed.push(id);
                    }
                    Err(e) => {
                        self.counters.errors.fetch_add(1, Ordering::Relaxed);
                        log::debug!("flow install on {} failed: {e}", hop.dpid);
                    }
                }
            }
        }
        self.counters.forwards.fetch_add(1, Ordering::Relaxed);
        self.out(dpid, out_port, frame.clone());
        FwdAction::Forwarded {
            out_port,
            installed,
        }
    }
}

impl EventHandler for Forwarder {
    fn kinds(&self) -> KindSet {
        Forwarder::kinds()
    }

    fn on_event(&self, event: &Event) {
        if let EventBody::PacketException {
            dpid,
            in_port,
            frame,
        } = &event.body
        {
            self.on_packet(*dpid, *in_port, frame);
        }
    }
}
