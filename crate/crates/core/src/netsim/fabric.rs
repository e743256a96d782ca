//! The running data plane: one thread per switch and per host, wired by channels.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use crate::clock::{Clock, Micros};
use crate::controller::{ChannelClosed, SouthboundTx, SwitchChannel};
use crate::wire::{decode_sb, encode_sb, DatapathId, FlowOp, FlowRule, Frame, MacAddr, OutPort, SbMessage};

use super::host::{HostActor, HostHandle, HostInput};
use super::switch::{switch_rx, expire_flows, Effect, FlowEntry, SwitchState};
use super::topology::{NetworkSpec, PortRef};
use super::NetsimError;

pub(crate) enum SwitchInput {
    Frame {
        in_port: u16,
        frame: Frame,
        deliver_at: Micros,
    },
    Sb(Vec<u8>),
    DumpFlows(Sender<Vec<FlowEntry>>),
    SetPort {
        port: u16,
        up: bool,
    },
    Shutdown,
}

#[derive(Clone)]
enum Peer {
    Switch { tx: Sender<SwitchInput>, port: u16 },
    Host { tx: Sender<HostInput> },
}

#[derive(Debug, Clone)]
pub struct FabricConfig {
    /// One-way latency added on every link, host links included.
    pub link_latency: Duration,
    /// Frames retained per host inbox.
    pub inbox_cap: usize,
}

impl Default for FabricConfig {
    fn default() -> Self {
        FabricConfig {
            link_latency: Duration::ZERO,
            inbox_cap: 1024,
        }
    }
}

/// Core-facing control handle of one simulated switch.
struct SwitchControl {
    tx: Sender<SwitchInput>,
}

impl SouthboundTx for SwitchControl {
    fn send(&self, msg: Vec<u8>) -> Result<(), ChannelClosed> {
        self.tx.send(SwitchInput::Sb(msg)).map_err(|_| ChannelClosed)
    }

    fn dump_flows(&self) -> Result<Vec<FlowRule>, ChannelClosed> {
        let (tx, rx) = unbounded();
        self.tx
            .send(SwitchInput::DumpFlows(tx))
            .map_err(|_| ChannelClosed)?;
        rx.recv()
            .map(|entries| entries.into_iter().map(|e| e.rule).collect())
            .map_err(|_| ChannelClosed)
    }
}

pub struct Fabric {
    spec: NetworkSpec,
    clock: Clock,
    switches: BTreeMap<DatapathId, Sender<SwitchInput>>,
    hosts: BTreeMap<u32, HostHandle>,
    channels: Mutex<Vec<SwitchChannel>>,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

impl Fabric {
    /// Spawns every switch and host actor. Switches announce themselves with a
    /// Hello on their southbound channel, which the core picks up via
    /// [`Fabric::take_channels`].
    pub fn start(spec: NetworkSpec, config: FabricConfig) -> Result<Fabric, NetsimError> {
        spec.validate()?;
        let clock = Clock::new();
        let latency = config.link_latency.as_micros() as Micros;

        let mut inputs = BTreeMap::new();
        for sw in &spec.switches {
            inputs.insert(sw.dpid, unbounded::<SwitchInput>());
        }
        let mut peers: BTreeMap<DatapathId, BTreeMap<u16, Peer>> = BTreeMap::new();
        for (a, b) in &spec.links {
            peers.entry(a.dpid).or_default().insert(
                a.port,
                Peer::Switch {
                    tx: inputs[&b.dpid].0.clone(),
                    port: b.port,
                },
            );
            peers.entry(b.dpid).or_default().insert(
                b.port,
                Peer::Switch {
                    tx: inputs[&a.dpid].0.clone(),
                    port: a.port,
                },
            );
        }

        let mut threads = Vec::new();
        let mut hosts = BTreeMap::new();
        for h in &spec.hosts {
            let uplink = inputs[&h.attachment.dpid].0.clone();
            let (actor, handle, rx) = HostActor::new(
                h.host_id,
                h.mac,
                h.attachment,
                clock,
                latency,
                uplink,
                config.inbox_cap,
            );
            peers
                .entry(h.attachment.dpid)
                .or_default()
                .insert(h.attachment.port, Peer::Host { tx: handle.tx() });
            threads.push(
                std::thread::Builder::new()
                    .name(format!("host-{}", h.host_id))
                    .spawn(move || actor.run(rx))
                    .expect("spawn host thread"),
            );
            hosts.insert(h.host_id, handle);
        }

        let mut switches = BTreeMap::new();
        let mut channels = Vec::new();
        for sw in &spec.switches {
            let (tx, rx) = inputs.remove(&sw.dpid).expect("input channel");
            let (to_core, from_switch) = unbounded();
            let actor = SwitchActor {
                state: SwitchState::new(sw.dpid, sw.ports()),
                peers: peers.remove(&sw.dpid).unwrap_or_default(),
                to_core,
                clock,
                latency,
            };
            threads.push(
                std::thread::Builder::new()
                    .name(format!("switch-{}", sw.dpid.0))
                    .spawn(move || actor.run(rx))
                    .expect("spawn switch thread"),
            );
            channels.push(SwitchChannel {
                tx: Box::new(SwitchControl { tx: tx.clone() }),
                rx: from_switch,
            });
            switches.insert(sw.dpid, tx);
        }

        Ok(Fabric {
            spec,
            clock,
            switches,
            hosts,
            channels: Mutex::new(channels),
            threads: Mutex::new(threads),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    /// Southbound channels of all switches; empty after the first call.
    pub fn take_channels(&self) -> Vec<SwitchChannel> {
        std::mem::take(&mut *self.channels.lock().unwrap())
    }

    pub fn host(&self, host_id: u32) -> Result<&HostHandle, NetsimError> {
        self.hosts.get(&host_id).ok_or(NetsimError::UnknownHost(host_id))
    }

    pub fn host_by_mac(&self, mac: MacAddr) -> Option<&HostHandle> {
        self.hosts.values().find(|h| h.mac == mac)
    }

    pub fn hosts(&self) -> impl Iterator<Item = &HostHandle> {
        self.hosts.values()
    }

    fn switch(&self, dpid: DatapathId) -> Result<&Sender<SwitchInput>, NetsimError> {
        self.switches.get(&dpid).ok_or(NetsimError::UnknownSwitch(dpid))
    }

    /// Current flow table of a switch, with install times.
    pub fn flow_table(&self, dpid: DatapathId) -> Result<Vec<FlowEntry>, NetsimError> {
        let (tx, rx) = unbounded();
        self.switch(dpid)?
            .send(SwitchInput::DumpFlows(tx))
            .map_err(|_| NetsimError::Stopped)?;
        rx.recv().map_err(|_| NetsimError::Stopped)
    }

    pub fn set_port(&self, at: PortRef, up: bool) -> Result<(), NetsimError> {
        self.switch(at.dpid)?
            .send(SwitchInput::SetPort { port: at.port, up })
            .map_err(|_| NetsimError::Stopped)
    }

    /// Brings both ends of a link down or up.
    pub fn set_link(&self, a: PortRef, b: PortRef, up: bool) -> Result<(), NetsimError> {
        self.set_port(a, up)?;
        self.set_port(b, up)
    }

    /// Stops one switch; its southbound channel closes, which the core sees as
    /// a disconnect.
    pub fn stop_switch(&self, dpid: DatapathId) -> Result<(), NetsimError> {
        self.switch(dpid)?
            .send(SwitchInput::Shutdown)
            .map_err(|_| NetsimError::Stopped)
    }

    pub fn shutdown(&self) {
        for tx in self.switches.values() {
            let _ = tx.send(SwitchInput::Shutdown);
        }
        for h in self.hosts.values() {
            h.shutdown();
        }
        let threads = std::mem::take(&mut *self.threads.lock().unwrap());
        for t in threads {
            let _ = t.join();
        }
    }
}

impl Drop for Fabric {
    fn drop(&mut self) {
        self.shutdown();
    }
}

struct SwitchActor {
    state: SwitchState,
    peers: BTreeMap<u16, Peer>,
    to_core: Sender<Vec<u8>>,
    clock: Clock,
    latency: Micros,
}

impl SwitchActor {
    fn run(mut self, rx: Receiver<SwitchInput>) {
        let ports = self.state.ports.keys().copied().collect();
        self.to_sb(SbMessage::Hello {
            dpid: self.state.dpid,
            ports,
        });
        loop {
            let msg = match self.state.table.next_expiry() {
                Some(at) => match rx.recv_deadline(self.clock.instant_at(at)) {
                    Ok(m) => Some(m),
                    Err(RecvTimeoutError::Timeout) => None,
                    Err(RecvTimeoutError::Disconnected) => return,
                },
                None => match rx.recv() {
                    Ok(m) => Some(m),
                    Err(_) => return,
                },
            };
            match msg {
                None => self.sweep(),
                Some(SwitchInput::Shutdown) => return,
                Some(SwitchInput::Frame {
                    in_port,
                    frame,
                    deliver_at,
                }) => {
                    self.clock.sleep_until(deliver_at);
                    if !self.state.port_up(in_port) {
                        continue;
                    }
                    let now = self.clock.now_micros();
                    for effect in switch_rx(&mut self.state, in_port, &frame, now) {
                        self.apply(effect, now);
                    }
                }
                Some(SwitchInput::Sb(bytes)) => {
                    self.sweep();
                    match decode_sb(&bytes) {
                        Ok(msg) => self.on_sb(msg),
                        Err(e) => log::warn!("{}: undecodable southbound message: {e}", self.state.dpid),
                    }
                }
                Some(SwitchInput::DumpFlows(reply)) => {
                    self.sweep();
                    let _ = reply.send(self.state.table.entries().to_vec());
                }
                Some(SwitchInput::SetPort { port, up }) => {
                    if let Some(p) = self.state.ports.get_mut(&port) {
                        if p.up != up {
                            p.up = up;
                            self.to_sb(SbMessage::PortStatus {
                                dpid: self.state.dpid,
                                port,
                                up,
                            });
                        }
                    }
                }
            }
        }
    }

    fn sweep(&mut self) {
        let now = self.clock.now_micros();
        for rule in expire_flows(&mut self.state, now) {
            self.apply(Effect::FlowRemoved(rule), now);
        }
    }

    fn on_sb(&mut self, msg: SbMessage) {
        let now = self.clock.now_micros();
        match msg {
            SbMessage::PacketOut {
                out_port, frame, ..
            } => match out_port {
                OutPort::Flood => {
                    for port in self.state.flood_ports(None) {
                        self.output(port, frame.clone(), now);
                    }
                }
                OutPort::Port(port) => {
                    if self.state.port_up(port) {
                        self.output(port, frame, now);
                    }
                }
            },
            SbMessage::FlowMod { op, rule, .. } => match op {
                FlowOp::Add => self.state.table.insert(rule, now),
                FlowOp::Remove => {
                    self.state.table.remove(rule.rule_id);
                }
                FlowOp::Modify => {
                    if !self.state.table.modify(rule) {
                        log::debug!("{}: modify of absent rule", self.state.dpid);
                    }
                }
            },
            other => log::debug!("{}: ignoring {other:?}", self.state.dpid),
        }
    }

    fn apply(&mut self, effect: Effect, now: Micros) {
        match effect {
            Effect::Output { port, frame } => self.output(port, frame, now),
            Effect::PacketIn { in_port, frame } => self.to_sb(SbMessage::PacketIn {
                dpid: self.state.dpid,
                in_port,
                frame,
            }),
            Effect::FlowRemoved(rule) => self.to_sb(SbMessage::FlowMod {
                dpid: self.state.dpid,
                op: FlowOp::Remove,
                rule,
            }),
        }
    }

    fn output(&self, port: u16, frame: Frame, now: Micros) {
        let deliver_at = now + self.latency;
        match self.peers.get(&port) {
            Some(Peer::Switch { tx, port: peer_port }) => {
                let _ = tx.send(SwitchInput::Frame {
                    in_port: *peer_port,
                    frame,
                    deliver_at,
                });
            }
            Some(Peer::Host { tx }) => {
                let _ = tx.send(HostInput::Frame { frame, deliver_at });
            }
            None => {}
        }
    }

    fn to_sb(&self, msg: SbMessage) {
        match encode_sb(&msg) {
            Ok(bytes) => {
                let _ = self.to_core.send(bytes);
            }
            Err(e) => log::warn!("{}: cannot encode {msg:?}: {e}", self.state.dpid),
        }
    }
}
