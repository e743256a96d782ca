use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::broker::BrokerApi;
use crate::clock::{Clock, Micros};
use crate::p2p::Hub;
use crate::wire::{
    decode_sb, encode_event, encode_sb, Action, DatapathId, Event, EventBody, EventKind, FlowOp,
    FlowRule, FlowRuleOp, Frame, KindSet, OutPort, SbMessage,
};

use super::api::{ControlApi, CoreError, DatapathInfo, FlowModRequest, Mode};
use super::southbound::{SouthboundTx, SwitchChannel};

/// An app compiled into the core, called synchronously on every event of the
/// kinds it declares.
pub trait EventHandler: Send + Sync {
    fn kinds(&self) -> KindSet;
    fn on_event(&self, event: &Event);
}

pub enum Distribution {
    Internal,
    P2p(Arc<Hub>),
    Broker(Arc<dyn BrokerApi>),
}

impl Distribution {
    pub fn mode(&self) -> Mode {
        match self {
            Distribution::Internal => Mode::Internal,
            Distribution::P2p(_) => Mode::P2p,
            Distribution::Broker(_) => Mode::Broker,
        }
    }
}

pub struct CoreConfig {
    pub distribution: Distribution,
    /// Keep every emitted event for later inspection.
    pub record_log: bool,
}

impl CoreConfig {
    pub fn new(distribution: Distribution) -> CoreConfig {
        CoreConfig {
            distribution,
            record_log: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoreMetrics {
    pub events: u64,
    /// Indexed by wire tag - 1.
    pub events_by_kind: [u64; 5],
    /// Events the backend refused.
    pub dropped: u64,
    pub packet_ins: u64,
    pub packet_outs: u64,
    pub flow_mods: u64,
}

impl CoreMetrics {
    pub fn of_kind(&self, kind: EventKind) -> u64 {
        self.events_by_kind[kind.tag() as usize - 1]
    }
}

#[derive(Default)]
struct Counters {
    events_by_kind: [AtomicU64; 5],
    dropped: AtomicU64,
    packet_ins: AtomicU64,
    packet_outs: AtomicU64,
    flow_mods: AtomicU64,
}

struct Datapath {
    tx: Box<dyn SouthboundTx>,
    ports: Mutex<BTreeMap<u16, bool>>,
    /// Rules the core believes are installed, by id.
    rules: Mutex<HashMap<u64, FlowRule>>,
}

impl Datapath {
    fn has_port(&self, port: u16) -> bool {
        self.ports.lock().unwrap().contains_key(&port)
    }
}

struct Emitter {
    next_seq: u64,
    log: Vec<Event>,
}

struct Inner {
    clock: Clock,
    dist: Distribution,
    record_log: bool,
    registry: RwLock<BTreeMap<DatapathId, Arc<Datapath>>>,
    emitter: Mutex<Emitter>,
    app: RwLock<Option<Arc<dyn EventHandler>>>,
    app_queue: Mutex<VecDeque<Event>>,
    app_lock: Mutex<()>,
    next_rule_id: AtomicU64,
    counters: Counters,
    handlers: Mutex<Vec<JoinHandle<()>>>,
}

thread_local! {
    // Cores whose app this thread is currently running; events raised from
    // inside an app are queued and drained by the outer dispatch loop.
    static DISPATCHING: RefCell<Vec<usize>> = const { RefCell::new(Vec::new()) };
}

struct DispatchGuard(usize);

impl DispatchGuard {
    fn enter(id: usize) -> Option<DispatchGuard> {
        DISPATCHING.with(|d| {
            let mut d = d.borrow_mut();
            if d.contains(&id) {
                None
            } else {
                d.push(id);
                Some(DispatchGuard(id))
            }
        })
    }
}

impl Drop for DispatchGuard {
    fn drop(&mut self) {
        DISPATCHING.with(|d| d.borrow_mut().retain(|&x| x != self.0));
    }
}

/// The controller core: switch registry, event emission and the direct
/// packet-out / flow-mod channel. Cheap to clone.
#[derive(Clone)]
pub struct Controller {
    inner: Arc<Inner>,
}

impl Controller {
    pub fn new(cfg: CoreConfig) -> Controller {
        Controller {
            inner: Arc::new(Inner {
                clock: Clock::new(),
                dist: cfg.distribution,
                record_log: cfg.record_log,
                registry: RwLock::new(BTreeMap::new()),
                emitter: Mutex::new(Emitter {
                    next_seq: 0,
                    log: Vec::new(),
                }),
                app: RwLock::new(None),
                app_queue: Mutex::new(VecDeque::new()),
                app_lock: Mutex::new(()),
                next_rule_id: AtomicU64::new(1),
                counters: Counters::default(),
                handlers: Mutex::new(Vec::new()),
            }),
        }
    }

    pub fn mode(&self) -> Mode {
        self.inner.dist.mode()
    }

    pub fn clock(&self) -> Clock {
        self.inner.clock
    }

    /// Installs the compiled-in app. Only INTERNAL mode dispatches to it.
    pub fn set_app(&self, app: Arc<dyn EventHandler>) {
        *self.inner.app.write().unwrap() = Some(app);
    }

    pub fn clear_app(&self) {
        *self.inner.app.write().unwrap() = None;
    }

    /// Accepts a switch connection: waits for its Hello, registers it and
    /// serves the rest of the channel on a dedicated thread.
    pub fn connect(&self, ch: SwitchChannel) -> Result<DatapathId, CoreError> {
        let first = ch
            .rx
            .recv_timeout(Duration::from_secs(5))
            .map_err(|_| CoreError::Transport("switch sent no Hello".into()))?;
        let (dpid, ports) = match decode_sb(&first) {
            Ok(SbMessage::Hello { dpid, ports }) => (dpid, ports),
            Ok(other) => {
                return Err(CoreError::InvalidRequest(format!(
                    "expected Hello, got {other:?}"
                )))
            }
            Err(e) => return Err(CoreError::InvalidRequest(e.to_string())),
        };
        self.attach(dpid, &ports, ch.tx)?;
        let core = self.clone();
        let rx = ch.rx;
        let handle = std::thread::Builder::new()
            .name(format!("sb-{}", dpid.0))
            .spawn(move || {
                while let Ok(bytes) = rx.recv() {
                    match decode_sb(&bytes) {
                        Ok(msg) => core.on_switch_message(dpid, msg),
                        Err(e) => log::warn!("{dpid}: undecodable message: {e}"),
                    }
                }
                core.detach(dpid);
            })
            .map_err(|e| CoreError::Transport(e.to_string()))?;
        self.inner.handlers.lock().unwrap().push(handle);
        Ok(dpid)
    }

    pub fn connect_all(&self, channels: Vec<SwitchChannel>) -> Result<Vec<DatapathId>, CoreError> {
        channels.into_iter().map(|ch| self.connect(ch)).collect()
    }

    /// Registers a datapath and announces it and its ports.
    pub fn attach(
        &self,
        dpid: DatapathId,
        ports: &[u16],
        tx: Box<dyn SouthboundTx>,
    ) -> Result<(), CoreError> {
        {
            let mut reg = self.inner.registry.write().unwrap();
            if reg.contains_key(&dpid) {
                return Err(CoreError::DuplicateDatapath(dpid));
            }
            reg.insert(
                dpid,
                Arc::new(Datapath {
                    tx,
                    ports: Mutex::new(ports.iter().map(|&p| (p, true)).collect()),
                    rules: Mutex::new(HashMap::new()),
                }),
            );
        }
        log::debug!("{dpid} attached with {} ports", ports.len());
        self.raise(EventBody::TopologyDevice { dpid, up: true });
        for &port in ports {
            self.raise(EventBody::TopologyPort {
                dpid,
                port,
                up: true,
            });
        }
        Ok(())
    }

    /// Forgets a datapath; returns false if it was not registered.
    pub fn detach(&self, dpid: DatapathId) -> bool {
        let removed = self.inner.registry.write().unwrap().remove(&dpid).is_some();
        if removed {
            log::debug!("{dpid} detached");
            self.raise(EventBody::TopologyDevice { dpid, up: false });
        }
        removed
    }

    fn datapath(&self, dpid: DatapathId) -> Result<Arc<Datapath>, CoreError> {
        self.inner
            .registry
            .read()
            .unwrap()
            .get(&dpid)
            .cloned()
            .ok_or(CoreError::UnknownDatapath(dpid))
    }

    pub fn is_attached(&self, dpid: DatapathId) -> bool {
        self.inner.registry.read().unwrap().contains_key(&dpid)
    }

    fn on_switch_message(&self, dpid: DatapathId, msg: SbMessage) {
        match msg {
            SbMessage::PacketIn { in_port, frame, .. } => {
                self.inner.counters.packet_ins.fetch_add(1, Ordering::Relaxed);
                self.raise(EventBody::PacketException {
                    dpid,
                    in_port,
                    frame,
                });
            }
            SbMessage::PortStatus { port, up, .. } => {
                if let Ok(dp) = self.datapath(dpid) {
                    dp.ports.lock().unwrap().insert(port, up);
                }
                self.raise(EventBody::TopologyPort { dpid, port, up });
            }
            // A switch reports hard-timeout expiry as a Remove.
            SbMessage::FlowMod {
                op: FlowOp::Remove,
                rule,
                ..
            } => {
                let Ok(dp) = self.datapath(dpid) else { return };
                let known = dp.rules.lock().unwrap().remove(&rule.rule_id).is_some();
                if known {
                    self.raise(EventBody::FlowRuleEvent {
                        op: FlowRuleOp::Removed,
                        dpid,
                        rule,
                    });
                }
            }
            other => log::debug!("{dpid}: unexpected {other:?}"),
        }
    }

    /// Stamps the next sequence number and hands the event to the backend.
    pub fn raise(&self, body: EventBody) -> u64 {
        let inner = &self.inner;
        let kind = body.kind();
        let mut internal_pending = false;
        let seq;
        {
            let mut em = inner.emitter.lock().unwrap();
            seq = em.next_seq;
            em.next_seq += 1;
            let ev = Event::new(seq, inner.clock.now_micros(), body);
            inner.counters.events_by_kind[kind.tag() as usize - 1].fetch_add(1, Ordering::Relaxed);
            let delivered = match &inner.dist {
                Distribution::Internal => {
                    let wants = inner
                        .app
                        .read()
                        .unwrap()
                        .as_ref()
                        .is_some_and(|a| a.kinds().contains(kind));
                    if wants {
                        inner.app_queue.lock().unwrap().push_back(ev.clone());
                        internal_pending = true;
                    }
                    true
                }
                Distribution::P2p(hub) => match encode_event(&ev) {
                    Ok(bytes) => {
                        hub.push(kind, Arc::from(bytes));
                        true
                    }
                    Err(e) => {
                        log::warn!("seq {seq}: cannot encode: {e}");
                        false
                    }
                },
                Distribution::Broker(api) => match encode_event(&ev) {
                    Ok(bytes) => match api.publish(kind.topic(), &bytes) {
                        Ok(_) => true,
                        Err(e) => {
                            log::warn!("seq {seq}: publish failed: {e}");
                            false
                        }
                    },
                    Err(e) => {
                        log::warn!("seq {seq}: cannot encode: {e}");
                        false
                    }
                },
            };
            if !delivered {
                inner.counters.dropped.fetch_add(1, Ordering::Relaxed);
            }
            if inner.record_log {
                em.log.push(ev);
            }
        }
        if internal_pending {
            self.drain_app();
        }
        seq
    }

    fn drain_app(&self) {
        let inner = &self.inner;
        let Some(_guard) = DispatchGuard::enter(Arc::as_ptr(inner) as usize) else {
            return;
        };
        let Some(app) = inner.app.read().unwrap().clone() else {
            return;
        };
        let _serial = inner.app_lock.lock().unwrap();
        loop {
            let next = inner.app_queue.lock().unwrap().pop_front();
            match next {
                Some(ev) => app.on_event(&ev),
                None => break,
            }
        }
    }

    pub fn metrics(&self) -> CoreMetrics {
        let c = &self.inner.counters;
        let events_by_kind: [u64; 5] =
            std::array::from_fn(|i| c.events_by_kind[i].load(Ordering::Relaxed));
        CoreMetrics {
            events: events_by_kind.iter().sum(),
            events_by_kind,
            dropped: c.dropped.load(Ordering::Relaxed),
            packet_ins: c.packet_ins.load(Ordering::Relaxed),
            packet_outs: c.packet_outs.load(Ordering::Relaxed),
            flow_mods: c.flow_mods.load(Ordering::Relaxed),
        }
    }

    /// Every event emitted so far, in seq order.
    pub fn event_log(&self) -> Vec<Event> {
        self.inner.emitter.lock().unwrap().log.clone()
    }

    /// Events with seq ≥ `from`.
    pub fn events_since(&self, from: u64) -> Vec<Event> {
        let em = self.inner.emitter.lock().unwrap();
        let start = em.log.partition_point(|e| e.seq < from);
        em.log[start..].to_vec()
    }

    pub fn next_seq(&self) -> u64 {
        self.inner.emitter.lock().unwrap().next_seq
    }

    pub fn now_micros(&self) -> Micros {
        self.inner.clock.now_micros()
    }

    /// Drops the app and the switch registry, then joins the southbound
    /// handlers. Handlers finish once their switches stop, so stop the
    /// fabric first.
    pub fn shutdown(&self) {
        self.clear_app();
        self.inner.registry.write().unwrap().clear();
        let handles = std::mem::take(&mut *self.inner.handlers.lock().unwrap());
        for h in handles {
            let _ = h.join();
        }
    }

    fn validate(&self, dp: &Datapath, req: &FlowModRequest) -> Result<(), CoreError> {
        if req.actions.len() > u8::MAX as usize {
            return Err(CoreError::InvalidRequest("too many actions".into()));
        }
        for a in &req.actions {
            if let Action::Output(port) = a {
                if !dp.has_port(*port) {
                    return Err(CoreError::InvalidRequest(format!(
                        "OUTPUT to missing port {port} on {}",
                        req.dpid
                    )));
                }
            }
        }
        Ok(())
    }
}

fn send(dp: &Datapath, dpid: DatapathId, msg: &SbMessage) -> Result<(), CoreError> {
    let bytes = encode_sb(msg).map_err(|e| CoreError::InvalidRequest(e.to_string()))?;
    dp.tx.send(bytes).map_err(|_| CoreError::Disconnected(dpid))
}

impl ControlApi for Controller {
    fn packet_out(&self, dpid: DatapathId, out: OutPort, frame: Frame) -> Result<(), CoreError> {
        let dp = self.datapath(dpid)?;
        if let OutPort::Port(port) = out {
            if !dp.has_port(port) {
                return Err(CoreError::UnknownPort { dpid, port });
            }
        }
        send(
            &dp,
            dpid,
            &SbMessage::PacketOut {
                dpid,
                out_port: out,
                frame,
            },
        )?;
        self.inner.counters.packet_outs.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    fn flow_mod(&self, req: FlowModRequest) -> Result<u64, CoreError> {
        let dpid = req.dpid;
        let dp = self.datapath(dpid)?;
        let (op, rule) = {
            let mut rules = dp.rules.lock().unwrap();
            match req.op {
                FlowOp::Add => {
                    self.validate(&dp, &req)?;
                    let id = self.inner.next_rule_id.fetch_add(1, Ordering::Relaxed);
                    let rule = req.to_rule(id);
                    send(
                        &dp,
                        dpid,
                        &SbMessage::FlowMod {
                            dpid,
                            op: FlowOp::Add,
                            rule: rule.clone(),
                        },
                    )?;
                    rules.insert(id, rule.clone());
                    (FlowRuleOp::Added, rule)
                }
                FlowOp::Remove => {
                    let rule = rules.remove(&req.rule_id).ok_or(CoreError::UnknownRule {
                        dpid,
                        rule_id: req.rule_id,
                    })?;
                    send(
                        &dp,
                        dpid,
                        &SbMessage::FlowMod {
                            dpid,
                            op: FlowOp::Remove,
                            rule: rule.clone(),
                        },
                    )?;
                    (FlowRuleOp::Removed, rule)
                }
                FlowOp::Modify => {
                    if !rules.contains_key(&req.rule_id) {
                        return Err(CoreError::UnknownRule {
                            dpid,
                            rule_id: req.rule_id,
                        });
                    }
                    self.validate(&dp, &req)?;
                    let rule = req.to_rule(req.rule_id);
                    send(
                        &dp,
                        dpid,
                        &SbMessage::FlowMod {
                            dpid,
                            op: FlowOp::Modify,
                            rule: rule.clone(),
                        },
                    )?;
                    rules.insert(rule.rule_id, rule.clone());
                    (FlowRuleOp::Updated, rule)
                }
            }
        };
        self.inner.counters.flow_mods.fetch_add(1, Ordering::Relaxed);
        let id = rule.rule_id;
        self.raise(EventBody::FlowRuleEvent { op, dpid, rule });
        Ok(id)
    }

    fn flows(&self, dpid: DatapathId) -> Result<Vec<FlowRule>, CoreError> {
        self.datapath(dpid)?
            .tx
            .dump_flows()
            .map_err(|_| CoreError::Disconnected(dpid))
    }

    fn datapaths(&self) -> Result<Vec<DatapathInfo>, CoreError> {
        Ok(self
            .inner
            .registry
            .read()
            .unwrap()
            .iter()
            .map(|(&dpid, dp)| DatapathInfo {
                dpid,
                ports: dp.ports.lock().unwrap().iter().map(|(&p, &up)| (p, up)).collect(),
            })
            .collect())
    }

    fn report_link(
        &self,
        src: (DatapathId, u16),
        dst: (DatapathId, u16),
        up: bool,
    ) -> Result<(), CoreError> {
        self.raise(EventBody::TopologyLink {
            src_dpid: src.0,
            src_port: src.1,
            dst_dpid: dst.0,
            dst_port: dst.1,
            up,
        });
        Ok(())
    }
}
