//! Host actors: answer pings and address resolution, acknowledge stream
//! segments, and drive ping and stop-and-wait stream sessions.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use crate::clock::{Clock, Micros};
use crate::wire::{Frame, MacAddr, ETH_ARP, ETH_DATA, ETH_DISCOVERY, MAX_PAYLOAD};

use super::topology::PortRef;
use super::traffic::{ArpPayload, DataPayload, PING_HEADER, SEGMENT_HEADER};
use super::{NetsimError, SwitchInput};

static NEXT_SESSION: AtomicU32 = AtomicU32::new(1);

pub(crate) enum HostInput {
    Frame {
        frame: Frame,
        deliver_at: Micros,
    },
    Send(Frame),
    Resolve {
        target: MacAddr,
        done: Sender<()>,
    },
    OpenSession {
        session: u32,
        tx: Sender<PingEcho>,
    },
    CloseSession(u32),
    Ping {
        session: u32,
        seq: u32,
        dst: MacAddr,
        payload_len: usize,
    },
    Stream {
        dst: MacAddr,
        params: StreamParams,
        report: Sender<StreamReport>,
    },
    Shutdown,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PingEcho {
    seq: u32,
    rtt_micros: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PingSample {
    pub seq: u32,
    /// `None` when no echo arrived within the timeout.
    pub rtt: Option<Duration>,
}

#[derive(Debug, Clone, Copy)]
pub struct PingParams {
    pub count: u32,
    pub interval: Duration,
    pub timeout: Duration,
    pub payload_len: usize,
}

impl Default for PingParams {
    fn default() -> Self {
        PingParams {
            count: 1,
            interval: Duration::from_millis(10),
            timeout: Duration::from_secs(5),
            payload_len: super::traffic::DEFAULT_PING_PAYLOAD,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StreamParams {
    pub duration: Duration,
    pub n_conns: u32,
    pub segment_bytes: usize,
    pub retransmit_after: Duration,
}

impl Default for StreamParams {
    fn default() -> Self {
        StreamParams {
            duration: Duration::from_secs(15),
            n_conns: 1,
            segment_bytes: super::traffic::DEFAULT_SEGMENT_BYTES,
            retransmit_after: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnReport {
    pub acked_bytes: u64,
    pub goodput_bps: f64,
    pub retransmits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamReport {
    pub duration: Duration,
    pub conns: Vec<ConnReport>,
}

impl StreamReport {
    /// Sum of per-connection goodputs, in bytes per second.
    pub fn aggregate_bps(&self) -> f64 {
        self.conns.iter().map(|c| c.goodput_bps).sum()
    }

    pub fn acked_bytes(&self) -> u64 {
        self.conns.iter().map(|c| c.acked_bytes).sum()
    }
}

/// Frames delivered to a host, capped; `total` keeps counting past the cap.
#[derive(Debug, Default)]
pub struct Inbox {
    pub frames: Vec<Frame>,
    pub total: u64,
    cap: usize,
}

/// Caller-side handle to a running host actor.
#[derive(Clone)]
pub struct HostHandle {
    pub id: u32,
    pub mac: MacAddr,
    pub attachment: PortRef,
    tx: Sender<HostInput>,
    inbox: Arc<Mutex<Inbox>>,
}

impl HostHandle {
    fn post(&self, msg: HostInput) -> Result<(), NetsimError> {
        self.tx.send(msg).map_err(|_| NetsimError::Stopped)
    }

    pub fn send(&self, frame: Frame) -> Result<(), NetsimError> {
        if frame.payload.len() > MAX_PAYLOAD {
            return Err(NetsimError::InvalidParam("frame payload over 1500 bytes"));
        }
        self.post(HostInput::Send(frame))
    }

    /// Broadcasts an address-resolution request for `target` and waits for
    /// the reply. Returns immediately if `target` already answered once.
    pub fn resolve(&self, target: MacAddr, timeout: Duration) -> Result<bool, NetsimError> {
        let (done, rx) = unbounded();
        self.post(HostInput::Resolve { target, done })?;
        Ok(rx.recv_timeout(timeout).is_ok())
    }

    /// Sends `count` echo requests to `dst`, one at a time, and returns one
    /// sample per request. RTTs are measured inside the host actors.
    pub fn ping(&self, dst: MacAddr, params: PingParams) -> Result<Vec<PingSample>, NetsimError> {
        if dst == self.mac {
            return Err(NetsimError::SelfPing);
        }
        if params.count == 0 {
            return Err(NetsimError::InvalidParam("ping count must be at least 1"));
        }
        if params.payload_len < PING_HEADER || params.payload_len > MAX_PAYLOAD {
            return Err(NetsimError::InvalidParam("ping payload length"));
        }
        self.resolve(dst, params.timeout)?;

        let session = NEXT_SESSION.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = unbounded();
        self.post(HostInput::OpenSession { session, tx })?;
        let mut samples = Vec::with_capacity(params.count as usize);
        for seq in 0..params.count {
            self.post(HostInput::Ping {
                session,
                seq,
                dst,
                payload_len: params.payload_len,
            })?;
            let deadline = Instant::now() + params.timeout;
            let rtt = loop {
                match rx.recv_deadline(deadline) {
                    Ok(echo) if echo.seq == seq => break Some(Duration::from_micros(echo.rtt_micros)),
                    Ok(_) => continue,
                    Err(_) => break None,
                }
            };
            samples.push(PingSample { seq, rtt });
            if seq + 1 < params.count && !params.interval.is_zero() {
                std::thread::sleep(params.interval);
            }
        }
        self.post(HostInput::CloseSession(session))?;
        Ok(samples)
    }

    /// Runs `n_conns` stop-and-wait connections to `dst` for the given duration.
    pub fn stream(&self, dst: MacAddr, params: StreamParams) -> Result<StreamReport, NetsimError> {
        if dst == self.mac {
            return Err(NetsimError::SelfPing);
        }
        if params.n_conns == 0 {
            return Err(NetsimError::InvalidParam("n_conns must be at least 1"));
        }
        if params.duration.is_zero() {
            return Err(NetsimError::InvalidParam("duration must be positive"));
        }
        if params.segment_bytes < SEGMENT_HEADER || params.segment_bytes > MAX_PAYLOAD {
            return Err(NetsimError::InvalidParam("segment size"));
        }
        self.resolve(dst, Duration::from_secs(5))?;
        let (report, rx) = unbounded();
        self.post(HostInput::Stream {
            dst,
            params,
            report,
        })?;
        rx.recv_timeout(params.duration + params.retransmit_after + Duration::from_secs(30))
            .map_err(|_| NetsimError::Stopped)
    }

    /// Frames delivered so far (up to the inbox cap).
    pub fn inbox(&self) -> Vec<Frame> {
        self.inbox.lock().unwrap().frames.clone()
    }

    pub fn delivered(&self) -> u64 {
        self.inbox.lock().unwrap().total
    }

    pub fn clear_inbox(&self) {
        let mut inbox = self.inbox.lock().unwrap();
        inbox.frames.clear();
        inbox.total = 0;
    }

    pub(crate) fn tx(&self) -> Sender<HostInput> {
        self.tx.clone()
    }

    pub(crate) fn shutdown(&self) {
        let _ = self.tx.send(HostInput::Shutdown);
    }
}

struct Conn {
    seq: u32,
    sent_at: Micros,
    acked_bytes: u64,
    retransmits: u64,
}

struct StreamState {
    dst: MacAddr,
    segment_bytes: usize,
    started: Micros,
    end_at: Micros,
    rto: Micros,
    duration: Duration,
    conns: Vec<Conn>,
    report: Sender<StreamReport>,
}

pub(crate) struct HostActor {
    pub id: u32,
    pub mac: MacAddr,
    pub clock: Clock,
    pub latency: Micros,
    pub uplink: Sender<SwitchInput>,
    pub uplink_port: u16,
    pub inbox: Arc<Mutex<Inbox>>,
    sessions: HashMap<u32, Sender<PingEcho>>,
    arp_waiters: HashMap<MacAddr, Vec<Sender<()>>>,
    resolved: HashSet<MacAddr>,
    stream: Option<StreamState>,
}

impl HostActor {
    pub fn new(
        id: u32,
        mac: MacAddr,
        attachment: PortRef,
        clock: Clock,
        latency: Micros,
        uplink: Sender<SwitchInput>,
        inbox_cap: usize,
    ) -> (HostActor, HostHandle, Receiver<HostInput>) {
        let (tx, rx) = unbounded();
        let inbox = Arc::new(Mutex::new(Inbox {
            cap: inbox_cap,
            ..Inbox::default()
        }));
        let handle = HostHandle {
            id,
            mac,
            attachment,
            tx: tx.clone(),
            inbox: inbox.clone(),
        };
        let actor = HostActor {
            id,
            mac,
            clock,
            latency,
            uplink,
            uplink_port: attachment.port,
            inbox,
            sessions: HashMap::new(),
            arp_waiters: HashMap::new(),
            resolved: HashSet::new(),
            stream: None,
        };
        (actor, handle, rx)
    }

    pub fn run(mut self, rx: Receiver<HostInput>) {
        loop {
            let msg = match self.stream.as_ref().map(|s| self.next_deadline(s)) {
                Some(deadline) => match rx.recv_deadline(self.clock.instant_at(deadline)) {
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
                None => {}
                Some(HostInput::Shutdown) => return,
                Some(HostInput::Frame { frame, deliver_at }) => {
                    self.clock.sleep_until(deliver_at);
                    self.receive(frame);
                }
                Some(HostInput::Send(frame)) => self.transmit(frame),
                Some(HostInput::Resolve { target, done }) => {
                    if self.resolved.contains(&target) {
                        let _ = done.send(());
                    } else {
                        self.arp_waiters.entry(target).or_default().push(done);
                        let payload = ArpPayload::Request { target }.encode();
                        self.transmit(Frame::new(MacAddr::BROADCAST, self.mac, ETH_ARP, payload));
                    }
                }
                Some(HostInput::OpenSession { session, tx }) => {
                    self.sessions.insert(session, tx);
                }
                Some(HostInput::CloseSession(session)) => {
                    self.sessions.remove(&session);
                }
                Some(HostInput::Ping {
                    session,
                    seq,
                    dst,
                    payload_len,
                }) => {
                    let payload = DataPayload::PingRequest {
                        session,
                        seq,
                        sent_micros: self.clock.now_micros(),
                    }
                    .encode(payload_len);
                    self.transmit(Frame::new(dst, self.mac, ETH_DATA, payload));
                }
                Some(HostInput::Stream {
                    dst,
                    params,
                    report,
                }) => self.start_stream(dst, params, report),
            }
            self.service_stream();
        }
    }

    fn next_deadline(&self, s: &StreamState) -> Micros {
        s.conns
            .iter()
            .map(|c| c.sent_at + s.rto)
            .min()
            .unwrap_or(s.end_at)
            .min(s.end_at)
    }

    fn transmit(&self, frame: Frame) {
        let deliver_at = self.clock.now_micros() + self.latency;
        let _ = self.uplink.send(SwitchInput::Frame {
            in_port: self.uplink_port,
            frame,
            deliver_at,
        });
    }

    fn receive(&mut self, frame: Frame) {
        // Hosts never consume discovery probes.
        if frame.src == self.mac || frame.ethertype == ETH_DISCOVERY {
            return;
        }
        if frame.dst != self.mac && !frame.dst.is_broadcast() {
            log::trace!("h{}: dropping frame for {}", self.id, frame.dst);
            return;
        }
        {
            let mut inbox = self.inbox.lock().unwrap();
            inbox.total += 1;
            if inbox.frames.len() < inbox.cap {
                inbox.frames.push(frame.clone());
            }
        }
        match frame.ethertype {
            ETH_ARP => self.on_arp(&frame),
            ETH_DATA => self.on_data(&frame),
            other => log::trace!("h{}: ignoring ethertype {other:#06x}", self.id),
        }
    }

    fn on_arp(&mut self, frame: &Frame) {
        match ArpPayload::decode(&frame.payload) {
            Some(ArpPayload::Request { target }) if target == self.mac => {
                self.resolved.insert(frame.src);
                let payload = ArpPayload::Reply { target: self.mac }.encode();
                self.transmit(Frame::new(frame.src, self.mac, ETH_ARP, payload));
            }
            Some(ArpPayload::Reply { target }) if target == frame.src => {
                self.resolved.insert(target);
                for w in self.arp_waiters.remove(&target).unwrap_or_default() {
                    let _ = w.send(());
                }
            }
            _ => {}
        }
    }

    fn on_data(&mut self, frame: &Frame) {
        match DataPayload::decode(&frame.payload) {
            Some(DataPayload::PingRequest {
                session,
                seq,
                sent_micros,
            }) => {
                let payload = DataPayload::PingReply {
                    session,
                    seq,
                    sent_micros,
                }
                .encode(frame.payload.len());
                self.transmit(Frame::new(frame.src, self.mac, ETH_DATA, payload));
            }
            Some(DataPayload::PingReply {
                session,
                seq,
                sent_micros,
            }) => {
                if let Some(tx) = self.sessions.get(&session) {
                    let rtt_micros = self.clock.now_micros().saturating_sub(sent_micros);
                    let _ = tx.send(PingEcho { seq, rtt_micros });
                }
            }
            Some(DataPayload::Segment { conn, seq }) => {
                let payload = DataPayload::Ack { conn, seq }.encode(0);
                self.transmit(Frame::new(frame.src, self.mac, ETH_DATA, payload));
            }
            Some(DataPayload::Ack { conn, seq }) => self.on_ack(frame.src, conn, seq),
            None => {}
        }
    }

    fn start_stream(&mut self, dst: MacAddr, params: StreamParams, report: Sender<StreamReport>) {
        let now = self.clock.now_micros();
        let state = StreamState {
            dst,
            segment_bytes: params.segment_bytes,
            started: now,
            end_at: now + params.duration.as_micros() as Micros,
            rto: params.retransmit_after.as_micros() as Micros,
            duration: params.duration,
            conns: (0..params.n_conns)
                .map(|_| Conn {
                    seq: 0,
                    sent_at: now,
                    acked_bytes: 0,
                    retransmits: 0,
                })
                .collect(),
            report,
        };
        for conn in 0..params.n_conns {
            self.send_segment(&state, conn, 0);
        }
        self.stream = Some(state);
    }

    fn send_segment(&self, s: &StreamState, conn: u32, seq: u32) {
        let payload = DataPayload::Segment { conn, seq }.encode(s.segment_bytes);
        self.transmit(Frame::new(s.dst, self.mac, ETH_DATA, payload));
    }

    fn on_ack(&mut self, from: MacAddr, conn: u32, seq: u32) {
        let Some(mut s) = self.stream.take() else {
            return;
        };
        let now = self.clock.now_micros();
        if from == s.dst && now < s.end_at {
            if let Some(c) = s.conns.get_mut(conn as usize) {
                if c.seq == seq {
                    c.acked_bytes += s.segment_bytes as u64;
                    c.seq = seq.wrapping_add(1);
                    c.sent_at = now;
                    let next = c.seq;
                    self.send_segment(&s, conn, next);
                }
            }
        }
        self.stream = Some(s);
    }

    /// Retransmits overdue segments and finishes the stream at its end time.
    fn service_stream(&mut self) {
        let Some(mut s) = self.stream.take() else {
            return;
        };
        let now = self.clock.now_micros();
        if now >= s.end_at {
            let secs = s.duration.as_secs_f64();
            let report = StreamReport {
                duration: s.duration,
                conns: s
                    .conns
                    .iter()
                    .map(|c| ConnReport {
                        acked_bytes: c.acked_bytes,
                        goodput_bps: c.acked_bytes as f64 * 8.0 / secs,
                        retransmits: c.retransmits,
                    })
                    .collect(),
            };
            log::debug!(
                "h{}: stream done after {} us",
                self.id,
                now.saturating_sub(s.started)
            );
            let _ = s.report.send(report);
            return;
        }
        for idx in 0..s.conns.len() {
            if now >= s.conns[idx].sent_at + s.rto {
                s.conns[idx].retransmits += 1;
                s.conns[idx].sent_at = now;
                let seq = s.conns[idx].seq;
                self.send_segment(&s, idx as u32, seq);
            }
        }
        self.stream = Some(s);
    }
}
