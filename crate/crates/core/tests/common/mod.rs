//! Shared by the integration tests and the acceptance runner: generators,
//! independent oracles, and one check per acceptance property. Each check
//! returns a short detail line on success and the reason on failure.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use sdn_disagg::broker::{Broker, BrokerApi, BrokerConsumer, ConsumerConfig};
use sdn_disagg::controller::{Controller, CoreConfig, Distribution, Mode};
use sdn_disagg::deploy::{DeployConfig, Deployment};
use sdn_disagg::netsim::{build_named, switch_rx, Effect, NetworkSpec, SwitchState};
use sdn_disagg::p2p::Hub;
use sdn_disagg::services::Install;
use sdn_disagg::source::EventSource;
use sdn_disagg::wire::*;

pub type Check = Result<String, String>;

pub fn wait_until(timeout: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + timeout;
    while Instant::now() < deadline {
        if cond() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(5));
    }
    cond()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- generators

pub fn arb_mac() -> impl Strategy<Value = MacAddr> {
    any::<[u8; 6]>().prop_map(MacAddr)
}

pub fn arb_frame() -> impl Strategy<Value = Frame> {
    (
        arb_mac(),
        arb_mac(),
        prop::sample::select(vec![ETH_DISCOVERY, ETH_ARP, ETH_DATA]),
        prop_oneof![
            prop::collection::vec(any::<u8>(), 0..64),
            prop::collection::vec(any::<u8>(), 0..=MAX_PAYLOAD),
        ],
    )
        .prop_map(|(dst, src, ethertype, payload)| Frame::new(dst, src, ethertype, payload))
}

fn phys_port() -> impl Strategy<Value = u16> {
    any::<u16>().prop_filter("reserved pseudo-port", |p| *p != FLOOD_PORT && *p != CONTROLLER_PORT)
}

pub fn arb_action() -> impl Strategy<Value = Action> {
    prop_oneof![
        phys_port().prop_map(Action::Output),
        Just(Action::Flood),
        Just(Action::Drop),
        Just(Action::Controller),
    ]
}

pub fn arb_match() -> impl Strategy<Value = Match> {
    (
        prop::option::of(any::<u16>()),
        prop::option::of(arb_mac()),
        prop::option::of(arb_mac()),
        prop::option::of(any::<u16>()),
    )
        .prop_map(|(in_port, eth_src, eth_dst, ethertype)| Match {
            in_port,
            eth_src,
            eth_dst,
            ethertype,
        })
}

pub fn arb_rule() -> impl Strategy<Value = FlowRule> {
    (
        any::<u64>(),
        any::<u16>(),
        arb_match(),
        prop::collection::vec(arb_action(), 0..8),
        any::<u32>(),
        any::<u64>(),
        any::<u64>(),
    )
        .prop_map(|(rule_id, priority, matcher, actions, hard_timeout_s, packet_count, byte_count)| FlowRule {
            rule_id,
            priority,
            matcher,
            actions,
            hard_timeout_s,
            packet_count,
            byte_count,
        })
}

fn dpid() -> impl Strategy<Value = DatapathId> {
    any::<u64>().prop_map(DatapathId)
}

fn event_of(body: impl Strategy<Value = EventBody>) -> impl Strategy<Value = Event> {
    (any::<u64>(), any::<u64>(), body).prop_map(|(seq, ts, body)| Event::new(seq, ts, body))
}

#[derive(Debug, Clone)]
pub enum Msg {
    Event(Event),
    Sb(SbMessage),
}

/// One generator per message family: the five event kinds and the five
/// southbound message types.
pub fn codec_families() -> Vec<(&'static str, BoxedStrategy<Msg>)> {
    let ev = |s: BoxedStrategy<EventBody>| event_of(s).prop_map(Msg::Event).boxed();
    let sb = |s: BoxedStrategy<SbMessage>| s.prop_map(Msg::Sb).boxed();
    vec![
        (
            "event/packet_exception",
            ev((dpid(), any::<u16>(), arb_frame())
                .prop_map(|(dpid, in_port, frame)| EventBody::PacketException { dpid, in_port, frame })
                .boxed()),
        ),
        (
            "event/topology_link",
            ev((dpid(), any::<u16>(), dpid(), any::<u16>(), any::<bool>())
                .prop_map(|(src_dpid, src_port, dst_dpid, dst_port, up)| EventBody::TopologyLink {
                    src_dpid,
                    src_port,
                    dst_dpid,
                    dst_port,
                    up,
                })
                .boxed()),
        ),
        (
            "event/topology_device",
            ev((dpid(), any::<bool>())
                .prop_map(|(dpid, up)| EventBody::TopologyDevice { dpid, up })
                .boxed()),
        ),
        (
            "event/topology_port",
            ev((dpid(), any::<u16>(), any::<bool>())
                .prop_map(|(dpid, port, up)| EventBody::TopologyPort { dpid, port, up })
                .boxed()),
        ),
        (
            "event/flow_rule",
            ev((
                prop::sample::select(vec![FlowRuleOp::Added, FlowRuleOp::Removed, FlowRuleOp::Updated]),
                dpid(),
                arb_rule(),
            )
                .prop_map(|(op, dpid, rule)| EventBody::FlowRuleEvent { op, dpid, rule })
                .boxed()),
        ),
        (
            "sb/hello",
            sb((dpid(), prop::collection::vec(any::<u16>(), 0..64))
                .prop_map(|(dpid, ports)| SbMessage::Hello { dpid, ports })
                .boxed()),
        ),
        (
            "sb/packet_in",
            sb((dpid(), any::<u16>(), arb_frame())
                .prop_map(|(dpid, in_port, frame)| SbMessage::PacketIn { dpid, in_port, frame })
                .boxed()),
        ),
        (
            "sb/packet_out",
            sb((
                dpid(),
                prop_oneof![Just(OutPort::Flood), phys_port().prop_map(OutPort::Port)],
                arb_frame(),
            )
                .prop_map(|(dpid, out_port, frame)| SbMessage::PacketOut { dpid, out_port, frame })
                .boxed()),
        ),
        (
            "sb/flow_mod",
            sb((
                dpid(),
                prop::sample::select(vec![FlowOp::Add, FlowOp::Remove, FlowOp::Modify]),
                arb_rule(),
            )
                .prop_map(|(dpid, op, rule)| SbMessage::FlowMod { dpid, op, rule })
                .boxed()),
        ),
        (
            "sb/port_status",
            sb((dpid(), any::<u16>(), any::<bool>())
                .prop_map(|(dpid, port, up)| SbMessage::PortStatus { dpid, port, up })
                .boxed()),
        ),
    ]
}

pub fn roundtrip(msg: &Msg) -> Result<(), TestCaseError> {
    match msg {
        Msg::Event(e) => {
            let bytes = encode_event(e).map_err(|err| TestCaseError::fail(err.to_string()))?;
            prop_assert_eq!(&decode_event(&bytes).map_err(|err| TestCaseError::fail(err.to_string()))?, e);
        }
        Msg::Sb(m) => {
            let bytes = encode_sb(m).map_err(|err| TestCaseError::fail(err.to_string()))?;
            prop_assert_eq!(&decode_sb(&bytes).map_err(|err| TestCaseError::fail(err.to_string()))?, m);
        }
    }
    Ok(())
}

/// Runs `cases` round trips of one family; returns how many were executed.
pub fn run_codec_family(name: &str, cases: u32) -> Result<u32, String> {
    let (_, strategy) = codec_families()
        .into_iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| format!("no family {name}"))?;
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let ran = std::cell::Cell::new(0u32);
    runner
        .run(&strategy, |m| {
            ran.set(ran.get() + 1);
            roundtrip(&m)
        })
        .map_err(|e| format!("{name}: {e}"))?;
    Ok(ran.get())
}

pub fn check_codec(cases: u32) -> Check {
    let families = codec_families();
    let mut total = 0;
    for (name, _) in &families {
        let ran = run_codec_family(name, cases)?;
        if ran < cases {
            return Err(format!("{name}: only {ran} of {cases} cases ran"));
        }
        total += ran;
    }
    Ok(format!("{} families, {total} cases, 0 failures", families.len()))
}

// ------------------------------------------------------------ flow matching

const POOL_PORTS: u16 = 4;

fn pool_mac() -> impl Strategy<Value = MacAddr> {
    (1u32..=4).prop_map(MacAddr::host)
}

fn pool_ethertype() -> impl Strategy<Value = u16> {
    prop::sample::select(vec![ETH_DISCOVERY, ETH_ARP, ETH_DATA])
}

/// A rule drawn from small value pools so that overlaps and priority ties
/// are common. The id is assigned by the caller.
fn pool_rule() -> impl Strategy<Value = FlowRule> {
    (
        0u16..4,
        prop::option::weighted(0.4, 1..=POOL_PORTS),
        prop::option::weighted(0.4, pool_mac()),
        prop::option::weighted(0.4, pool_mac()),
        prop::option::weighted(0.4, pool_ethertype()),
        1..=POOL_PORTS,
    )
        .prop_map(|(priority, in_port, eth_src, eth_dst, ethertype, out)| FlowRule {
            rule_id: 0,
            priority,
            matcher: Match {
                in_port,
                eth_src,
                eth_dst,
                ethertype,
            },
            actions: vec![Action::Output(out)],
            hard_timeout_s: 0,
            packet_count: 0,
            byte_count: 0,
        })
}

#[derive(Debug, Clone)]
pub struct MatchCase {
    pub rules: Vec<FlowRule>,
    pub in_port: u16,
    pub frame: Frame,
}

pub fn arb_match_case() -> impl Strategy<Value = MatchCase> {
    (
        prop::collection::vec(pool_rule(), 0..=64),
        any::<u64>(),
        1..=POOL_PORTS,
        pool_mac(),
        pool_mac(),
        pool_ethertype(),
        prop::collection::vec(any::<u8>(), 0..32),
    )
        .prop_map(|(mut rules, salt, in_port, dst, src, ethertype, payload)| {
            // Distinct ids in an order unrelated to insertion order.
            for (i, r) in rules.iter_mut().enumerate() {
                r.rule_id = ((i as u64 + 1).wrapping_mul(7919) ^ (salt & 0xff)) % 1_000_003 + 1;
            }
            let mut seen = BTreeSet::new();
            rules.retain(|r| seen.insert(r.rule_id));
            MatchCase {
                rules,
                in_port,
                frame: Frame::new(dst, src, ethertype, payload),
            }
        })
}

/// Brute force: among the rules whose every set field equals the frame's,
/// the highest priority wins and equal priorities go to the lowest id.
pub fn oracle_select(rules: &[FlowRule], in_port: u16, f: &Frame) -> Option<u64> {
    let mut best: Option<&FlowRule> = None;
    for r in rules {
        let m = &r.matcher;
        let hit = m.in_port.is_none_or(|p| p == in_port)
            && m.eth_src.is_none_or(|s| s == f.src)
            && m.eth_dst.is_none_or(|d| d == f.dst)
            && m.ethertype.is_none_or(|t| t == f.ethertype);
        if !hit {
            continue;
        }
        best = match best {
            None => Some(r),
            Some(b) if r.priority > b.priority || (r.priority == b.priority && r.rule_id < b.rule_id) => Some(r),
            keep => keep,
        };
    }
    best.map(|r| r.rule_id)
}

pub fn flow_match_case(c: &MatchCase) -> Result<(), TestCaseError> {
    let mut st = SwitchState::new(DatapathId(1), 1..=POOL_PORTS);
    for r in &c.rules {
        st.table.insert(r.clone(), 0);
    }
    let effects = switch_rx(&mut st, c.in_port, &c.frame, 1);
    let hit: Vec<&FlowRule> = st
        .table
        .entries()
        .iter()
        .map(|e| &e.rule)
        .filter(|r| r.packet_count > 0)
        .collect();
    prop_assert!(hit.len() <= 1, "more than one rule counted the frame");
    let chosen = hit.first().map(|r| r.rule_id);
    prop_assert_eq!(chosen, oracle_select(&c.rules, c.in_port, &c.frame));
    match hit.first() {
        None => prop_assert_eq!(
            effects,
            vec![Effect::PacketIn {
                in_port: c.in_port,
                frame: c.frame.clone()
            }]
        ),
        Some(r) => {
            let Action::Output(port) = r.actions[0] else {
                unreachable!()
            };
            prop_assert_eq!(
                effects,
                vec![Effect::Output {
                    port,
                    frame: c.frame.clone()
                }]
            );
            prop_assert_eq!(r.byte_count, c.frame.wire_len() as u64);
        }
    }
    Ok(())
}

pub fn check_flow_match(cases: u32) -> Check {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let ran = std::cell::Cell::new(0u32);
    let hits = std::cell::Cell::new(0u32);
    runner
        .run(&arb_match_case(), |c| {
            ran.set(ran.get() + 1);
            if oracle_select(&c.rules, c.in_port, &c.frame).is_some() {
                hits.set(hits.get() + 1);
            }
            flow_match_case(&c)
        })
        .map_err(|e| e.to_string())?;
    if ran.get() < cases {
        return Err(format!("only {} of {cases} cases ran", ran.get()));
    }
    Ok(format!("{} cases ({} matched a rule, {} missed), 0 mismatches", ran.get(), hits.get(), ran.get() - hits.get()))
}

// ---------------------------------------------------------------- deployments

pub fn quiet_config(mode: Mode, topology: &str) -> DeployConfig {
    let mut cfg = DeployConfig::new(mode, build_named(topology).expect("topology"));
    cfg.discovery_tick = None;
    cfg.warm_rounds = 0;
    cfg
}

pub fn ground_truth(spec: &NetworkSpec) -> BTreeSet<((DatapathId, u16), (DatapathId, u16))> {
    spec.directed_links()
        .into_iter()
        .map(|(a, b)| ((a.dpid, a.port), (b.dpid, b.port)))
        .collect()
}

pub fn discovered(dep: &Deployment) -> BTreeSet<((DatapathId, u16), (DatapathId, u16))> {
    dep.topology.snapshot().links().into_iter().collect()
}

/// Two rounds, then exact link-set equality; then every host transmits
/// once and must be placed at its builder attachment.
pub fn check_discovery_on(mode: Mode, topology: &str) -> Result<(), String> {
    let dep = Deployment::start(quiet_config(mode, topology)).map_err(|e| e.to_string())?;
    dep.discovery_round().map_err(|e| e.to_string())?;
    dep.discovery_round().map_err(|e| e.to_string())?;
    let want = ground_truth(dep.fabric.spec());
    let have = discovered(&dep);
    ensure(have == want, || {
        format!(
            "{mode} {topology}: {} missing, {} phantom links",
            want.difference(&have).count(),
            have.difference(&want).count()
        )
    })?;
    let hosts = dep.fabric.spec().hosts.clone();
    for (i, h) in hosts.iter().enumerate() {
        let peer = &hosts[(i + 1) % hosts.len()];
        let handle = dep.fabric.host(h.host_id).map_err(|e| e.to_string())?;
        handle
            .send(Frame::new(MacAddr::BROADCAST, h.mac, ETH_ARP, arp_request(peer.mac)))
            .map_err(|e| e.to_string())?;
        let at = (h.attachment.dpid, h.attachment.port);
        let placed = wait_until(Duration::from_secs(2), || dep.topology.snapshot().host(h.mac) == Some(at));
        ensure(placed, || {
            format!(
                "{mode} {topology}: host {} placed at {:?}, expected {at:?}",
                h.mac,
                dep.topology.snapshot().host(h.mac)
            )
        })?;
    }
    dep.settle(Duration::from_millis(30));
    let g = dep.topology.snapshot();
    for h in &hosts {
        let at = (h.attachment.dpid, h.attachment.port);
        ensure(g.host(h.mac) == Some(at), || format!("{mode} {topology}: host {} moved to {:?}", h.mac, g.host(h.mac)))?;
    }
    ensure(discovered(&dep) == want, || format!("{mode} {topology}: host traffic changed the link set"))?;
    Ok(())
}

pub fn arp_request(target: MacAddr) -> Vec<u8> {
    sdn_disagg::netsim::traffic::ArpPayload::Request { target }.encode()
}

pub fn check_discovery(modes: &[Mode]) -> Check {
    let topologies = ["fat-tree:2", "fat-tree:4", "linear:5"];
    for &mode in modes {
        for t in topologies {
            check_discovery_on(mode, t)?;
        }
    }
    Ok(format!("{} topologies x {} modes, links and hosts exact", topologies.len(), modes.len()))
}

// ---------------------------------------------------------------- paths

/// Switch-level BFS distance over the builder's adjacency.
pub fn bfs_switch_distance(spec: &NetworkSpec, from: DatapathId, to: DatapathId) -> Option<usize> {
    let adj = spec.adjacency();
    let mut dist = BTreeMap::from([(from, 0usize)]);
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            return dist.get(&u).copied();
        }
        for &v in adj.get(&u).into_iter().flatten() {
            if !dist.contains_key(&v) {
                dist.insert(v, dist[&u] + 1);
                queue.push_back(v);
            }
        }
    }
    None
}

pub fn check_paths() -> Check {
    let dep = Deployment::start(quiet_config(Mode::Internal, "fat-tree:4")).map_err(|e| e.to_string())?;
    dep.discovery_round().map_err(|e| e.to_string())?;
    dep.discovery_round().map_err(|e| e.to_string())?;
    let spec = dep.fabric.spec().clone();
    for h in &spec.hosts {
        let peer = spec.hosts.iter().find(|p| p.host_id != h.host_id).unwrap();
        dep.fabric
            .host(h.host_id)
            .and_then(|x| x.send(Frame::new(MacAddr::BROADCAST, h.mac, ETH_ARP, arp_request(peer.mac))))
            .map_err(|e| e.to_string())?;
    }
    let all_known = wait_until(Duration::from_secs(3), || dep.topology.snapshot().hosts().count() == spec.hosts.len());
    ensure(all_known, || "not every host was located".into())?;
    let g = dep.topology.snapshot();
    let links: BTreeMap<(DatapathId, u16), DatapathId> = spec
        .directed_links()
        .into_iter()
        .map(|(a, b)| ((a.dpid, a.port), b.dpid))
        .collect();
    let mut pairs = 0;
    for (i, a) in spec.hosts.iter().enumerate() {
        for b in &spec.hosts[i + 1..] {
            pairs += 1;
            let path = g.shortest_path(a.mac, b.mac).map_err(|e| format!("{} -> {}: {e}", a.mac, b.mac))?;
            let want = bfs_switch_distance(&spec, a.attachment.dpid, b.attachment.dpid)
                .ok_or("oracle found no path")?
                + 1;
            ensure(path.len() == want, || format!("{} -> {}: {} switches, oracle says {want}", a.mac, b.mac, path.len()))?;
            // The hops must be a walk along real links ending at b's port.
            ensure(path[0].dpid == a.attachment.dpid, || "path does not start at the source switch".into())?;
            for w in path.windows(2) {
                let next = links.get(&(w[0].dpid, w[0].out_port));
                ensure(next == Some(&w[1].dpid), || format!("hop {:?} does not lead to {}", w[0], w[1].dpid))?;
            }
            let last = path.last().unwrap();
            ensure((last.dpid, last.out_port) == (b.attachment.dpid, b.attachment.port), || {
                "path does not end at the destination port".into()
            })?;
        }
    }
    Ok(format!("{pairs} host pairs match the oracle"))
}

// ---------------------------------------------------------------- expiry

pub fn data_frame(src: MacAddr, dst: MacAddr, tag: &[u8]) -> Frame {
    // Leading byte outside the traffic generator's kinds, so hosts just keep it.
    let mut payload = b"script:".to_vec();
    payload.extend_from_slice(tag);
    Frame::new(dst, src, ETH_DATA, payload)
}

fn is_flow_event(e: &Event, want: FlowRuleOp, dpid: DatapathId, dst: MacAddr) -> bool {
    matches!(&e.body, EventBody::FlowRuleEvent { op, dpid: d, rule }
        if *op == want && *d == dpid && rule.matcher.eth_dst == Some(dst))
}

/// Reactive install with a 1 s hard timeout: the rules disappear, the log
/// shows their removal, and the next packet is raised to the core and
/// triggers a fresh install.
pub fn check_expiry(mode: Mode) -> Check {
    let mut cfg = quiet_config(mode, "linear:3");
    cfg.warm_rounds = 2;
    cfg.fwd.install = Install::Direct;
    cfg.fwd.hard_timeout_s = 1;
    let dep = Deployment::start(cfg).map_err(|e| e.to_string())?;
    let h1 = dep.fabric.host(1).map_err(|e| e.to_string())?;
    let h2 = dep.fabric.host(2).map_err(|e| e.to_string())?;
    ensure(h1.resolve(h2.mac, Duration::from_secs(2)).map_err(|e| e.to_string())?, || "resolve failed".into())?;
    let delivered = h2.delivered();
    h1.send(data_frame(h1.mac, h2.mac, b"first")).map_err(|e| e.to_string())?;
    ensure(wait_until(Duration::from_secs(2), || h2.delivered() > delivered), || "first frame lost".into())?;
    dep.settle(Duration::from_millis(20));

    let switches: Vec<DatapathId> = dep.fabric.spec().switches.iter().map(|s| s.dpid).collect();
    let mut installed = Vec::new();
    for &d in &switches {
        let table = dep.fabric.flow_table(d).map_err(|e| e.to_string())?;
        let ids: Vec<u64> = table
            .iter()
            .filter(|e| e.rule.matcher.eth_dst == Some(h2.mac))
            .map(|e| e.rule.rule_id)
            .collect();
        ensure(ids.len() == 1, || format!("{d}: expected one rule towards h2, found {}", ids.len()))?;
        installed.push((d, ids[0]));
    }
    let gone = wait_until(Duration::from_secs(3), || {
        switches
            .iter()
            .all(|&d| dep.fabric.flow_table(d).map(|t| t.is_empty()).unwrap_or(false))
    });
    ensure(gone, || "rules still present 3 s after a 1 s timeout".into())?;
    dep.settle(Duration::from_millis(20));
    let log = dep.controller.event_log();
    for &(d, id) in &installed {
        let removed = log.iter().any(|e| {
            matches!(&e.body, EventBody::FlowRuleEvent { op: FlowRuleOp::Removed, dpid, rule }
                if *dpid == d && rule.rule_id == id)
        });
        ensure(removed, || format!("{d}: no REMOVED event for rule {id}"))?;
    }

    let mark = dep.controller.next_seq();
    let delivered = h2.delivered();
    h1.send(data_frame(h1.mac, h2.mac, b"second")).map_err(|e| e.to_string())?;
    ensure(wait_until(Duration::from_secs(2), || h2.delivered() > delivered), || "second frame lost".into())?;
    dep.settle(Duration::from_millis(20));
    let after = dep.controller.events_since(mark);
    let exception = after
        .iter()
        .find(|e| {
            matches!(&e.body, EventBody::PacketException { dpid, frame, .. }
                if *dpid == DatapathId(1) && frame.dst == h2.mac && frame.ethertype == ETH_DATA)
        })
        .ok_or("no packet exception after expiry")?;
    for &d in &switches {
        let readded = after
            .iter()
            .any(|e| e.seq > exception.seq && is_flow_event(e, FlowRuleOp::Added, d, h2.mac));
        ensure(readded, || format!("{d}: no re-install after the exception"))?;
        let table = dep.fabric.flow_table(d).map_err(|e| e.to_string())?;
        ensure(table.iter().any(|e| e.rule.matcher.eth_dst == Some(h2.mac)), || format!("{d}: rule not back in the table"))?;
    }
    Ok(format!(
        "{mode}: {} rules expired and were reinstalled after exception seq {}",
        installed.len(),
        exception.seq
    ))
}

// ---------------------------------------------------------------- backends

fn numbered_body(i: u64) -> EventBody {
    let dpid = DatapathId(i);
    match i % 4 {
        0 => EventBody::TopologyDevice { dpid, up: true },
        1 => EventBody::TopologyPort { dpid, port: 1, up: false },
        2 => EventBody::TopologyLink {
            src_dpid: dpid,
            src_port: 1,
            dst_dpid: DatapathId(i + 1),
            dst_port: 2,
            up: true,
        },
        _ => EventBody::PacketException {
            dpid,
            in_port: 1,
            frame: Frame::new(MacAddr::BROADCAST, MacAddr::host(1), ETH_ARP, i.to_be_bytes().to_vec()),
        },
    }
}

fn drain(src: &mut dyn EventSource, want: usize, timeout: Duration) -> Vec<Event> {
    let deadline = Instant::now() + timeout;
    let mut out = Vec::new();
    while out.len() < want && Instant::now() < deadline {
        if let Ok(Some(e)) = src.next_event(Duration::from_millis(50)) {
            out.push(e);
        }
    }
    out
}

/// Seq must strictly increase within each kind.
pub fn order_violations(events: &[Event]) -> usize {
    let mut last: BTreeMap<EventKind, u64> = BTreeMap::new();
    let mut bad = 0;
    for e in events {
        if let Some(prev) = last.insert(e.kind(), e.seq) {
            if e.seq <= prev {
                bad += 1;
            }
        }
    }
    bad
}

pub fn check_broker_replay() -> Result<(), String> {
    let broker = Arc::new(Broker::new());
    let core = Controller::new(CoreConfig::new(Distribution::Broker(broker.clone())));
    let seqs: Vec<u64> = (0..200).map(|i| core.raise(numbered_body(i))).collect();
    // A consumer that shows up afterwards still sees everything, in order.
    let api: Arc<dyn BrokerApi> = broker.clone();
    let mut late = BrokerConsumer::new(api, KindSet::all(), ConsumerConfig::new("late")).map_err(|e| e.to_string())?;
    let got = drain(&mut late, seqs.len(), Duration::from_secs(5));
    let got_seqs: Vec<u64> = got.iter().map(|e| e.seq).collect();
    ensure(got_seqs == seqs, || format!("replay returned {} of {} events or out of order", got.len(), seqs.len()))?;
    core.shutdown();
    Ok(())
}

pub fn check_p2p_no_history() -> Result<(), String> {
    let hub = Arc::new(Hub::default());
    let core = Controller::new(CoreConfig::new(Distribution::P2p(hub.clone())));
    for i in 0..50 {
        core.raise(numbered_body(i));
    }
    let mut sub = hub.subscribe(KindSet::all()).map_err(|e| e.to_string())?;
    let first_live = core.raise(numbered_body(50));
    for i in 51..60 {
        core.raise(numbered_body(i));
    }
    let got = drain(&mut sub, 10, Duration::from_secs(2));
    ensure(got.len() == 10, || format!("subscriber got {} of 10 live events", got.len()))?;
    ensure(got.iter().all(|e| e.seq >= first_live), || "an event from before subscribe was delivered".into())?;
    ensure(sub.next_event(Duration::from_millis(50)) == Ok(None), || "extra events delivered".into())?;
    core.shutdown();
    Ok(())
}

/// Four producers raise 1000 events each; broker and p2p consumers must see
/// all 4000 with seq increasing per topic and per stream.
pub fn check_stress(mode: Mode) -> Result<String, String> {
    const PER: u64 = 1000;
    let hub = Arc::new(Hub::default());
    let broker = Arc::new(Broker::new());
    let dist = match mode {
        Mode::P2p => Distribution::P2p(hub.clone()),
        Mode::Broker => Distribution::Broker(broker.clone()),
        Mode::Internal => return Err("stress applies to p2p and broker".into()),
    };
    let core = Controller::new(CoreConfig::new(dist));
    // One stream per kind plus one for everything.
    let mut sources: Vec<Box<dyn EventSource>> = Vec::new();
    let mut kinds: Vec<KindSet> = EventKind::ALL.iter().map(|k| KindSet::EMPTY.with(*k)).collect();
    kinds.push(KindSet::all());
    for (i, k) in kinds.iter().enumerate() {
        sources.push(match mode {
            Mode::P2p => Box::new(hub.subscribe(*k).map_err(|e| e.to_string())?),
            _ => {
                let api: Arc<dyn BrokerApi> = broker.clone();
                Box::new(BrokerConsumer::new(api, *k, ConsumerConfig::new(&format!("c{i}"))).map_err(|e| e.to_string())?)
            }
        });
    }
    let producers: Vec<_> = (0..4u64)
        .map(|p| {
            let core = core.clone();
            std::thread::spawn(move || {
                for i in 0..PER {
                    core.raise(numbered_body(p * PER + i));
                }
            })
        })
        .collect();
    for t in producers {
        t.join().map_err(|_| "producer panicked")?;
    }
    let total = (4 * PER) as usize;
    let all = drain(sources.last_mut().unwrap().as_mut(), total, Duration::from_secs(10));
    ensure(all.len() == total, || format!("{mode}: all-kinds stream got {} of {total}", all.len()))?;
    let mut violations = order_violations(&all);
    let mut per_kind = 0;
    for (src, k) in sources.iter_mut().zip(&kinds).take(EventKind::ALL.len()) {
        let want = all.iter().filter(|e| k.contains(e.kind())).count();
        let got = drain(src.as_mut(), want, Duration::from_secs(10));
        ensure(got.len() == want, || format!("{mode}: {k:?} stream got {} of {want}", got.len()))?;
        violations += got.windows(2).filter(|w| w[1].seq <= w[0].seq).count();
        per_kind += got.len();
    }
    let mut seqs: Vec<u64> = all.iter().map(|e| e.seq).collect();
    seqs.sort_unstable();
    seqs.dedup();
    ensure(seqs.len() == total, || format!("{mode}: duplicate or missing seqs"))?;
    ensure(violations == 0, || format!("{mode}: {violations} order violations"))?;
    core.shutdown();
    Ok(format!("{mode}: {total} events, {per_kind} on per-kind streams, 0 order violations"))
}

pub fn check_backends() -> Check {
    check_broker_replay()?;
    check_p2p_no_history()?;
    let a = check_stress(Mode::Broker)?;
    let b = check_stress(Mode::P2p)?;
    Ok(format!("replay complete, no p2p history; {a}; {b}"))
}

// ---------------------------------------------------------------- equivalence

/// Rules with ids and counters stripped, sorted.
pub fn rule_multiset(dep: &Deployment) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for sw in &dep.fabric.spec().switches {
        for e in dep.fabric.flow_table(sw.dpid).map_err(|e| e.to_string())? {
            let r = e.rule;
            out.push(format!(
                "{} prio={} match={:?} actions={:?} timeout={}",
                sw.dpid, r.priority, r.matcher, r.actions, r.hard_timeout_s
            ));
        }
    }
    out.sort();
    Ok(out)
}

/// (dst, src, ethertype, payload)
pub type SeenFrame = (MacAddr, MacAddr, u16, Vec<u8>);

/// Every frame each host received, sorted per host.
pub fn delivered_frames(dep: &Deployment) -> BTreeMap<u32, Vec<SeenFrame>> {
    dep.fabric
        .hosts()
        .map(|h| {
            let mut v: Vec<_> = h.inbox().into_iter().map(|f| (f.dst, f.src, f.ethertype, f.payload)).collect();
            v.sort();
            (h.id, v)
        })
        .collect()
}

pub const SCRIPT_PAIRS: [(u32, u32); 6] = [(1, 16), (16, 1), (6, 11), (1, 6), (11, 16), (6, 1)];

/// Fixed traffic on fat-tree:4: address resolution, then numbered frames,
/// one at a time, each waited for at the receiver.
pub fn run_script(dep: &Deployment) -> Result<(), String> {
    for round in 0..3u8 {
        for (a, b) in SCRIPT_PAIRS {
            let ha = dep.fabric.host(a).map_err(|e| e.to_string())?;
            let hb = dep.fabric.host(b).map_err(|e| e.to_string())?;
            let ok = ha.resolve(hb.mac, Duration::from_secs(2)).map_err(|e| e.to_string())?;
            ensure(ok, || format!("h{a} could not resolve h{b}"))?;
            let before = hb.delivered();
            ha.send(data_frame(ha.mac, hb.mac, &[a as u8, b as u8, round]))
                .map_err(|e| e.to_string())?;
            ensure(wait_until(Duration::from_secs(2), || hb.delivered() > before), || {
                format!("frame h{a} -> h{b} round {round} lost")
            })?;
        }
    }
    dep.settle(Duration::from_millis(50));
    Ok(())
}

pub struct ScriptOutcome {
    pub rules: Vec<String>,
    pub frames: BTreeMap<u32, Vec<SeenFrame>>,
}

pub fn script_outcome(mode: Mode, install: Install) -> Result<ScriptOutcome, String> {
    let mut cfg = quiet_config(mode, "fat-tree:4");
    cfg.warm_rounds = 2;
    cfg.fwd.install = install;
    cfg.fwd.hard_timeout_s = 60;
    let dep = Deployment::start(cfg).map_err(|e| e.to_string())?;
    ensure(dep.topology_complete(), || format!("{mode}: discovery incomplete"))?;
    run_script(&dep)?;
    Ok(ScriptOutcome {
        rules: rule_multiset(&dep)?,
        frames: delivered_frames(&dep),
    })
}

pub fn compare_outcomes(label: &str, a: &ScriptOutcome, b: &ScriptOutcome) -> Result<(), String> {
    ensure(a.rules == b.rules, || {
        format!("{label}: installed rules differ ({} vs {} rules)", a.rules.len(), b.rules.len())
    })?;
    ensure(a.frames == b.frames, || format!("{label}: delivered frames differ"))?;
    Ok(())
}

pub fn check_mode_equivalence() -> Check {
    let base = script_outcome(Mode::Internal, Install::Direct)?;
    ensure(!base.rules.is_empty(), || "script installed no rules".into())?;
    for mode in [Mode::P2p, Mode::Broker] {
        let other = script_outcome(mode, Install::Direct)?;
        compare_outcomes(&format!("internal vs {mode}"), &base, &other)?;
    }
    let frames: usize = base.frames.values().map(Vec::len).sum();
    Ok(format!("{} rules and {frames} delivered frames identical across modes", base.rules.len()))
}
