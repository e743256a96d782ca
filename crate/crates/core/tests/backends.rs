mod common;

use std::sync::Arc;
use std::time::Duration;

use sdn_disagg::broker::{Broker, BrokerApi, BrokerConsumer, BrokerServer, ConsumerConfig, RemoteBroker};
use sdn_disagg::controller::Mode;
use sdn_disagg::p2p::{Hub, P2pServer, RemoteSubscription};
use sdn_disagg::source::EventSource;
use sdn_disagg::wire::*;

#[test]
fn broker_replays_complete_history() {
    common::check_broker_replay().unwrap();
}

#[test]
fn p2p_has_no_history() {
    common::check_p2p_no_history().unwrap();
}

#[test]
fn four_producers_broker() {
    common::check_stress(Mode::Broker).unwrap();
}

#[test]
fn four_producers_p2p() {
    common::check_stress(Mode::P2p).unwrap();
}

fn device(seq: u64) -> Vec<u8> {
    encode_event(&Event::new(seq, 0, EventBody::TopologyDevice { dpid: DatapathId(seq), up: true })).unwrap()
}

#[test]
fn remote_broker_matches_local() {
    let broker = Arc::new(Broker::new());
    let mut server = BrokerServer::start(broker.clone(), "127.0.0.1:0").unwrap();
    let remote = RemoteBroker::connect(server.addr()).unwrap();
    for i in 0..20 {
        assert_eq!(remote.publish("events.device", &device(i)).unwrap(), i);
    }
    let local = broker.poll("x", "events.device", 5, 100, Duration::ZERO).unwrap();
    let over = remote.poll("x", "events.device", 5, 100, Duration::ZERO).unwrap();
    assert_eq!(local.len(), 15);
    assert_eq!(
        local.iter().map(|r| (&r.bytes, r.offset)).collect::<Vec<_>>(),
        over.iter().map(|r| (&r.bytes, r.offset)).collect::<Vec<_>>()
    );
    remote.commit("x", "events.device", 7).unwrap();
    assert_eq!(broker.committed("x", "events.device").unwrap(), 7);
    assert!(remote.poll("x", "events.device", 21, 1, Duration::ZERO).is_err());
    server.stop();
}

#[test]
fn resumed_consumer_continues_from_commit() {
    let broker = Arc::new(Broker::new());
    for i in 0..10 {
        broker.publish("events.device", &device(i)).unwrap();
    }
    let api: Arc<dyn BrokerApi> = broker.clone();
    let kinds = KindSet::EMPTY.with(EventKind::Device);
    let mut first = BrokerConsumer::new(api.clone(), kinds, ConsumerConfig::new("svc")).unwrap();
    for want in 0..4 {
        assert_eq!(first.next_event(Duration::from_secs(1)).unwrap().unwrap().seq, want);
    }
    first.commit_delivered().unwrap();
    drop(first);
    let mut cfg = ConsumerConfig::new("svc");
    cfg.resume = true;
    let mut second = BrokerConsumer::new(api, kinds, cfg).unwrap();
    assert_eq!(second.next_event(Duration::from_secs(1)).unwrap().unwrap().seq, 4);
}

#[test]
fn remote_p2p_stream_filters_kinds() {
    let hub = Arc::new(Hub::default());
    let mut server = P2pServer::start(hub.clone(), "127.0.0.1:0").unwrap();
    let mut sub = RemoteSubscription::connect(server.addr(), KindSet::EMPTY.with(EventKind::Device)).unwrap();
    assert!(common::wait_until(Duration::from_secs(2), || hub.subscriber_count() == 1));
    let port = encode_event(&Event::new(1, 0, EventBody::TopologyPort { dpid: DatapathId(1), port: 1, up: true })).unwrap();
    hub.push(EventKind::Port, port.into());
    hub.push(EventKind::Device, device(2).into());
    let got = sub.next_event(Duration::from_secs(2)).unwrap().unwrap();
    assert_eq!(got.seq, 2);
    assert_eq!(sub.next_event(Duration::from_millis(50)).unwrap(), None);
    server.stop();
}

#[test]
fn slow_p2p_subscriber_loses_oldest() {
    let hub = Arc::new(Hub::new(3));
    let sub = hub.subscribe(KindSet::all()).unwrap();
    for i in 1..=5 {
        hub.push(EventKind::Device, device(i).into());
    }
    assert_eq!(sub.dropped(), 2);
    let seqs: Vec<u64> = std::iter::from_fn(|| sub.try_recv())
        .map(|b| decode_event(&b).unwrap().seq)
        .collect();
    assert_eq!(seqs, vec![3, 4, 5]);
}
