//! The broker backend: the core publishes events to per-kind topics, a
//! consumer on another socket replays them from offset 0, and a second
//! consumer resumes from its committed offsets.
//!
//!     cargo run --example broker_replay

use std::sync::Arc;
use std::time::Duration;

use sdn_disagg::broker::{Broker, BrokerApi, BrokerConsumer, BrokerServer, ConsumerConfig, RemoteBroker};
use sdn_disagg::controller::{Controller, CoreConfig, Distribution};
use sdn_disagg::source::EventSource;
use sdn_disagg::wire::{DatapathId, EventBody, EventKind, KindSet};

fn drain(c: &mut BrokerConsumer) -> Vec<u64> {
    let mut seqs = Vec::new();
    while let Ok(Some(e)) = c.next_event(Duration::from_millis(50)) {
        seqs.push(e.seq);
    }
    seqs
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let broker = Arc::new(Broker::new());
    let server = BrokerServer::start(broker.clone(), "127.0.0.1:0")?;
    println!("broker listening on {}", server.addr());

    let core = Controller::new(CoreConfig::new(Distribution::Broker(broker.clone())));
    for n in 1..=6u64 {
        core.raise(EventBody::TopologyDevice { dpid: DatapathId(n), up: true });
        core.raise(EventBody::TopologyPort { dpid: DatapathId(n), port: 1, up: n % 2 == 0 });
    }
    for t in broker.topics() {
        println!("topic {t}: {} records", broker.len(&t));
    }

    let remote: Arc<dyn BrokerApi> = Arc::new(RemoteBroker::connect(server.addr())?);
    let kinds: KindSet = [EventKind::Device, EventKind::Port].into_iter().collect();

    // Replay from 0: the whole history, merged across topics by seq.
    let mut replay = BrokerConsumer::new(remote.clone(), kinds, ConsumerConfig::new("replay"))?;
    println!("replay from 0: seqs {:?}", drain(&mut replay));

    // Read a little, commit, and come back later.
    let mut first = BrokerConsumer::new(remote.clone(), kinds, ConsumerConfig::new("resumer"))?;
    let head: Vec<u64> = (0..4).filter_map(|_| first.next_event(Duration::from_millis(50)).ok().flatten()).map(|e| e.seq).collect();
    first.commit_delivered()?;
    drop(first);
    println!("first session read {head:?} and committed");

    core.raise(EventBody::TopologyDevice { dpid: DatapathId(99), up: false });
    let mut cfg = ConsumerConfig::new("resumer");
    cfg.resume = true;
    let mut second = BrokerConsumer::new(remote, kinds, cfg)?;
    println!("resumed session reads {:?}", drain(&mut second));
    println!("committed offsets: {:?}", second.positions());
    Ok(())
}
