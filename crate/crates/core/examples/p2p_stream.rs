//! The point-to-point backend: per-subscriber push streams filtered by
//! event kind, no retention for late subscribers, and bounded queues that
//! drop the oldest event when a subscriber falls behind.
//!
//!     cargo run --example p2p_stream

use std::sync::Arc;
use std::time::Duration;

use sdn_disagg::controller::{Controller, CoreConfig, Distribution};
use sdn_disagg::p2p::{Hub, P2pServer, RemoteSubscription};
use sdn_disagg::source::EventSource;
use sdn_disagg::wire::{decode_event, DatapathId, EventBody, EventKind, KindSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A tiny queue bound so the drop policy shows.
    let hub = Arc::new(Hub::new(4));
    let server = P2pServer::start(hub.clone(), "127.0.0.1:0")?;
    let core = Controller::new(CoreConfig::new(Distribution::P2p(hub.clone())));

    core.raise(EventBody::TopologyDevice { dpid: DatapathId(1), up: true });
    println!("raised one event before anyone subscribed; pushed to {} streams", hub.subscriber_count());

    let ports = hub.subscribe(KindSet::EMPTY.with(EventKind::Port))?;
    let mut remote = RemoteSubscription::connect(server.addr(), KindSet::EMPTY.with(EventKind::Device))?;
    while hub.subscriber_count() < 2 {
        std::thread::sleep(Duration::from_millis(1));
    }

    // Paced so the remote reader keeps up; the local one never reads.
    for n in 2..=9u64 {
        core.raise(EventBody::TopologyDevice { dpid: DatapathId(n), up: true });
        core.raise(EventBody::TopologyPort { dpid: DatapathId(n), port: 1, up: true });
        std::thread::sleep(Duration::from_millis(5));
    }

    let mut seen = Vec::new();
    while let Ok(Some(e)) = remote.next_event(Duration::from_millis(100)) {
        seen.push(e.seq);
    }
    println!("remote device subscriber got seqs {seen:?}");

    // The local port subscriber never read, so only the newest 4 are left.
    let mut kept = Vec::new();
    while let Some(bytes) = ports.try_recv() {
        kept.push(decode_event(&bytes)?.seq);
    }
    println!("slow port subscriber kept {kept:?}, dropped {}", ports.dropped());
    Ok(())
}
