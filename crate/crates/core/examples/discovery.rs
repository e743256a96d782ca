//! Topology discovery on a fat-tree: probe rounds build the link set,
//! which is checked against the builder's wiring; then a link is cut and
//! the map follows.
//!
//!     cargo run --example discovery -- fat-tree:4

use std::collections::BTreeSet;

use sdn_disagg::controller::Mode;
use sdn_disagg::deploy::{DeployConfig, Deployment};
use sdn_disagg::netsim::build_named;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "fat-tree:4".into());
    let spec = build_named(&name)?;
    let truth: BTreeSet<_> = spec
        .directed_links()
        .into_iter()
        .map(|(a, b)| ((a.dpid, a.port), (b.dpid, b.port)))
        .collect();

    let mut cfg = DeployConfig::new(Mode::P2p, spec.clone());
    cfg.discovery_tick = None;
    cfg.warm_rounds = 0;
    let dep = Deployment::start(cfg)?;
    for round in 1..=2 {
        let probes = dep.discovery_round()?;
        let found: BTreeSet<_> = dep.topology.snapshot().links().into_iter().collect();
        println!(
            "round {round}: {probes} probes sent, {} of {} directed links found, phantom links: {}",
            found.intersection(&truth).count(),
            truth.len(),
            found.difference(&truth).count()
        );
    }

    let link = spec.links[0];
    dep.fabric.set_link(link.0, link.1, false)?;
    dep.settle(std::time::Duration::from_millis(50));
    let g = dep.topology.snapshot();
    println!(
        "cut {}:{} <-> {}:{}; map now has {} directed links",
        link.0.dpid, link.0.port, link.1.dpid, link.1.port, g.link_count()
    );

    // Hosts are placed on their first frame.
    for h in dep.fabric.hosts().take(3) {
        h.resolve(dep.fabric.hosts().last().unwrap().mac, std::time::Duration::from_secs(1))?;
    }
    dep.settle(std::time::Duration::from_millis(20));
    for (mac, at) in dep.topology.snapshot().hosts() {
        println!("host {mac} at {}:{}", at.0, at.1);
    }
    Ok(())
}
