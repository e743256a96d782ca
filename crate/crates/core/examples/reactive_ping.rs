//! Pings across a network under reactive forwarding and shows what the
//! forwarding service did: RTTs, packet events, and installed rules.
//!
//!     cargo run --example reactive_ping -- --mode p2p --install direct
//!     cargo run --example reactive_ping -- --mode broker --install none --topology fat-tree:4
//!     cargo run --example reactive_ping -- --mode p2p --install rest --sockets

use std::time::Duration;

use clap::Parser;
use sdn_disagg::bench::StatsSummary;
use sdn_disagg::controller::Mode;
use sdn_disagg::deploy::{DeployConfig, Deployment, Transport};
use sdn_disagg::netsim::{build_named, PingParams};
use sdn_disagg::services::Install;

#[derive(Parser)]
struct Opts {
    #[arg(long, default_value = "p2p")]
    mode: Mode,
    #[arg(long, default_value = "direct")]
    install: Install,
    #[arg(long, default_value_t = 10)]
    hard_timeout_s: u32,
    #[arg(long, default_value = "linear:3")]
    topology: String,
    #[arg(long, default_value_t = 20)]
    count: u32,
    /// Run the backend, the direct channel and REST over loopback sockets.
    #[arg(long)]
    sockets: bool,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let o = Opts::parse();
    let mut cfg = DeployConfig::new(o.mode, build_named(&o.topology)?);
    cfg.fwd.install = o.install;
    cfg.fwd.hard_timeout_s = o.hard_timeout_s;
    if o.sockets {
        cfg.transport = Transport::Sockets;
    }
    let dep = Deployment::start(cfg)?;
    println!("{} mode, install={}, topology complete: {}", o.mode, o.install, dep.topology_complete());

    let hosts: Vec<_> = dep.fabric.hosts().map(|h| (h.id, h.mac)).collect();
    let (src, dst) = (hosts[0], hosts[hosts.len() - 1]);
    let samples = dep.fabric.host(src.0)?.ping(
        dst.1,
        PingParams { count: o.count, interval: Duration::from_millis(5), ..PingParams::default() },
    )?;
    for s in samples.iter().take(5) {
        println!("h{} -> h{} seq={} rtt={:?}", src.0, dst.0, s.seq, s.rtt);
    }
    let rtts: Vec<_> = samples.iter().map(|s| s.rtt).collect();
    let st = StatsSummary::from_rtts(&rtts);
    println!("{} pings: mean {:.0} us, median {:.0} us, lost {}", o.count, st.mean, st.median, st.lost);
    println!("forwarder: {:?}", dep.forwarder.stats());

    dep.settle(Duration::from_millis(20));
    for sw in &dep.fabric.spec().switches {
        for e in dep.fabric.flow_table(sw.dpid)? {
            let r = &e.rule;
            println!("{} rule {} prio {} {:?} -> {:?} timeout {}s", sw.dpid, r.rule_id, r.priority, r.matcher, r.actions, r.hard_timeout_s);
        }
    }
    Ok(())
}
