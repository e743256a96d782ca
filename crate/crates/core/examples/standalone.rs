//! The services as a separate process. `core` starts the fabric, the
//! controller core and its backend, direct-call and REST listeners, then
//! launches `services` as a child process that reaches all of them over
//! loopback sockets and does discovery and forwarding from there.
//!
//!     cargo run --example standalone -- core --mode broker --install rest
//!
//! The child can also be started by hand against a running core:
//!
//!     standalone services --mode p2p --install direct --hard-timeout-s 10 \
//!         --core 127.0.0.1:PORT --backend 127.0.0.1:PORT [--rest http://127.0.0.1:PORT]

use std::net::SocketAddr;
use std::process::{Child, Command};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use sdn_disagg::bench::StatsSummary;
use sdn_disagg::broker::{Broker, BrokerApi, BrokerConsumer, BrokerServer, ConsumerConfig, RemoteBroker};
use sdn_disagg::controller::{
    ControlApi, Controller, CoreConfig, Distribution, Mode, RemoteControl, RestControl, RestServer, RpcServer,
};
use sdn_disagg::netsim::{build_named, Fabric, FabricConfig, PingParams};
use sdn_disagg::p2p::{Hub, P2pServer, RemoteSubscription};
use sdn_disagg::services::{
    DiscoveryTicker, Forwarder, FwdConfig, Install, ServiceRunner, TopologyConfig, TopologyService,
};
use sdn_disagg::source::EventSource;
use sdn_disagg::wire::KindSet;

#[derive(Parser)]
struct Cli {
    #[command(subcommand)]
    role: Role,
}

#[derive(Subcommand)]
enum Role {
    Core {
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
    },
    Services {
        #[arg(long)]
        mode: Mode,
        #[arg(long, default_value = "direct")]
        install: Install,
        #[arg(long, default_value_t = 10)]
        hard_timeout_s: u32,
        /// Direct-call listener of the core.
        #[arg(long)]
        core: SocketAddr,
        /// P2P stream server or broker server.
        #[arg(long)]
        backend: SocketAddr,
        /// REST base URL, needed with `--install rest`.
        #[arg(long)]
        rest: Option<String>,
    },
}

struct KillOnDrop(Child);

impl Drop for KillOnDrop {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn run_core(mode: Mode, install: Install, hard_timeout_s: u32, topology: &str, count: u32) -> Result<(), Box<dyn std::error::Error>> {
    if mode == Mode::Internal {
        return Err("internal mode runs services inside the core; pick p2p or broker".into());
    }
    let fabric = Fabric::start(build_named(topology)?, FabricConfig::default())?;
    let hub = Arc::new(Hub::default());
    let broker = Arc::new(Broker::new());
    let (dist, backend) = match mode {
        Mode::P2p => {
            let s = P2pServer::start(hub.clone(), "127.0.0.1:0")?;
            (Distribution::P2p(hub.clone()), Backend::P2p(s))
        }
        _ => {
            let s = BrokerServer::start(broker.clone(), "127.0.0.1:0")?;
            (Distribution::Broker(broker.clone()), Backend::Broker(s))
        }
    };
    let core = Controller::new(CoreConfig::new(dist));
    let api: Arc<dyn ControlApi> = Arc::new(core.clone());
    let rpc = RpcServer::start(api.clone(), "127.0.0.1:0")?;
    let rest = RestServer::start(api, &RestServer::addr_from_env())?;
    core.connect_all(fabric.take_channels())?;
    println!("core: direct {} backend {} rest {}", rpc.addr(), backend.addr(), rest.base_url());

    let mut child = Command::new(std::env::current_exe()?);
    child.args(["services", "--mode", mode.name(), "--install", &install.to_string()]);
    child.args(["--hard-timeout-s", &hard_timeout_s.to_string()]);
    child.args(["--core", &rpc.addr().to_string(), "--backend", &backend.addr().to_string()]);
    child.args(["--rest", &rest.base_url()]);
    let child = KillOnDrop(child.spawn()?);
    println!("core: services running as pid {}", child.0.id());

    let mut hosts: Vec<_> = fabric.hosts().map(|h| (h.id, h.mac)).collect();
    hosts.sort();
    let (src, dst) = (hosts[0], hosts[hosts.len() - 1]);
    let h = fabric.host(src.0)?;
    let started = Instant::now();
    while !h.resolve(dst.1, Duration::from_millis(500))? {
        if started.elapsed() > Duration::from_secs(10) {
            return Err("services never started forwarding".into());
        }
    }
    println!("core: h{} reached h{} after {:?}", src.0, dst.0, started.elapsed());
    let samples = h.ping(dst.1, PingParams { count, interval: Duration::from_millis(5), ..PingParams::default() })?;
    let st = StatsSummary::from_rtts(&samples.iter().map(|s| s.rtt).collect::<Vec<_>>());
    println!("core: {count} pings, mean {:.0} us, median {:.0} us, lost {}", st.mean, st.median, st.lost);
    let m = core.metrics();
    println!("core: {} events raised, {} flow mods applied", m.events, m.flow_mods);
    for sw in &fabric.spec().switches {
        println!("core: {} holds {} rules", sw.dpid, fabric.flow_table(sw.dpid)?.len());
    }
    drop(child);
    fabric.shutdown();
    core.shutdown();
    Ok(())
}

enum Backend {
    P2p(P2pServer),
    Broker(BrokerServer),
}

impl Backend {
    fn addr(&self) -> SocketAddr {
        match self {
            Backend::P2p(s) => s.addr(),
            Backend::Broker(s) => s.addr(),
        }
    }
}

fn run_services(
    mode: Mode,
    install: Install,
    hard_timeout_s: u32,
    core: SocketAddr,
    backend: SocketAddr,
    rest: Option<String>,
) -> Result<(), Box<dyn std::error::Error>> {
    let control: Arc<dyn ControlApi> = Arc::new(RemoteControl::connect(core)?);
    let topology = Arc::new(TopologyService::new(control.clone(), TopologyConfig::default()));
    let installer: Arc<dyn ControlApi> = match (install, rest) {
        (Install::Rest, Some(url)) => Arc::new(RestControl::new(&url, control.clone())),
        (Install::Rest, None) => return Err("--install rest needs --rest".into()),
        _ => control.clone(),
    };
    let cfg = FwdConfig { install, hard_timeout_s, ..FwdConfig::default() };
    let forwarder = Arc::new(Forwarder::new(cfg, topology.clone(), control, installer));
    let source = |name: &str, kinds: KindSet| -> Result<Box<dyn EventSource>, Box<dyn std::error::Error>> {
        Ok(match mode {
            Mode::P2p => Box::new(RemoteSubscription::connect(backend, kinds)?),
            _ => {
                let api: Arc<dyn BrokerApi> = Arc::new(RemoteBroker::connect(backend)?);
                Box::new(BrokerConsumer::new(api, kinds, ConsumerConfig::new(name))?)
            }
        })
    };
    let _topo = ServiceRunner::spawn("topology", source("topology", TopologyService::kinds())?, topology.clone());
    let _fwd = ServiceRunner::spawn("forwarding", source("forwarding", Forwarder::kinds())?, forwarder);
    topology.sync()?;
    let _ticker = DiscoveryTicker::spawn(topology, Duration::from_secs(1));
    eprintln!("services: {mode} mode, install {install}, hard timeout {hard_timeout_s} s");
    loop {
        std::thread::park();
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    match Cli::parse().role {
        Role::Core { mode, install, hard_timeout_s, topology, count } => {
            run_core(mode, install, hard_timeout_s, &topology, count)
        }
        Role::Services { mode, install, hard_timeout_s, core, backend, rest } => {
            run_services(mode, install, hard_timeout_s, core, backend, rest)
        }
    }
}
