//! Assembles a complete run: simulated fabric, controller core with its
//! distribution backend, and the topology and forwarding services wired for
//! the chosen mode. Shared by the bench harness, tests and examples.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::broker::{Broker, BrokerApi, BrokerConsumer, BrokerServer, ConsumerConfig, RemoteBroker};
use crate::controller::{
    ControlApi, Controller, CoreConfig, Distribution, Mode, RemoteControl, RestControl,
    RestServer, RpcServer,
};
use crate::netsim::{Fabric, FabricConfig, NetsimError, NetworkSpec};
use crate::p2p::{Hub, P2pServer, RemoteSubscription, DEFAULT_QUEUE_BOUND};
use crate::services::{
    DiscoveryTicker, Forwarder, FwdConfig, Install, ServiceRunner, Stack, TopologyConfig,
    TopologyService,
};
use crate::source::EventSource;
use crate::wire::KindSet;

/// Where the external services live relative to the core.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    /// Same process, channels and direct calls.
    InProcess,
    /// Loopback sockets for the backend, the direct channel and REST.
    Sockets,
}

#[derive(Debug, Clone)]
pub struct DeployConfig {
    pub mode: Mode,
    pub network: NetworkSpec,
    pub fabric: FabricConfig,
    pub fwd: FwdConfig,
    pub transport: Transport,
    pub broker_poll_interval: Duration,
    pub p2p_queue_bound: usize,
    /// Periodic discovery; `None` leaves rounds to the caller.
    pub discovery_tick: Option<Duration>,
    /// Discovery rounds run before `start` returns.
    pub warm_rounds: u32,
    pub record_log: bool,
}

impl DeployConfig {
    pub fn new(mode: Mode, network: NetworkSpec) -> DeployConfig {
        DeployConfig {
            mode,
            network,
            fabric: FabricConfig::default(),
            fwd: FwdConfig::default(),
            transport: Transport::InProcess,
            broker_poll_interval: Duration::from_millis(1),
            p2p_queue_bound: DEFAULT_QUEUE_BOUND,
            discovery_tick: Some(Duration::from_secs(1)),
            warm_rounds: 2,
            record_log: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DeployError {
    #[error(transparent)]
    Netsim(#[from] NetsimError),
    #[error(transparent)]
    Core(#[from] crate::controller::CoreError),
    #[error(transparent)]
    Broker(#[from] crate::broker::BrokerError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Setup(String),
}

pub struct Deployment {
    pub mode: Mode,
    pub fabric: Fabric,
    pub controller: Controller,
    /// The p2p backend; stays empty unless mode is P2P.
    pub hub: Arc<Hub>,
    /// The broker backend; stays empty unless mode is BROKER.
    pub broker: Arc<Broker>,
    pub topology: Arc<TopologyService>,
    pub forwarder: Arc<Forwarder>,
    runners: Vec<ServiceRunner>,
    ticker: Option<DiscoveryTicker>,
    rest: Option<RestServer>,
    rpc: Option<RpcServer>,
    broker_server: Option<BrokerServer>,
    p2p_server: Option<P2pServer>,
}

fn wait_until(timeout: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + timeout;
    loop {
        if cond() {
            return true;
        }
        if Instant::now() >= deadline {
            return false;
        }
        std::thread::sleep(Duration::from_millis(2));
    }
}

impl Deployment {
    pub fn start(cfg: DeployConfig) -> Result<Deployment, DeployError> {
        let sockets = cfg.transport == Transport::Sockets;
        let fabric = Fabric::start(cfg.network.clone(), cfg.fabric.clone())?;
        let hub = Arc::new(Hub::new(cfg.p2p_queue_bound));
        let broker = Arc::new(Broker::new());

        let mut broker_server = None;
        let mut p2p_server = None;
        let mut broker_addr: Option<SocketAddr> = None;
        let mut p2p_addr: Option<SocketAddr> = None;
        let distribution = match cfg.mode {
            Mode::Internal => Distribution::Internal,
            Mode::P2p => {
                if sockets {
                    let s = P2pServer::start(hub.clone(), "127.0.0.1:0")?;
                    p2p_addr = Some(s.addr());
                    p2p_server = Some(s);
                }
                Distribution::P2p(hub.clone())
            }
            Mode::Broker => {
                if sockets {
                    let s = BrokerServer::start(broker.clone(), "127.0.0.1:0")?;
                    broker_addr = Some(s.addr());
                    broker_server = Some(s);
                    Distribution::Broker(Arc::new(RemoteBroker::connect(s_addr(broker_addr))?))
                } else {
                    Distribution::Broker(broker.clone())
                }
            }
        };
        let controller = Controller::new(CoreConfig {
            distribution,
            record_log: cfg.record_log,
        });
        let core: Arc<dyn ControlApi> = Arc::new(controller.clone());

        let rest = if cfg.fwd.install == Install::Rest {
            Some(RestServer::start(core.clone(), "127.0.0.1:0")?)
        } else {
            None
        };
        let mut rpc = None;
        let service_control = |rpc: &mut Option<RpcServer>| -> Result<Arc<dyn ControlApi>, DeployError> {
            if !sockets || cfg.mode == Mode::Internal {
                return Ok(core.clone());
            }
            if rpc.is_none() {
                *rpc = Some(RpcServer::start(core.clone(), "127.0.0.1:0")?);
            }
            Ok(Arc::new(RemoteControl::connect(rpc.as_ref().unwrap().addr())?))
        };
        let topo_control = service_control(&mut rpc)?;
        let fwd_control = service_control(&mut rpc)?;

        let topology = Arc::new(TopologyService::new(topo_control, TopologyConfig::default()));
        let installer: Arc<dyn ControlApi> = match &rest {
            Some(r) => Arc::new(RestControl::new(&r.base_url(), fwd_control.clone())),
            None => fwd_control.clone(),
        };
        let forwarder = Arc::new(Forwarder::new(
            cfg.fwd.clone(),
            topology.clone(),
            fwd_control,
            installer,
        ));

        let mut runners = Vec::new();
        match cfg.mode {
            Mode::Internal => controller.set_app(Arc::new(Stack(vec![
                topology.clone(),
                forwarder.clone(),
            ]))),
            Mode::P2p | Mode::Broker => {
                let source = |name: &str, kinds: KindSet| -> Result<Box<dyn EventSource>, DeployError> {
                    Ok(match cfg.mode {
                        Mode::P2p => match p2p_addr {
                            Some(addr) => Box::new(RemoteSubscription::connect(addr, kinds)?),
                            None => Box::new(hub.subscribe(kinds).map_err(|e| DeployError::Setup(e.to_string()))?),
                        },
                        _ => {
                            let api: Arc<dyn BrokerApi> = match broker_addr {
                                Some(addr) => Arc::new(RemoteBroker::connect(addr)?),
                                None => broker.clone(),
                            };
                            let mut c = ConsumerConfig::new(name);
                            c.poll_interval = cfg.broker_poll_interval;
                            Box::new(BrokerConsumer::new(api, kinds, c)?)
                        }
                    })
                };
                let topo_src = source("topology", TopologyService::kinds())?;
                let fwd_src = source("forwarding", Forwarder::kinds())?;
                if p2p_addr.is_some() {
                    // Socket subscriptions register asynchronously.
                    if !wait_until(Duration::from_secs(5), || hub.subscriber_count() >= 2) {
                        return Err(DeployError::Setup("p2p subscribers did not register".into()));
                    }
                }
                runners.push(ServiceRunner::spawn("topology", topo_src, topology.clone()));
                runners.push(ServiceRunner::spawn("forwarding", fwd_src, forwarder.clone()));
            }
        }

        controller.connect_all(fabric.take_channels())?;
        topology.sync()?;

        let mut dep = Deployment {
            mode: cfg.mode,
            fabric,
            controller,
            hub,
            broker,
            topology,
            forwarder,
            runners,
            ticker: None,
            rest,
            rpc,
            broker_server,
            p2p_server,
        };
        for _ in 0..cfg.warm_rounds {
            dep.discovery_round()?;
        }
        if let Some(tick) = cfg.discovery_tick {
            dep.ticker = Some(DiscoveryTicker::spawn(dep.topology.clone(), tick));
        }
        Ok(dep)
    }

    /// One discovery round, then waits until the probes it sent have been
    /// processed (or a short timeout passes).
    pub fn discovery_round(&self) -> Result<usize, DeployError> {
        let before = self.topology.probes_seen();
        let sent = self.topology.discovery_round()?;
        let expected = self.fabric.spec().directed_links().len() as u64;
        wait_until(Duration::from_secs(2), || {
            self.topology.probes_seen() >= before + expected
        });
        self.settle(Duration::from_millis(20));
        Ok(sent)
    }

    /// Waits until no new events have been emitted for `quiet`, capped at 5 s.
    pub fn settle(&self, quiet: Duration) {
        let cap = Instant::now() + Duration::from_secs(5);
        let mut last = self.controller.next_seq();
        let mut since = Instant::now();
        while Instant::now() < cap {
            std::thread::sleep(Duration::from_millis(2));
            let now = self.controller.next_seq();
            if now != last {
                last = now;
                since = Instant::now();
            } else if since.elapsed() >= quiet {
                return;
            }
        }
    }

    /// True once the discovered switch links equal the fabric's.
    pub fn topology_complete(&self) -> bool {
        let want: std::collections::BTreeSet<_> = self
            .fabric
            .spec()
            .directed_links()
            .into_iter()
            .map(|(a, b)| ((a.dpid, a.port), (b.dpid, b.port)))
            .collect();
        let have: std::collections::BTreeSet<_> =
            self.topology.snapshot().links().into_iter().collect();
        want == have
    }

    pub fn rest_url(&self) -> Option<String> {
        self.rest.as_ref().map(|r| r.base_url())
    }

    pub fn runners(&self) -> &[ServiceRunner] {
        &self.runners
    }

    pub fn stop(&mut self) {
        if let Some(mut t) = self.ticker.take() {
            t.stop();
        }
        for r in self.runners.iter_mut() {
            r.stop();
        }
        self.runners.clear();
        self.fabric.shutdown();
        self.controller.shutdown();
        if let Some(mut r) = self.rest.take() {
            r.stop();
        }
        if let Some(mut r) = self.rpc.take() {
            r.stop();
        }
        if let Some(mut s) = self.broker_server.take() {
            s.stop();
        }
        if let Some(mut s) = self.p2p_server.take() {
            s.stop();
        }
    }
}

fn s_addr(a: Option<SocketAddr>) -> SocketAddr {
    a.expect("server started")
}

impl Drop for Deployment {
    fn drop(&mut self) {
        self.stop();
    }
}
