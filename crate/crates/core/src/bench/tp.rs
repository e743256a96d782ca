use std::time::Duration;

use crate::controller::Mode;
use crate::deploy::{DeployConfig, Deployment, Transport};
use crate::netsim::{build_named, traffic, ConnReport, StreamParams};
use crate::services::Install;
use crate::wire::{Event, EventBody, FlowRuleOp};

use super::{data_packet_events, endpoints, BenchError};

#[derive(Debug, Clone)]
pub struct TpConfig {
    pub topology: String,
    pub duration: Duration,
    pub conns: Vec<u32>,
    pub modes: Vec<Mode>,
    pub installs: Vec<Install>,
    pub hard_timeout_s: u32,
    /// Per-link delay. A nonzero value makes goodput latency-bound instead
    /// of bound by how the scheduler interleaves switch threads, which is
    /// what keeps run-to-run variation small.
    pub link_latency: Duration,
    pub segment_bytes: usize,
    pub poll_interval: Duration,
    pub transport: Transport,
}

impl Default for TpConfig {
    fn default() -> Self {
        TpConfig {
            topology: "fat-tree:4".into(),
            duration: Duration::from_secs(15),
            conns: vec![1, 2, 4, 8],
            modes: Mode::ALL.to_vec(),
            installs: vec![Install::Direct],
            hard_timeout_s: 10,
            link_latency: Duration::from_micros(200),
            segment_bytes: traffic::DEFAULT_SEGMENT_BYTES,
            poll_interval: Duration::from_millis(1),
            transport: Transport::InProcess,
        }
    }
}

impl TpConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidConfig(m.into()));
        if self.duration.is_zero() {
            return bad("duration must be positive");
        }
        if self.conns.is_empty() || self.conns.contains(&0) {
            return bad("connection counts must be nonempty and positive");
        }
        if self.modes.is_empty() || self.installs.is_empty() {
            return bad("no modes or install channels selected");
        }
        if self.installs.contains(&Install::None) {
            return bad("throughput runs install flows; use direct or rest");
        }
        Ok(())
    }

    /// Rule churn needs the run to outlast the timeout comfortably.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.duration.as_secs_f64() <= 2.0 * self.hard_timeout_s as f64 {
            out.push(format!(
                "duration {:?} is not more than twice the {} s hard timeout; few expiry cycles will occur",
                self.duration, self.hard_timeout_s
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TpRun {
    pub mode: Mode,
    pub install: Install,
    pub n_conns: u32,
    pub duration: Duration,
    pub conns: Vec<ConnReport>,
    pub aggregate_bps: f64,
    pub flow_mods: u64,
    /// Rules removed by hard timeout during the run.
    pub expiries: u64,
    pub packet_events: u64,
    pub install_micros: u64,
    pub events: Vec<Event>,
}

impl TpRun {
    pub fn mean_install_micros(&self) -> f64 {
        self.install_micros as f64 / self.flow_mods.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct TpResult {
    pub config: TpConfig,
    pub runs: Vec<TpRun>,
    pub valid: bool,
    pub problems: Vec<String>,
    pub warnings: Vec<String>,
}

impl TpResult {
    pub fn run(&self, mode: Mode, install: Install, n_conns: u32) -> Option<&TpRun> {
        self.runs
            .iter()
            .find(|r| r.mode == mode && r.install == install && r.n_conns == n_conns)
    }

    pub fn goodput(&self, mode: Mode, install: Install, n_conns: u32) -> Option<f64> {
        self.run(mode, install, n_conns).map(|r| r.aggregate_bps)
    }
}

fn run_one(cfg: &TpConfig, mode: Mode, install: Install, n_conns: u32) -> Result<TpRun, BenchError> {
    let mut dc = DeployConfig::new(mode, build_named(&cfg.topology)?);
    dc.fwd.install = install;
    dc.fwd.hard_timeout_s = cfg.hard_timeout_s;
    dc.fabric.link_latency = cfg.link_latency;
    dc.broker_poll_interval = cfg.poll_interval;
    dc.transport = cfg.transport;
    let dep = Deployment::start(dc)?;
    let (a, b) = endpoints(dep.fabric.spec())?;
    let dst = dep.fabric.host(b)?.mac;
    let from = dep.controller.next_seq();
    let before = dep.forwarder.stats();
    let report = dep.fabric.host(a)?.stream(
        dst,
        StreamParams {
            duration: cfg.duration,
            n_conns,
            segment_bytes: cfg.segment_bytes,
            ..StreamParams::default()
        },
    )?;
    let after = dep.forwarder.stats();
    let events = dep.controller.events_since(from);
    let expiries = events
        .iter()
        .filter(|e| {
            matches!(
                e.body,
                EventBody::FlowRuleEvent {
                    op: FlowRuleOp::Removed,
                    ..
                }
            )
        })
        .count() as u64;
    log::info!(
        "{mode}/{install}/{n_conns}: {:.3} Mbit/s",
        report.aggregate_bps() / 1e6
    );
    Ok(TpRun {
        mode,
        install,
        n_conns,
        duration: report.duration,
        aggregate_bps: report.aggregate_bps(),
        conns: report.conns,
        flow_mods: after.flow_mods - before.flow_mods,
        expiries,
        packet_events: data_packet_events(&events),
        install_micros: after.install_micros - before.install_micros,
        events,
    })
}

/// One fresh network per (n_conns, mode, install). Runs for the same
/// connection count are adjacent in time so slow drift affects the
/// configurations being compared alike.
pub fn run_throughput(cfg: &TpConfig) -> Result<TpResult, BenchError> {
    cfg.validate()?;
    let mut runs = Vec::new();
    for &n in &cfg.conns {
        for &mode in &cfg.modes {
            for &install in &cfg.installs {
                runs.push(run_one(cfg, mode, install, n)?);
            }
        }
    }
    let problems: Vec<String> = runs
        .iter()
        .filter(|r| r.conns.iter().all(|c| c.acked_bytes == 0))
        .map(|r| format!("{}/{}/{}: no bytes delivered", r.mode, r.install, r.n_conns))
        .collect();
    Ok(TpResult {
        config: cfg.clone(),
        valid: problems.is_empty(),
        warnings: cfg.warnings(),
        runs,
        problems,
    })
}
