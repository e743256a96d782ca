use std::time::Duration;

use crate::controller::Mode;
use crate::deploy::{DeployConfig, Deployment, Transport};
use crate::netsim::{build_named, traffic, PingParams};
use crate::services::Install;
use crate::wire::{Event, MacAddr};

use super::stats::{block_medians, sign_test, SignTest, StatsSummary};
use super::{data_packet_events, endpoints, BenchError, FLAG_ALPHA, MIN_TRUSTED_POLL};

#[derive(Debug, Clone)]
pub struct RtConfig {
    pub topology: String,
    pub count: u32,
    pub modes: Vec<Mode>,
    pub link_latency: Duration,
    /// Per-ping reply timeout; a ping without a reply counts as lost.
    pub timeout: Duration,
    pub interval: Duration,
    pub payload_len: usize,
    pub poll_interval: Duration,
    /// Pings sent and discarded before measuring.
    pub warmup: u32,
    /// Pings per block for the paired-median comparison.
    pub block: usize,
    pub transport: Transport,
}

impl Default for RtConfig {
    fn default() -> Self {
        RtConfig {
            topology: "linear:5".into(),
            count: 500,
            modes: Mode::ALL.to_vec(),
            link_latency: Duration::ZERO,
            timeout: Duration::from_secs(1),
            interval: Duration::from_millis(10),
            payload_len: traffic::DEFAULT_PING_PAYLOAD,
            poll_interval: Duration::from_millis(1),
            warmup: 10,
            block: 25,
            transport: Transport::InProcess,
        }
    }
}

impl RtConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidConfig(m.into()));
        if self.count == 0 {
            return bad("ping count must be at least 1");
        }
        if self.modes.is_empty() {
            return bad("no modes selected");
        }
        if self.block == 0 {
            return bad("block size must be at least 1");
        }
        if self.timeout.is_zero() {
            return bad("ping timeout must be positive");
        }
        Ok(())
    }

    fn ping_params(&self, count: u32) -> PingParams {
        PingParams {
            count,
            interval: self.interval,
            timeout: self.timeout,
            payload_len: self.payload_len,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RtModeResult {
    pub mode: Mode,
    pub samples: Vec<Option<Duration>>,
    pub summary: StatsSummary,
    /// Switches on the measured path.
    pub hops: usize,
    /// Packet events caused by the measured pings.
    pub data_events: u64,
    /// Core event log over the measured window.
    pub events: Vec<Event>,
    pub topology_complete: bool,
}

impl RtModeResult {
    pub fn micros(&self) -> Vec<Option<f64>> {
        self.samples
            .iter()
            .map(|s| s.map(|d| d.as_secs_f64() * 1e6))
            .collect()
    }

    pub fn events_per_ping(&self) -> f64 {
        self.data_events as f64 / self.samples.len().max(1) as f64
    }
}

/// Outcome of "`lower` responds faster than `higher`".
#[derive(Debug, Clone)]
pub struct Comparison {
    pub lower: Mode,
    pub higher: Mode,
    pub mean_gap_micros: f64,
    pub median_gap_micros: f64,
    pub sign: SignTest,
    pub significant: bool,
    /// Set when the result should not be trusted either way.
    pub flag: Option<String>,
}

impl Comparison {
    pub fn holds(&self) -> bool {
        self.mean_gap_micros > 0.0 && self.median_gap_micros > 0.0 && self.significant
    }
}

#[derive(Debug, Clone)]
pub struct RtResult {
    pub config: RtConfig,
    pub modes: Vec<RtModeResult>,
    pub comparisons: Vec<Comparison>,
    pub valid: bool,
    pub problems: Vec<String>,
}

impl RtResult {
    pub fn mode(&self, mode: Mode) -> Option<&RtModeResult> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

struct Live {
    mode: Mode,
    dep: Deployment,
    src: u32,
    dst: MacAddr,
    from: u64,
    samples: Vec<Option<Duration>>,
    topology_complete: bool,
}

fn start_mode(cfg: &RtConfig, mode: Mode) -> Result<Live, BenchError> {
    let mut dc = DeployConfig::new(mode, build_named(&cfg.topology)?);
    // Every ping must reach the controller at every switch.
    dc.fwd.install = Install::None;
    dc.fabric.link_latency = cfg.link_latency;
    dc.broker_poll_interval = cfg.poll_interval;
    dc.transport = cfg.transport;
    let dep = Deployment::start(dc)?;
    let topology_complete = dep.topology_complete();
    let (a, b) = endpoints(dep.fabric.spec())?;
    let dst = dep.fabric.host(b)?.mac;
    if cfg.warmup > 0 {
        dep.fabric.host(a)?.ping(dst, cfg.ping_params(cfg.warmup))?;
    }
    Ok(Live {
        mode,
        dep,
        src: a,
        dst,
        from: 0,
        samples: Vec::with_capacity(cfg.count as usize),
        topology_complete,
    })
}

fn finish_mode(live: Live) -> Result<RtModeResult, BenchError> {
    let dep = &live.dep;
    dep.settle(Duration::from_millis(20));
    let events = dep.controller.events_since(live.from);
    let src = dep.fabric.host(live.src)?.mac;
    let hops = dep
        .topology
        .snapshot()
        .shortest_path(src, live.dst)
        .map(|p| p.len())
        .unwrap_or(0);
    Ok(RtModeResult {
        mode: live.mode,
        summary: StatsSummary::from_rtts(&live.samples),
        data_events: data_packet_events(&events),
        samples: live.samples,
        hops,
        events,
        topology_complete: live.topology_complete,
    })
}

fn compare(cfg: &RtConfig, lo: &RtModeResult, hi: &RtModeResult) -> Comparison {
    let sign = sign_test(
        &block_medians(&lo.micros(), cfg.block),
        &block_medians(&hi.micros(), cfg.block),
    );
    let involves_broker = hi.mode == Mode::Broker || lo.mode == Mode::Broker;
    let flag = if involves_broker && cfg.poll_interval < MIN_TRUSTED_POLL {
        Some(format!(
            "broker poll interval {:?} is below {:?}; ordering may legitimately invert",
            cfg.poll_interval, MIN_TRUSTED_POLL
        ))
    } else {
        None
    };
    Comparison {
        lower: lo.mode,
        higher: hi.mode,
        mean_gap_micros: hi.summary.mean - lo.summary.mean,
        median_gap_micros: hi.summary.median - lo.summary.median,
        significant: sign.pairs > 0 && sign.p_value < FLAG_ALPHA,
        sign,
        flag,
    }
}

/// Runs the ping experiment. Every mode gets its own fresh network, all
/// started before measuring; pings are then sent in blocks that rotate
/// through the modes, so block i of each mode covers the same stretch of
/// time and the per-block comparison is paired.
pub fn run_response_time(cfg: &RtConfig) -> Result<RtResult, BenchError> {
    cfg.validate()?;
    let mut live = Vec::new();
    for &mode in &cfg.modes {
        live.push(start_mode(cfg, mode)?);
    }
    for l in &mut live {
        l.dep.settle(Duration::from_millis(20));
        l.from = l.dep.controller.next_seq();
    }
    let mut left = cfg.count;
    while left > 0 {
        let n = left.min(cfg.block as u32);
        for l in &mut live {
            let host = l.dep.fabric.host(l.src)?;
            let block = host.ping(l.dst, cfg.ping_params(n))?;
            l.samples.extend(block.into_iter().map(|s| s.rtt));
        }
        left -= n;
    }
    let mut modes = Vec::new();
    for l in live {
        log::info!("{}: {} pings done", l.mode, l.samples.len());
        modes.push(finish_mode(l)?);
    }
    let mut problems = Vec::new();
    for m in &modes {
        if m.summary.loss_ratio() > 0.01 {
            problems.push(format!(
                "{}: {} of {} pings lost (over 1%)",
                m.mode,
                m.summary.lost,
                m.samples.len()
            ));
        }
        if !m.topology_complete {
            problems.push(format!("{}: discovery incomplete before measuring", m.mode));
        }
    }
    // Adjacent pairs in the expected order INTERNAL < P2P < BROKER.
    let mut ordered: Vec<&RtModeResult> = modes.iter().collect();
    ordered.sort_by_key(|m| Mode::ALL.iter().position(|x| *x == m.mode));
    let comparisons = ordered
        .windows(2)
        .map(|w| compare(cfg, w[0], w[1]))
        .collect();
    Ok(RtResult {
        config: cfg.clone(),
        valid: problems.is_empty(),
        modes,
        comparisons,
        problems,
    })
}
