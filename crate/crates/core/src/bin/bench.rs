//! Experiment CLI.
//!
//! ```text
//! bench rt --modes internal,p2p,broker --count 500 --topology linear:5 --out results/
//! bench tp --modes internal,p2p --conns 1,2,4,8 --duration 15 --install rest,direct --out results/
//! ```
//!
//! Exits 0 only when the experiment's validity checks pass.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use sdn_disagg::bench::{self, report, RtConfig, TpConfig};
use sdn_disagg::controller::Mode;
use sdn_disagg::deploy::Transport;
use sdn_disagg::services::Install;

#[derive(Parser)]
#[command(name = "bench", about = "Response-time and throughput experiments across distribution modes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Ping RTT with packet-out-only forwarding.
    Rt(RtArgs),
    /// Stream goodput with reactive flow install.
    Tp(TpArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_delimiter = ',', default_value = "internal,p2p,broker")]
    modes: Vec<Mode>,
    /// Directory for the CSV files.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Per-link delay in microseconds.
    #[arg(long)]
    link_latency_us: Option<u64>,
    /// Broker consumer poll interval in microseconds.
    #[arg(long, default_value_t = 1000)]
    poll_interval_us: u64,
    /// Run backends and services over loopback sockets.
    #[arg(long)]
    sockets: bool,
}

#[derive(Args)]
struct RtArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 500)]
    count: u32,
    #[arg(long, default_value = "linear:5")]
    topology: String,
    #[arg(long, default_value_t = 10)]
    interval_ms: u64,
    #[arg(long, default_value_t = 56)]
    payload: usize,
    #[arg(long, default_value_t = 1000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 10)]
    warmup: u32,
    /// Pings per block in the paired-median comparison.
    #[arg(long, default_value_t = 25)]
    block: usize,
}

#[derive(Args)]
struct TpArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    conns: Vec<u32>,
    /// Seconds per run.
    #[arg(long, default_value_t = 15.0)]
    duration: f64,
    #[arg(long, value_delimiter = ',', default_value = "direct")]
    install: Vec<Install>,
    #[arg(long, default_value_t = 10)]
    hard_timeout_s: u32,
    #[arg(long, default_value = "fat-tree:4")]
    topology: String,
}

fn transport(sockets: bool) -> Transport {
    if sockets {
        Transport::Sockets
    } else {
        Transport::InProcess
    }
}

fn run(cli: Cli) -> Result<bool, bench::BenchError> {
    match cli.cmd {
        Cmd::Rt(a) => {
            let mut cfg = RtConfig {
                topology: a.topology,
                count: a.count,
                modes: a.common.modes,
                timeout: Duration::from_millis(a.timeout_ms),
                interval: Duration::from_millis(a.interval_ms),
                payload_len: a.payload,
                poll_interval: Duration::from_micros(a.common.poll_interval_us),
                warmup: a.warmup,
                block: a.block,
                transport: transport(a.common.sockets),
                ..RtConfig::default()
            };
            if let Some(us) = a.common.link_latency_us {
                cfg.link_latency = Duration::from_micros(us);
            }
            let result = bench::run_response_time(&cfg)?;
            print!("{}", report::rt_text(&result));
            for p in report::write_rt(&result, &a.common.out)? {
                println!("wrote {}", p.display());
            }
            Ok(result.valid)
        }
        Cmd::Tp(a) => {
            if !(a.duration > 0.0 && a.duration.is_finite()) {
                return Err(bench::BenchError::InvalidConfig("duration must be positive".into()));
            }
            let mut cfg = TpConfig {
                topology: a.topology,
                duration: Duration::from_secs_f64(a.duration),
                conns: a.conns,
                modes: a.common.modes,
                installs: a.install,
                hard_timeout_s: a.hard_timeout_s,
                poll_interval: Duration::from_micros(a.common.poll_interval_us),
                transport: transport(a.common.sockets),
                ..TpConfig::default()
            };
            if let Some(us) = a.common.link_latency_us {
                cfg.link_latency = Duration::from_micros(us);
            }
            for w in cfg.warnings() {
                eprintln!("warning: {w}");
            }
            let result = bench::run_throughput(&cfg)?;
            print!("{}", report::tp_text(&result));
            for p in report::write_tp(&result, &a.common.out)? {
                println!("wrote {}", p.display());
            }
            Ok(result.valid)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("experiment invalid");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
