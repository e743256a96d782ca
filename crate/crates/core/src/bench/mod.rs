//! Experiment harness: the response-time experiment (ping RTT across
//! distribution modes with packet-out-only forwarding) and the throughput
//! experiment (stream goodput with reactive flow install and hard timeouts).
//!
//! Results carry the core event log of every run so counts can be checked
//! after the fact. [`report`] turns them into CSV files.

pub mod report;
mod rt;
pub mod stats;
mod tp;

pub use rt::{run_response_time, Comparison, RtConfig, RtModeResult, RtResult};
pub use stats::{SignTest, StatsSummary};
pub use tp::{run_throughput, TpConfig, TpResult, TpRun};

use crate::deploy::DeployError;
use crate::netsim::{NetsimError, NetworkSpec};
use crate::wire::{EventBody, Event, ETH_DATA};

/// Significance level for the paired-median ordering check.
pub const FLAG_ALPHA: f64 = 0.01;

/// Below this broker poll interval the ordering claim is reported but flagged.
pub const MIN_TRUSTED_POLL: std::time::Duration = std::time::Duration::from_micros(100);

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Deploy(#[from] DeployError),
    #[error(transparent)]
    Netsim(#[from] NetsimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// The measured host pair: lowest and highest host id.
pub(crate) fn endpoints(spec: &NetworkSpec) -> Result<(u32, u32), BenchError> {
    let first = spec.hosts.iter().map(|h| h.host_id).min();
    let last = spec.hosts.iter().map(|h| h.host_id).max();
    match (first, last) {
        (Some(a), Some(b)) if a != b => Ok((a, b)),
        _ => Err(BenchError::InvalidConfig(
            "topology needs at least two hosts".into(),
        )),
    }
}

/// Packet events carrying host data traffic (not discovery or resolution).
pub(crate) fn data_packet_events(events: &[Event]) -> u64 {
    events
        .iter()
        .filter(|e| {
            matches!(&e.body, EventBody::PacketException { frame, .. } if frame.ethertype == ETH_DATA)
        })
        .count() as u64
}
