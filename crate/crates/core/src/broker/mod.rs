//! Publish-subscribe distribution: one append-only topic log per event kind,
//! consumers pull by offset. Usable in-process ([`Broker`]) or over a socket
//! ([`BrokerServer`] / [`RemoteBroker`]); both expose [`BrokerApi`].

mod consumer;
mod log;
mod net;

use std::sync::Arc;
use std::time::Duration;

use crate::clock::Micros;

pub use consumer::{BrokerConsumer, ConsumerConfig};
pub use log::Broker;
pub use net::{BrokerServer, RemoteBroker};

/// Largest record a topic accepts.
pub const MAX_RECORD: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub offset: u64,
    pub bytes: Arc<[u8]>,
    pub append_micros: Micros,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BrokerError {
    #[error("record of {0} bytes exceeds the 64 KiB limit")]
    RecordTooLarge(usize),
    #[error("offset {offset} beyond log length {len}")]
    OffsetOutOfRange { offset: u64, len: u64 },
    #[error("broker transport: {0}")]
    Transport(String),
}

pub trait BrokerApi: Send + Sync {
    /// Appends to `topic`, creating it on first use; returns the new offset.
    fn publish(&self, topic: &str, bytes: &[u8]) -> Result<u64, BrokerError>;

    /// Up to `max_records` starting at `from`, waiting up to `max_wait` when
    /// nothing is available yet.
    fn poll(
        &self,
        consumer: &str,
        topic: &str,
        from: u64,
        max_records: usize,
        max_wait: Duration,
    ) -> Result<Vec<Record>, BrokerError>;

    fn commit(&self, consumer: &str, topic: &str, offset: u64) -> Result<(), BrokerError>;

    /// Last committed offset, 0 when the consumer never committed.
    fn committed(&self, consumer: &str, topic: &str) -> Result<u64, BrokerError>;
}
