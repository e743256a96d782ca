//! The disaggregated services: topology discovery and reactive forwarding.
//! Both implement [`EventHandler`](crate::controller::EventHandler), so the
//! same code runs compiled into the core or as external services fed by a
//! distribution backend.

mod forwarding;
mod graph;
mod runner;
mod topology;

pub use forwarding::{Forwarder, FwdAction, FwdConfig, FwdStats, Install};
pub use graph::{Hop, LinkInfo, PathError, PortKey, TopologyGraph};
pub use runner::{DiscoveryTicker, ServiceRunner, Stack};
pub use topology::{DiscoveryPayload, TopologyConfig, TopologyQuery, TopologyService};
