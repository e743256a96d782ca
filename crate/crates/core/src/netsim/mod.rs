//! Simulated data plane: switches with flow tables, hosts with ping and
//! stream traffic generators, and fat-tree / linear topology builders.
//!
//! Every switch and host is a sequential actor on its own thread; frames and
//! control messages travel over ordered channels, so per-link FIFO order holds.

mod fabric;
mod host;
mod switch;
mod topology;
pub mod traffic;

pub use fabric::{Fabric, FabricConfig};
pub(crate) use fabric::SwitchInput;
pub use host::{ConnReport, HostHandle, Inbox, PingParams, PingSample, StreamParams, StreamReport};
pub use switch::{expire_flows, switch_rx, Effect, FlowEntry, FlowTable, PortState, SwitchState};
pub use topology::{
    build_fat_tree, build_linear, build_named, HostSpec, NetworkSpec, PortRef, SwitchSpec,
};

use crate::wire::DatapathId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetsimError {
    #[error("fat-tree arity must be even and at least 2, got {0}")]
    BadArity(u32),
    #[error("a chain needs at least one switch")]
    EmptyChain,
    #[error("invalid network: {0}")]
    InvalidSpec(String),
    #[error("a host cannot ping itself")]
    SelfPing,
    #[error("invalid parameter: {0}")]
    InvalidParam(&'static str),
    #[error("no host h{0}")]
    UnknownHost(u32),
    #[error("no switch {0}")]
    UnknownSwitch(DatapathId),
    #[error("actor stopped")]
    Stopped,
}
