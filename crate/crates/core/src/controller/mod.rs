//! The minimal controller core: switch connections, event emission into the
//! configured distribution backend, and the packet-out / flow-mod services
//! offered over a direct channel (in-process or RPC socket) and REST.

mod api;
mod core;
pub mod rest;
pub mod rpc;
mod southbound;

pub use self::api::{ControlApi, CoreError, DatapathInfo, FlowModRequest, Mode};
pub use self::core::{Controller, CoreConfig, CoreMetrics, Distribution, EventHandler};
pub use self::rest::{RestControl, RestServer};
pub use self::rpc::{RemoteControl, RpcServer};
pub use self::southbound::{ChannelClosed, SouthboundTx, SwitchChannel};
