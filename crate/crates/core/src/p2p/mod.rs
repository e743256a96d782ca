//! Point-to-point distribution: every subscriber gets its own bounded push
//! queue, filtered by event kind. No history is kept.

mod hub;
mod net;

pub use hub::{Hub, SubId, Subscription, DEFAULT_QUEUE_BOUND};
pub use net::{P2pServer, RemoteSubscription};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum P2pError {
    #[error("a subscription needs at least one event kind")]
    EmptyKinds,
    #[error("no subscription {0}")]
    UnknownSubscription(SubId),
}
