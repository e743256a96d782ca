use crossbeam_channel::Receiver;

use crate::wire::FlowRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("switch channel closed")]
pub struct ChannelClosed;

/// Core-to-switch half of a southbound connection.
pub trait SouthboundTx: Send + Sync {
    /// Sends one encoded southbound message.
    fn send(&self, msg: Vec<u8>) -> Result<(), ChannelClosed>;

    /// Flow-table snapshot, counters included.
    fn dump_flows(&self) -> Result<Vec<FlowRule>, ChannelClosed>;
}

/// Both directions of a switch connection as handed to the core. The first
/// message on `rx` must be a Hello.
pub struct SwitchChannel {
    pub tx: Box<dyn SouthboundTx>,
    pub rx: Receiver<Vec<u8>>,
}
