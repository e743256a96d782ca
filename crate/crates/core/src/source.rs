use std::time::Duration;

use crate::wire::Event;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("event source closed")]
pub struct SourceClosed;

/// A stream of events as seen by one external service, whichever backend
/// delivers it.
pub trait EventSource: Send {
    /// Next event, waiting at most `timeout`; `Ok(None)` when none arrived.
    fn next_event(&mut self, timeout: Duration) -> Result<Option<Event>, SourceClosed>;
}
