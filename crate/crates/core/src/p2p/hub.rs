use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock, Weak};
use std::time::{Duration, Instant};

use crate::source::{EventSource, SourceClosed};
use crate::wire::{decode_event, Event, EventKind, KindSet};

use super::P2pError;

pub const DEFAULT_QUEUE_BOUND: usize = 10_000;

pub type SubId = u64;

struct Queue {
    items: VecDeque<Arc<[u8]>>,
    closed: bool,
}

struct SubState {
    kinds: KindSet,
    bound: usize,
    queue: Mutex<Queue>,
    ready: Condvar,
    dropped: AtomicU64,
}

impl SubState {
    fn close(&self) {
        self.queue.lock().unwrap().closed = true;
        self.ready.notify_all();
    }
}

/// Subscriber registry; the core pushes each encoded event to every
/// subscription whose kind set contains it.
pub struct Hub {
    bound: usize,
    subs: RwLock<HashMap<SubId, Arc<SubState>>>,
    next_id: AtomicU64,
    pushed: AtomicU64,
}

impl Default for Hub {
    fn default() -> Self {
        Hub::new(DEFAULT_QUEUE_BOUND)
    }
}

impl Hub {
    pub fn new(queue_bound: usize) -> Hub {
        Hub {
            bound: queue_bound.max(1),
            subs: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            pushed: AtomicU64::new(0),
        }
    }

    /// Opens a stream of events of the given kinds pushed from now on.
    pub fn subscribe(self: &Arc<Self>, kinds: KindSet) -> Result<Subscription, P2pError> {
        if kinds.is_empty() {
            return Err(P2pError::EmptyKinds);
        }
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let state = Arc::new(SubState {
            kinds,
            bound: self.bound,
            queue: Mutex::new(Queue {
                items: VecDeque::new(),
                closed: false,
            }),
            ready: Condvar::new(),
            dropped: AtomicU64::new(0),
        });
        self.subs.write().unwrap().insert(id, state.clone());
        Ok(Subscription {
            id,
            hub: Arc::downgrade(self),
            state,
        })
    }

    pub fn unsubscribe(&self, id: SubId) -> Result<(), P2pError> {
        let state = self
            .subs
            .write()
            .unwrap()
            .remove(&id)
            .ok_or(P2pError::UnknownSubscription(id))?;
        state.close();
        Ok(())
    }

    /// Enqueues on every matching subscription without blocking; a full
    /// queue loses its oldest entry. Returns the number of subscriptions reached.
    pub fn push(&self, kind: EventKind, bytes: Arc<[u8]>) -> usize {
        self.pushed.fetch_add(1, Ordering::Relaxed);
        let subs = self.subs.read().unwrap();
        let mut reached = 0;
        for state in subs.values() {
            if !state.kinds.contains(kind) {
                continue;
            }
            let mut q = state.queue.lock().unwrap();
            if q.items.len() >= state.bound {
                q.items.pop_front();
                state.dropped.fetch_add(1, Ordering::Relaxed);
            }
            q.items.push_back(bytes.clone());
            drop(q);
            state.ready.notify_one();
            reached += 1;
        }
        reached
    }

    pub fn subscriber_count(&self) -> usize {
        self.subs.read().unwrap().len()
    }

    /// Events offered to `push` so far, whether or not anyone listened.
    pub fn pushed(&self) -> u64 {
        self.pushed.load(Ordering::Relaxed)
    }

    pub fn total_dropped(&self) -> u64 {
        self.subs
            .read()
            .unwrap()
            .values()
            .map(|s| s.dropped.load(Ordering::Relaxed))
            .sum()
    }
}

/// Single-reader end of a subscription. Dropping it unsubscribes.
pub struct Subscription {
    id: SubId,
    hub: Weak<Hub>,
    state: Arc<SubState>,
}

impl Subscription {
    pub fn id(&self) -> SubId {
        self.id
    }

    pub fn kinds(&self) -> KindSet {
        self.state.kinds
    }

    pub fn dropped(&self) -> u64 {
        self.state.dropped.load(Ordering::Relaxed)
    }

    pub fn queued(&self) -> usize {
        self.state.queue.lock().unwrap().items.len()
    }

    /// Next encoded event; `Ok(None)` on timeout, `Err` once unsubscribed and drained.
    pub fn recv(&self, timeout: Duration) -> Result<Option<Arc<[u8]>>, SourceClosed> {
        let deadline = Instant::now() + timeout;
        let mut q = self.state.queue.lock().unwrap();
        loop {
            if let Some(item) = q.items.pop_front() {
                return Ok(Some(item));
            }
            if q.closed {
                return Err(SourceClosed);
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            q = self.state.ready.wait_timeout(q, deadline - now).unwrap().0;
        }
    }

    pub fn try_recv(&self) -> Option<Arc<[u8]>> {
        self.state.queue.lock().unwrap().items.pop_front()
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        if let Some(hub) = self.hub.upgrade() {
            let _ = hub.unsubscribe(self.id);
        }
    }
}

impl EventSource for Subscription {
    fn next_event(&mut self, timeout: Duration) -> Result<Option<Event>, SourceClosed> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.recv(left)? {
                None => return Ok(None),
                Some(bytes) => match decode_event(&bytes) {
                    Ok(ev) => return Ok(Some(ev)),
                    Err(e) => log::warn!("sub {}: undecodable event: {e}", self.id),
                },
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes(b: &[u8]) -> Arc<[u8]> {
        Arc::from(b)
    }

    fn packets() -> KindSet {
        KindSet::EMPTY.with(EventKind::Packet)
    }

    #[test]
    fn kind_filter() {
        let hub = Arc::new(Hub::default());
        let sub = hub.subscribe(packets()).unwrap();
        assert_eq!(hub.push(EventKind::Link, bytes(b"l")), 0);
        assert_eq!(sub.try_recv(), None);
        assert_eq!(hub.push(EventKind::Packet, bytes(b"p")), 1);
        assert_eq!(sub.try_recv().as_deref(), Some(&b"p"[..]));
    }

    #[test]
    fn empty_kinds_rejected() {
        let hub = Arc::new(Hub::default());
        assert_eq!(hub.subscribe(KindSet::EMPTY).err(), Some(P2pError::EmptyKinds));
    }

    #[test]
    fn fan_out_copies() {
        let hub = Arc::new(Hub::default());
        let a = hub.subscribe(packets()).unwrap();
        let b = hub.subscribe(packets()).unwrap();
        let c = hub.subscribe(KindSet::all()).unwrap();
        assert_eq!(hub.push(EventKind::Packet, bytes(b"x")), 3);
        for s in [&a, &b, &c] {
            assert_eq!(s.try_recv().as_deref(), Some(&b"x"[..]));
        }
    }

    #[test]
    fn no_subscribers_no_retention() {
        let hub = Arc::new(Hub::default());
        assert_eq!(hub.push(EventKind::Packet, bytes(b"early")), 0);
        let sub = hub.subscribe(packets()).unwrap();
        assert_eq!(sub.recv(Duration::from_millis(5)).unwrap(), None);
    }

    #[test]
    fn bounded_queue_drops_oldest() {
        let hub = Arc::new(Hub::new(2));
        let sub = hub.subscribe(packets()).unwrap();
        for b in [b"1", b"2", b"3"] {
            hub.push(EventKind::Packet, bytes(b));
        }
        assert_eq!(sub.dropped(), 1);
        assert_eq!(sub.try_recv().as_deref(), Some(&b"2"[..]));
        assert_eq!(sub.try_recv().as_deref(), Some(&b"3"[..]));
    }

    #[test]
    fn unsubscribe_lifecycle() {
        let hub = Arc::new(Hub::default());
        let sub = hub.subscribe(packets()).unwrap();
        let id = sub.id();
        hub.unsubscribe(id).unwrap();
        assert_eq!(hub.push(EventKind::Packet, bytes(b"x")), 0);
        assert_eq!(hub.unsubscribe(id), Err(P2pError::UnknownSubscription(id)));
        assert_eq!(sub.recv(Duration::ZERO), Err(SourceClosed));
        let again = hub.subscribe(packets()).unwrap();
        assert_ne!(again.id(), id);
    }

    #[test]
    fn drop_unsubscribes() {
        let hub = Arc::new(Hub::default());
        drop(hub.subscribe(packets()).unwrap());
        assert_eq!(hub.subscriber_count(), 0);
    }
}
