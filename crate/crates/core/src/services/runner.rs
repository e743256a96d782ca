use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{bounded, RecvTimeoutError, Sender};

use crate::controller::EventHandler;
use crate::source::EventSource;
use crate::wire::{Event, KindSet};

use super::topology::TopologyService;

/// Several handlers run in order as one app, each seeing only its kinds.
pub struct Stack(pub Vec<Arc<dyn EventHandler>>);

impl EventHandler for Stack {
    fn kinds(&self) -> KindSet {
        self.0
            .iter()
            .fold(KindSet::EMPTY, |acc, h| KindSet::from_bits(acc.bits() | h.kinds().bits()))
    }

    fn on_event(&self, event: &Event) {
        for h in &self.0 {
            if h.kinds().contains(event.kind()) {
                h.on_event(event);
            }
        }
    }
}

/// An external service: a thread feeding events from a source into a handler.
pub struct ServiceRunner {
    name: String,
    stop: Arc<AtomicBool>,
    handled: Arc<AtomicU64>,
    thread: Option<JoinHandle<()>>,
}

impl ServiceRunner {
    pub fn spawn(
        name: &str,
        mut source: Box<dyn EventSource>,
        handler: Arc<dyn EventHandler>,
    ) -> ServiceRunner {
        let stop = Arc::new(AtomicBool::new(false));
        let handled = Arc::new(AtomicU64::new(0));
        let (flag, count) = (stop.clone(), handled.clone());
        let label = name.to_string();
        let thread = std::thread::Builder::new()
            .name(name.to_string())
            .spawn(move || {
                while !flag.load(Ordering::Relaxed) {
                    match source.next_event(Duration::from_millis(50)) {
                        Ok(Some(ev)) => {
                            handler.on_event(&ev);
                            count.fetch_add(1, Ordering::Relaxed);
                        }
                        Ok(None) => {}
                        Err(_) => {
                            log::debug!("{label}: source closed");
                            break;
                        }
                    }
                }
            })
            .expect("spawn service thread");
        ServiceRunner {
            name: name.to_string(),
            stop,
            handled,
            thread: Some(thread),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn handled(&self) -> u64 {
        self.handled.load(Ordering::Relaxed)
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServiceRunner {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Runs a discovery round every `tick` until dropped. A failed round is
/// skipped and retried on the next tick.
pub struct DiscoveryTicker {
    stop: Option<Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl DiscoveryTicker {
    pub fn spawn(service: Arc<TopologyService>, tick: Duration) -> DiscoveryTicker {
        let (stop, rx) = bounded::<()>(0);
        let thread = std::thread::Builder::new()
            .name("discovery".into())
            .spawn(move || loop {
                if let Err(e) = service.discovery_round() {
                    log::debug!("discovery round skipped: {e}");
                }
                match rx.recv_timeout(tick) {
                    Err(RecvTimeoutError::Timeout) => {}
                    _ => break,
                }
            })
            .expect("spawn discovery thread");
        DiscoveryTicker {
            stop: Some(stop),
            thread: Some(thread),
        }
    }

    pub fn stop(&mut self) {
        self.stop.take();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for DiscoveryTicker {
    fn drop(&mut self) {
        self.stop();
    }
}
