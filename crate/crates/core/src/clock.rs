use std::time::{Duration, Instant};

/// Microseconds elapsed since some component's epoch.
pub type Micros = u64;

/// Monotonic clock anchored at a fixed epoch.
#[derive(Debug, Clone, Copy)]
pub struct Clock {
    epoch: Instant,
}

impl Clock {
    pub fn new() -> Clock {
        Clock {
            epoch: Instant::now(),
        }
    }

    pub fn now_micros(&self) -> Micros {
        self.epoch.elapsed().as_micros() as Micros
    }

    pub fn instant_at(&self, at: Micros) -> Instant {
        self.epoch + Duration::from_micros(at)
    }

    /// Sleeps until `at`; returns immediately if it already passed.
    pub fn sleep_until(&self, at: Micros) {
        let now = self.now_micros();
        if at > now {
            std::thread::sleep(Duration::from_micros(at - now));
        }
    }
}

impl Default for Clock {
    fn default() -> Self {
        Clock::new()
    }
}
