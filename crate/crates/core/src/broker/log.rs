use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::{Duration, Instant};

use crate::clock::{Clock, Micros};

use super::{BrokerApi, BrokerError, Record, MAX_RECORD};

#[derive(Default)]
struct Topic {
    records: Mutex<Vec<Record>>,
    appended: Condvar,
}

/// In-memory broker: one append-only log per topic plus committed offsets.
pub struct Broker {
    clock: Clock,
    topics: RwLock<HashMap<String, Arc<Topic>>>,
    committed: Mutex<HashMap<(String, String), u64>>,
}

impl Default for Broker {
    fn default() -> Self {
        Broker::new()
    }
}

impl Broker {
    pub fn new() -> Broker {
        Broker {
            clock: Clock::new(),
            topics: RwLock::new(HashMap::new()),
            committed: Mutex::new(HashMap::new()),
        }
    }

    fn topic(&self, name: &str) -> Arc<Topic> {
        if let Some(t) = self.topics.read().unwrap().get(name) {
            return t.clone();
        }
        self.topics
            .write()
            .unwrap()
            .entry(name.to_string())
            .or_default()
            .clone()
    }

    pub fn len(&self, topic: &str) -> u64 {
        match self.topics.read().unwrap().get(topic) {
            Some(t) => t.records.lock().unwrap().len() as u64,
            None => 0,
        }
    }

    pub fn topics(&self) -> Vec<String> {
        let mut names: Vec<String> = self.topics.read().unwrap().keys().cloned().collect();
        names.sort();
        names
    }

    /// Records across all topics.
    pub fn total_records(&self) -> u64 {
        self.topics
            .read()
            .unwrap()
            .values()
            .map(|t| t.records.lock().unwrap().len() as u64)
            .sum()
    }

    pub fn append_micros(&self, topic: &str, offset: u64) -> Option<Micros> {
        let t = self.topics.read().unwrap().get(topic)?.clone();
        let records = t.records.lock().unwrap();
        records.get(offset as usize).map(|r| r.append_micros)
    }
}

impl BrokerApi for Broker {
    fn publish(&self, topic: &str, bytes: &[u8]) -> Result<u64, BrokerError> {
        if bytes.len() > MAX_RECORD {
            return Err(BrokerError::RecordTooLarge(bytes.len()));
        }
        let t = self.topic(topic);
        let mut records = t.records.lock().unwrap();
        let offset = records.len() as u64;
        records.push(Record {
            offset,
            bytes: Arc::from(bytes),
            append_micros: self.clock.now_micros(),
        });
        drop(records);
        t.appended.notify_all();
        Ok(offset)
    }

    fn poll(
        &self,
        _consumer: &str,
        topic: &str,
        from: u64,
        max_records: usize,
        max_wait: Duration,
    ) -> Result<Vec<Record>, BrokerError> {
        let t = self.topic(topic);
        let deadline = Instant::now() + max_wait;
        let mut records = t.records.lock().unwrap();
        loop {
            let len = records.len() as u64;
            if from > len {
                return Err(BrokerError::OffsetOutOfRange { offset: from, len });
            }
            if from < len || max_records == 0 {
                let end = (from as usize).saturating_add(max_records).min(records.len());
                return Ok(records[from as usize..end].to_vec());
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(Vec::new());
            }
            records = t.appended.wait_timeout(records, deadline - now).unwrap().0;
        }
    }

    fn commit(&self, consumer: &str, topic: &str, offset: u64) -> Result<(), BrokerError> {
        let len = self.len(topic);
        if offset > len {
            return Err(BrokerError::OffsetOutOfRange { offset, len });
        }
        self.committed
            .lock()
            .unwrap()
            .insert((consumer.to_string(), topic.to_string()), offset);
        Ok(())
    }

    fn committed(&self, consumer: &str, topic: &str) -> Result<u64, BrokerError> {
        Ok(self
            .committed
            .lock()
            .unwrap()
            .get(&(consumer.to_string(), topic.to_string()))
            .copied()
            .unwrap_or(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NOW: Duration = Duration::ZERO;

    #[test]
    fn offsets_are_dense() {
        let b = Broker::new();
        assert_eq!(b.publish("t", b"a").unwrap(), 0);
        assert_eq!(b.publish("t", b"b").unwrap(), 1);
        assert_eq!(b.publish("t", b"c").unwrap(), 2);
        assert_eq!(b.publish("u", b"x").unwrap(), 0);
        assert_eq!(b.total_records(), 4);
    }

    #[test]
    fn poll_batches() {
        let b = Broker::new();
        for i in 0..5u8 {
            b.publish("t", &[i]).unwrap();
        }
        let batch = b.poll("c", "t", 0, 2, NOW).unwrap();
        assert_eq!(batch.iter().map(|r| r.offset).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(&*batch[1].bytes, &[1]);
        assert!(b.poll("c", "t", 5, 10, NOW).unwrap().is_empty());
        assert!(matches!(
            b.poll("c", "t", 6, 10, NOW),
            Err(BrokerError::OffsetOutOfRange { offset: 6, len: 5 })
        ));
    }

    #[test]
    fn poll_waits_for_publish() {
        let b = Arc::new(Broker::new());
        let p = b.clone();
        let t = std::thread::spawn(move || {
            std::thread::sleep(Duration::from_millis(20));
            p.publish("t", b"late").unwrap();
        });
        let batch = b.poll("c", "t", 0, 10, Duration::from_secs(5)).unwrap();
        assert_eq!(&*batch[0].bytes, b"late");
        t.join().unwrap();
    }

    #[test]
    fn empty_poll_times_out() {
        let b = Broker::new();
        let start = Instant::now();
        assert!(b.poll("c", "t", 0, 10, Duration::from_millis(10)).unwrap().is_empty());
        assert!(start.elapsed() >= Duration::from_millis(10));
    }

    #[test]
    fn oversized_record_rejected() {
        let b = Broker::new();
        let big = vec![0u8; MAX_RECORD + 1];
        assert_eq!(b.publish("t", &big), Err(BrokerError::RecordTooLarge(MAX_RECORD + 1)));
        assert!(b.publish("t", &big[..MAX_RECORD]).is_ok());
    }

    #[test]
    fn commit_and_resume() {
        let b = Broker::new();
        assert_eq!(b.committed("c", "t").unwrap(), 0);
        for i in 0..4u8 {
            b.publish("t", &[i]).unwrap();
        }
        b.commit("c", "t", 3).unwrap();
        assert_eq!(b.committed("c", "t").unwrap(), 3);
        assert_eq!(b.committed("other", "t").unwrap(), 0);
        assert!(b.commit("c", "t", 5).is_err());
    }
}
