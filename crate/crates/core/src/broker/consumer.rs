use std::collections::VecDeque;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::source::{EventSource, SourceClosed};
use crate::wire::{decode_event, Event, KindSet};

use super::{BrokerApi, BrokerError};

#[derive(Debug, Clone)]
pub struct ConsumerConfig {
    pub consumer_id: String,
    /// Sleep between rounds that found every topic empty.
    pub poll_interval: Duration,
    pub max_records: usize,
    /// Start from committed offsets instead of 0.
    pub resume: bool,
    pub auto_commit: bool,
}

impl ConsumerConfig {
    pub fn new(consumer_id: &str) -> ConsumerConfig {
        ConsumerConfig {
            consumer_id: consumer_id.to_string(),
            poll_interval: Duration::from_millis(1),
            max_records: 256,
            resume: false,
            auto_commit: true,
        }
    }
}

/// Pull-based consumer over the per-kind topics of a [`BrokerApi`].
pub struct BrokerConsumer {
    api: Arc<dyn BrokerApi>,
    cfg: ConsumerConfig,
    topics: Vec<TopicPos>,
    buffer: VecDeque<(usize, u64, Event)>,
    malformed: u64,
}

struct TopicPos {
    topic: &'static str,
    fetch: u64,
    /// Offset after the last record handed out.
    delivered: u64,
    committed: u64,
}

impl BrokerConsumer {
    pub fn new(
        api: Arc<dyn BrokerApi>,
        kinds: KindSet,
        cfg: ConsumerConfig,
    ) -> Result<BrokerConsumer, BrokerError> {
        let mut topics = Vec::new();
        for kind in kinds.iter() {
            let from = if cfg.resume {
                api.committed(&cfg.consumer_id, kind.topic())?
            } else {
                0
            };
            topics.push(TopicPos {
                topic: kind.topic(),
                fetch: from,
                delivered: from,
                committed: from,
            });
        }
        Ok(BrokerConsumer {
            api,
            cfg,
            topics,
            buffer: VecDeque::new(),
            malformed: 0,
        })
    }

    /// Offset following the last delivered record, per topic.
    pub fn positions(&self) -> Vec<(&'static str, u64)> {
        self.topics.iter().map(|t| (t.topic, t.delivered)).collect()
    }

    /// Commits everything handed out so far. Records fetched but not yet
    /// delivered stay uncommitted, so delivery is at-least-once.
    pub fn commit_delivered(&mut self) -> Result<(), BrokerError> {
        for t in self.topics.iter_mut() {
            if t.delivered > t.committed {
                self.api.commit(&self.cfg.consumer_id, t.topic, t.delivered)?;
                t.committed = t.delivered;
            }
        }
        Ok(())
    }

    pub fn malformed(&self) -> u64 {
        self.malformed
    }

    /// One non-blocking pass over all topics; returns records fetched.
    fn fetch(&mut self) -> Result<usize, BrokerError> {
        if self.cfg.auto_commit {
            self.commit_delivered()?;
        }
        let mut fetched = Vec::new();
        for (idx, t) in self.topics.iter_mut().enumerate() {
            let batch = self.api.poll(
                &self.cfg.consumer_id,
                t.topic,
                t.fetch,
                self.cfg.max_records,
                Duration::ZERO,
            )?;
            let Some(last) = batch.last() else { continue };
            t.fetch = last.offset + 1;
            for r in &batch {
                match decode_event(&r.bytes) {
                    Ok(ev) => fetched.push((idx, r.offset, ev)),
                    Err(e) => {
                        log::warn!("{}@{}: undecodable record: {e}", t.topic, r.offset);
                        self.malformed += 1;
                        t.delivered = t.delivered.max(r.offset + 1);
                    }
                }
            }
        }
        // Topics are independently ordered; merge by the core's sequence.
        fetched.sort_by_key(|(_, _, e)| e.seq);
        let n = fetched.len();
        self.buffer.extend(fetched);
        Ok(n)
    }
}

impl EventSource for BrokerConsumer {
    fn next_event(&mut self, timeout: Duration) -> Result<Option<Event>, SourceClosed> {
        let deadline = Instant::now() + timeout;
        loop {
            if let Some((idx, offset, ev)) = self.buffer.pop_front() {
                self.topics[idx].delivered = offset + 1;
                return Ok(Some(ev));
            }
            match self.fetch() {
                Ok(0) => {}
                Ok(_) => continue,
                Err(BrokerError::Transport(e)) => {
                    log::warn!("{}: broker unreachable: {e}", self.cfg.consumer_id);
                    return Err(SourceClosed);
                }
                Err(e) => log::warn!("{}: poll failed: {e}", self.cfg.consumer_id),
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            std::thread::sleep(self.cfg.poll_interval.min(deadline - now));
        }
    }
}

impl Drop for BrokerConsumer {
    fn drop(&mut self) {
        if self.cfg.auto_commit {
            let _ = self.commit_delivered();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::broker::Broker;
    use crate::wire::{encode_event, DatapathId, EventBody, EventKind};

    fn device(seq: u64) -> Event {
        Event::new(
            seq,
            0,
            EventBody::TopologyDevice {
                dpid: DatapathId(seq),
                up: true,
            },
        )
    }

    fn port(seq: u64) -> Event {
        Event::new(
            seq,
            0,
            EventBody::TopologyPort {
                dpid: DatapathId(1),
                port: 1,
                up: true,
            },
        )
    }

    fn publish(b: &Broker, e: &Event) {
        b.publish(e.kind().topic(), &encode_event(e).unwrap()).unwrap();
    }

    #[test]
    fn merges_topics_by_seq() {
        let b = Arc::new(Broker::new());
        publish(&b, &device(0));
        publish(&b, &port(1));
        publish(&b, &device(2));
        let kinds = KindSet::EMPTY.with(EventKind::Device).with(EventKind::Port);
        let mut c = BrokerConsumer::new(b.clone(), kinds, ConsumerConfig::new("c")).unwrap();
        let seqs: Vec<u64> = (0..3)
            .map(|_| c.next_event(Duration::ZERO).unwrap().unwrap().seq)
            .collect();
        assert_eq!(seqs, vec![0, 1, 2]);
        assert_eq!(c.next_event(Duration::from_millis(3)).unwrap(), None);
    }

    #[test]
    fn resume_skips_committed() {
        let b = Arc::new(Broker::new());
        let kinds = KindSet::EMPTY.with(EventKind::Device);
        publish(&b, &device(0));
        publish(&b, &device(1));
        {
            let mut c = BrokerConsumer::new(b.clone(), kinds, ConsumerConfig::new("c")).unwrap();
            assert_eq!(c.next_event(Duration::ZERO).unwrap().unwrap().seq, 0);
        }
        publish(&b, &device(2));
        assert_eq!(b.committed("c", "events.device").unwrap(), 1);
        let mut cfg = ConsumerConfig::new("c");
        cfg.resume = true;
        let mut c = BrokerConsumer::new(b.clone(), kinds, cfg).unwrap();
        assert_eq!(c.next_event(Duration::ZERO).unwrap().unwrap().seq, 1);
        assert_eq!(c.next_event(Duration::ZERO).unwrap().unwrap().seq, 2);
    }
}
