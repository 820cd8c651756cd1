use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use std::time::Duration;

use crate::bus::{MessageEnvelope, Topic, TopicPattern};
use crate::kernel::VirtualTime;

type Env = Arc<MessageEnvelope>;

fn order_key(e: &MessageEnvelope) -> (VirtualTime, &str, u64) {
    (e.publish_time, e.source_node.as_str(), e.sequence)
}

/// Time-bounded buffer of envelopes, kept per topic in publish order.
///
/// Eviction is lazy: [`RingBuffer::evict`] runs on insert, and read access
/// through a [`BufferView`] hides anything outside the window.
#[derive(Debug)]
pub struct RingBuffer {
    duration: Duration,
    topics: BTreeMap<Topic, VecDeque<Env>>,
    horizon: VirtualTime,
}

impl RingBuffer {
    pub fn new(duration: Duration) -> Self {
        RingBuffer {
            duration,
            topics: BTreeMap::new(),
            horizon: VirtualTime::ZERO,
        }
    }

    pub fn duration(&self) -> Duration {
        self.duration
    }

    /// Oldest publish time still retained after the last eviction.
    pub fn horizon(&self) -> VirtualTime {
        self.horizon
    }

    /// Entries with `publish_time <= cutoff` are outside the window at `now`.
    fn cutoff(&self, now: VirtualTime) -> Option<VirtualTime> {
        let d = self.duration.as_nanos() as u64;
        now.as_nanos().checked_sub(d).map(VirtualTime::from_nanos)
    }

    pub fn insert(&mut self, envelope: Env, now: VirtualTime) {
        let queue = self.topics.entry(envelope.topic.clone()).or_default();
        let key = order_key(&envelope);
        if queue.back().is_none_or(|last| order_key(last) <= key) {
            queue.push_back(envelope);
        } else {
            let pos = queue.partition_point(|e| order_key(e) <= key);
            queue.insert(pos, envelope);
        }
        self.evict(now);
    }

    pub fn evict(&mut self, now: VirtualTime) {
        let Some(cutoff) = self.cutoff(now) else {
            return;
        };
        self.topics.retain(|_, q| {
            while q.front().is_some_and(|e| e.publish_time <= cutoff) {
                q.pop_front();
            }
            !q.is_empty()
        });
        self.horizon = self
            .topics
            .values()
            .filter_map(|q| q.front().map(|e| e.publish_time))
            .min()
            .unwrap_or(now);
    }

    /// Physically stored entries, including any not yet lazily evicted.
    pub fn stored(&self) -> usize {
        self.topics.values().map(VecDeque::len).sum()
    }

    pub fn view(&self, now: VirtualTime) -> BufferView<'_> {
        BufferView {
            buffer: self,
            now,
            cutoff: self.cutoff(now),
        }
    }
}

/// Read-only view of a buffer as seen at one instant.
#[derive(Clone, Copy, Debug)]
pub struct BufferView<'a> {
    buffer: &'a RingBuffer,
    now: VirtualTime,
    cutoff: Option<VirtualTime>,
}

impl<'a> BufferView<'a> {
    pub fn now(&self) -> VirtualTime {
        self.now
    }

    fn live(&self, e: &MessageEnvelope) -> bool {
        self.cutoff.is_none_or(|c| e.publish_time > c)
    }

    pub fn topics(&self) -> impl Iterator<Item = &'a Topic> + '_ {
        self.buffer
            .topics
            .iter()
            .filter(|(_, q)| q.back().is_some_and(|e| self.live(e)))
            .map(|(t, _)| t)
    }

    /// Most recent retained envelope on `topic`.
    pub fn latest(&self, topic: &Topic) -> Option<&'a Env> {
        self.buffer
            .topics
            .get(topic)
            .and_then(|q| q.back())
            .filter(|e| self.live(e))
    }

    pub fn len(&self) -> usize {
        self.buffer
            .topics
            .values()
            .map(|q| q.iter().filter(|e| self.live(e)).count())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, topic: &Topic) -> usize {
        self.buffer
            .topics
            .get(topic)
            .map_or(0, |q| q.iter().filter(|e| self.live(e)).count())
    }

    /// Retained envelopes on matching topics with `publish_time` in
    /// `[from, to]`, ordered by `(publish_time, topic, source, sequence)`.
    pub fn query(&self, pattern: &TopicPattern, from: VirtualTime, to: VirtualTime) -> Vec<&'a Env> {
        let mut out: Vec<&'a Env> = vec![];
        for (topic, q) in &self.buffer.topics {
            if !pattern.matches(topic) {
                continue;
            }
            let start = q.partition_point(|e| e.publish_time < from);
            out.extend(
                q.range(start..)
                    .take_while(|e| e.publish_time <= to)
                    .filter(|e| self.live(e)),
            );
        }
        out.sort_by(|a, b| {
            (a.publish_time, &a.topic, a.source_node.as_str(), a.sequence).cmp(&(
                b.publish_time,
                &b.topic,
                b.source_node.as_str(),
                b.sequence,
            ))
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bytes::Bytes;

    fn env(topic: &str, t_ms: u64, seq: u64) -> Env {
        Arc::new(MessageEnvelope {
            topic: Topic::new(topic).unwrap(),
            publish_time: VirtualTime::from_millis(t_ms),
            source_node: "n".into(),
            schema_tag: "pose".into(),
            payload: Bytes::from_static(b"p"),
            sequence: seq,
        })
    }

    #[test]
    fn window_is_half_open() {
        let mut buf = RingBuffer::new(Duration::from_secs(10));
        for s in 0..=15 {
            buf.insert(env("/a", s * 1000, s + 1), VirtualTime::from_secs(s));
        }
        let now = VirtualTime::from_secs(15);
        let got = buf.view(now).query(
            &TopicPattern::new("/a").unwrap(),
            VirtualTime::ZERO,
            now,
        );
        let times: Vec<u64> = got.iter().map(|e| e.publish_time.as_nanos() / 1_000_000_000).collect();
        assert_eq!(times, (6..=15).collect::<Vec<_>>());
    }

    #[test]
    fn equal_times_keep_sequence_order() {
        let mut buf = RingBuffer::new(Duration::from_secs(10));
        buf.insert(env("/a", 5, 2), VirtualTime::from_millis(5));
        buf.insert(env("/a", 5, 1), VirtualTime::from_millis(5));
        let v = buf.view(VirtualTime::from_millis(5));
        let got = v.query(&TopicPattern::new("#").unwrap(), VirtualTime::ZERO, VirtualTime::MAX);
        assert_eq!(got.iter().map(|e| e.sequence).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn hundred_hertz_bounded() {
        let mut buf = RingBuffer::new(Duration::from_secs(10));
        for k in 0..1000u64 {
            let t = VirtualTime::from_millis(k * 10);
            buf.insert(env("/vehicle/0/pose", k * 10, k + 1), t);
            assert!(buf.view(t).count(&Topic::new("/vehicle/0/pose").unwrap()) <= 1000);
        }
        assert_eq!(buf.stored(), 1000);
        buf.insert(env("/vehicle/0/pose", 10_000, 1001), VirtualTime::from_secs(10));
        assert_eq!(buf.stored(), 1000);
    }

    #[test]
    fn stale_range_is_empty() {
        let mut buf = RingBuffer::new(Duration::from_secs(1));
        buf.insert(env("/a", 0, 1), VirtualTime::ZERO);
        let v = buf.view(VirtualTime::from_secs(5));
        assert!(v
            .query(&TopicPattern::new("#").unwrap(), VirtualTime::ZERO, VirtualTime::from_secs(5))
            .is_empty());
        assert!(v.latest(&Topic::new("/a").unwrap()).is_none());
    }
}
