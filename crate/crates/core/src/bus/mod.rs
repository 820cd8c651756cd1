//! Topic-based publish/subscribe fabric with per-link latency.
//!
//! Publishing never calls handlers directly. Each matching subscription gets a
//! [`Delivery`] scheduled on the kernel at `publish_time + link latency`; the
//! owner of the event loop hands the delivery back to [`Bus::accept`] when it
//! fires, which re-checks membership at delivery time.

mod topic;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use bytes::Bytes;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{Kernel, VirtualTime};
use crate::serde_ms;

pub use topic::{names, Topic, TopicError, TopicPattern};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageEnvelope {
    pub topic: Topic,
    pub publish_time: VirtualTime,
    pub source_node: NodeId,
    pub schema_tag: String,
    pub payload: Bytes,
    /// Assigned by the bus on publish; strictly increasing per (source_node, topic).
    pub sequence: u64,
}

impl MessageEnvelope {
    pub fn new(
        topic: Topic,
        publish_time: VirtualTime,
        source_node: NodeId,
        schema_tag: impl Into<String>,
        payload: impl Into<Bytes>,
    ) -> Self {
        MessageEnvelope {
            topic,
            publish_time,
            source_node,
            schema_tag: schema_tag.into(),
            payload: payload.into(),
            sequence: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub endpoint_a: NodeId,
    pub endpoint_b: NodeId,
    /// Milliseconds in the topology file.
    #[serde(with = "serde_ms")]
    pub latency: Duration,
    #[serde(default = "default_true")]
    pub symmetric: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubscriptionId(u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExportId(u64);

/// Whether envelopes may cross node boundaries on their own.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CrossNodePolicy {
    /// Any subscription on any node receives matching envelopes.
    #[default]
    Open,
    /// Only topics currently exported (by a running bridge) cross a link.
    Gated,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BusError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Pattern(#[from] TopicError),
    #[error("publish_time {publish_time} is before now ({now})")]
    PublishInPast {
        publish_time: VirtualTime,
        now: VirtualTime,
    },
}

/// A pending hand-off of one envelope to one subscription.
#[derive(Clone, Debug)]
pub struct Delivery {
    pub subscription: SubscriptionId,
    pub envelope: Arc<MessageEnvelope>,
}

/// Anything that can hold deliveries until their virtual delivery time.
pub trait DeliverySink {
    fn now(&self) -> VirtualTime;
    fn schedule_delivery(&mut self, delivery: Delivery, at: VirtualTime);
}

impl<A: From<Delivery>> DeliverySink for Kernel<A> {
    fn now(&self) -> VirtualTime {
        Kernel::now(self)
    }

    fn schedule_delivery(&mut self, delivery: Delivery, at: VirtualTime) {
        self.schedule(A::from(delivery), at)
            .expect("deliveries are never scheduled in the past");
    }
}

#[derive(Debug)]
struct Subscription<H> {
    node: NodeId,
    pattern: TopicPattern,
    handler: H,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BusStats {
    pub published: u64,
    pub scheduled: u64,
    pub delivered: u64,
    pub dropped: u64,
}

#[derive(Debug)]
pub struct Bus<H> {
    nodes: BTreeSet<NodeId>,
    links: HashMap<(NodeId, NodeId), Duration>,
    subscriptions: BTreeMap<SubscriptionId, Subscription<H>>,
    next_id: u64,
    policy: CrossNodePolicy,
    exports: BTreeMap<ExportId, TopicPattern>,
    sequences: HashMap<(NodeId, Topic), u64>,
    // FIFO guard per (subscription, source) when link latency shrinks mid-flight.
    last_delivery: HashMap<(SubscriptionId, NodeId), VirtualTime>,
    stats: BusStats,
}

impl<H> Default for Bus<H> {
    fn default() -> Self {
        Bus::new(CrossNodePolicy::Open)
    }
}

impl<H> Bus<H> {
    pub fn new(policy: CrossNodePolicy) -> Self {
        Bus {
            nodes: BTreeSet::new(),
            links: HashMap::new(),
            subscriptions: BTreeMap::new(),
            next_id: 0,
            policy,
            exports: BTreeMap::new(),
            sequences: HashMap::new(),
            last_delivery: HashMap::new(),
            stats: BusStats::default(),
        }
    }

    pub fn policy(&self) -> CrossNodePolicy {
        self.policy
    }

    pub fn add_node(&mut self, node: NodeId) {
        self.nodes.insert(node);
    }

    pub fn has_node(&self, node: &NodeId) -> bool {
        self.nodes.contains(node)
    }

    fn require_node(&self, node: &NodeId) -> Result<(), BusError> {
        if self.nodes.contains(node) {
            Ok(())
        } else {
            Err(BusError::UnknownNode(node.clone()))
        }
    }

    pub fn set_link(&mut self, spec: LinkSpec) -> Result<(), BusError> {
        self.require_node(&spec.endpoint_a)?;
        self.require_node(&spec.endpoint_b)?;
        self.links.insert(
            (spec.endpoint_a.clone(), spec.endpoint_b.clone()),
            spec.latency,
        );
        if spec.symmetric {
            self.links
                .insert((spec.endpoint_b, spec.endpoint_a), spec.latency);
        }
        Ok(())
    }

    /// Same-node latency is always zero; unset links default to zero.
    pub fn latency(&self, from: &NodeId, to: &NodeId) -> Duration {
        if from == to {
            return Duration::ZERO;
        }
        self.links
            .get(&(from.clone(), to.clone()))
            .copied()
            .unwrap_or(Duration::ZERO)
    }

    pub fn subscribe(
        &mut self,
        node: &NodeId,
        pattern: &str,
        handler: H,
    ) -> Result<SubscriptionId, BusError> {
        let pattern = TopicPattern::new(pattern)?;
        self.subscribe_pattern(node, pattern, handler)
    }

    pub fn subscribe_pattern(
        &mut self,
        node: &NodeId,
        pattern: TopicPattern,
        handler: H,
    ) -> Result<SubscriptionId, BusError> {
        self.require_node(node)?;
        let id = SubscriptionId(self.next_id);
        self.next_id += 1;
        self.subscriptions.insert(
            id,
            Subscription {
                node: node.clone(),
                pattern,
                handler,
            },
        );
        Ok(id)
    }

    /// In-flight deliveries to the removed subscription are dropped.
    pub fn unsubscribe(&mut self, id: SubscriptionId) -> bool {
        let existed = self.subscriptions.remove(&id).is_some();
        if existed {
            self.last_delivery.retain(|(sub, _), _| *sub != id);
        }
        existed
    }

    pub fn subscription_count(&self) -> usize {
        self.subscriptions.len()
    }

    /// Allows matching topics to cross links under [`CrossNodePolicy::Gated`].
    pub fn export(&mut self, pattern: TopicPattern) -> ExportId {
        let id = ExportId(self.next_id);
        self.next_id += 1;
        self.exports.insert(id, pattern);
        id
    }

    pub fn withdraw(&mut self, id: ExportId) -> bool {
        self.exports.remove(&id).is_some()
    }

    pub fn is_exported(&self, topic: &Topic) -> bool {
        self.exports.values().any(|p| p.matches(topic))
    }

    fn crosses(&self, from: &NodeId, to: &NodeId, topic: &Topic) -> bool {
        from == to || self.policy == CrossNodePolicy::Open || self.is_exported(topic)
    }

    /// Assigns the envelope's sequence and schedules one delivery per matching
    /// subscription. Returns the assigned sequence.
    pub fn publish<S: DeliverySink>(
        &mut self,
        sink: &mut S,
        mut envelope: MessageEnvelope,
    ) -> Result<u64, BusError> {
        self.require_node(&envelope.source_node)?;
        let now = sink.now();
        if envelope.publish_time < now {
            return Err(BusError::PublishInPast {
                publish_time: envelope.publish_time,
                now,
            });
        }
        let seq = self
            .sequences
            .entry((envelope.source_node.clone(), envelope.topic.clone()))
            .or_insert(0);
        *seq += 1;
        envelope.sequence = *seq;
        self.stats.published += 1;

        let mut envelope_rc: Option<Arc<MessageEnvelope>> = None;
        for (id, sub) in &self.subscriptions {
            if !sub.pattern.matches(&envelope.topic)
                || !self.crosses(&envelope.source_node, &sub.node, &envelope.topic)
            {
                continue;
            }
            let mut at = envelope.publish_time + self.latency(&envelope.source_node, &sub.node);
            let key = (*id, envelope.source_node.clone());
            if let Some(prev) = self.last_delivery.get(&key) {
                at = at.max(*prev);
            }
            self.last_delivery.insert(key, at);
            let rc = envelope_rc
                .get_or_insert_with(|| Arc::new(envelope.clone()))
                .clone();
            sink.schedule_delivery(
                Delivery {
                    subscription: *id,
                    envelope: rc,
                },
                at,
            );
            self.stats.scheduled += 1;
        }
        Ok(envelope.sequence)
    }

    /// Resolves a fired delivery. Returns the destination node and handler if
    /// the subscription still exists and the route is still open.
    pub fn accept(&mut self, delivery: &Delivery) -> Option<(&NodeId, &H)> {
        let Some(sub) = self.subscriptions.get(&delivery.subscription) else {
            self.stats.dropped += 1;
            return None;
        };
        let env = &delivery.envelope;
        if !(env.source_node == sub.node
            || self.policy == CrossNodePolicy::Open
            || self.exports.values().any(|p| p.matches(&env.topic)))
        {
            self.stats.dropped += 1;
            return None;
        }
        self.stats.delivered += 1;
        Some((&sub.node, &sub.handler))
    }

    pub fn stats(&self) -> BusStats {
        self.stats
    }
}
