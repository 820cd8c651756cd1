//! Event detector: buffer, periodic analysis, action plugins.
//!
//! The detector never decodes payloads. Analyzers get a read-only
//! [`BufferView`] and keep whatever state they need between cycles; plugins
//! react to events (and, in pass-through mode, to every ingested envelope)
//! and hand outgoing messages back through a [`PluginContext`].

mod buffer;
pub mod plugins;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bus::{MessageEnvelope, NodeId, TopicPattern};
use crate::kernel::VirtualTime;
use crate::serde_ms;
use crate::task::Event;

pub use buffer::{BufferView, RingBuffer};

pub const DEFAULT_ANALYSIS_PERIOD: Duration = Duration::from_millis(100);
pub const DEFAULT_BUFFER_DURATION: Duration = Duration::from_secs(15);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerBinding {
    pub kind: String,
    #[serde(default)]
    pub params: Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PluginKind {
    Operator,
    Recording,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PluginBinding {
    pub kind: PluginKind,
    /// Event types delivered to the plugin; `"*"` matches every type.
    #[serde(default)]
    pub event_types: Vec<String>,
    #[serde(default)]
    pub params: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    #[serde(with = "serde_ms", default = "default_buffer")]
    pub buffer_duration: Duration,
    #[serde(with = "serde_ms", default = "default_period")]
    pub analysis_period: Duration,
    pub subscriptions: Vec<TopicPattern>,
    #[serde(default)]
    pub analyzers: Vec<AnalyzerBinding>,
    #[serde(default)]
    pub plugins: Vec<PluginBinding>,
}

fn default_buffer() -> Duration {
    DEFAULT_BUFFER_DURATION
}

fn default_period() -> Duration {
    DEFAULT_ANALYSIS_PERIOD
}

impl DetectorConfig {
    pub fn new(subscriptions: Vec<TopicPattern>) -> Self {
        DetectorConfig {
            buffer_duration: DEFAULT_BUFFER_DURATION,
            analysis_period: DEFAULT_ANALYSIS_PERIOD,
            subscriptions,
            analyzers: vec![],
            plugins: vec![],
        }
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.buffer_duration.is_zero() {
            return Err(DetectorError::Config("buffer_duration must be positive".into()));
        }
        if self.analysis_period.is_zero() {
            return Err(DetectorError::Config("analysis_period must be positive".into()));
        }
        if self.subscriptions.is_empty() {
            return Err(DetectorError::Config("at least one subscription is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("invalid detector config: {0}")]
    Config(String),
    #[error("query range is inverted: from {from} > to {to}")]
    BadRange { from: VirtualTime, to: VirtualTime },
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct AnalyzerError(pub String);

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct PluginError(pub String);

/// Developer-defined analysis run once per cycle over the buffer.
pub trait Analyzer {
    fn name(&self) -> &str;

    fn analyze(&mut self, now: VirtualTime, view: &BufferView<'_>) -> Result<Vec<Event>, AnalyzerError>;
}

/// Messages a plugin wants published, plus the time and node it runs on.
#[derive(Debug)]
pub struct PluginContext {
    pub now: VirtualTime,
    pub node: NodeId,
    pub outbox: Vec<MessageEnvelope>,
}

impl PluginContext {
    pub fn new(now: VirtualTime, node: NodeId) -> Self {
        PluginContext {
            now,
            node,
            outbox: vec![],
        }
    }
}

pub trait ActionPlugin {
    fn name(&self) -> &str;

    fn on_event(&mut self, _event: &Event, _ctx: &mut PluginContext) -> Result<(), PluginError> {
        Ok(())
    }

    /// Pass-through hook called for every ingested envelope.
    fn on_envelope(&mut self, _envelope: &MessageEnvelope, _ctx: &mut PluginContext) -> Result<(), PluginError> {
        Ok(())
    }

    /// Called at the end of every analysis cycle.
    fn flush(&mut self, _ctx: &mut PluginContext) -> Result<(), PluginError> {
        Ok(())
    }

    /// Called once when the hosting pod stops.
    fn close(&mut self) -> Result<(), PluginError> {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventFilter {
    Any,
    Types(Vec<String>),
}

impl EventFilter {
    pub fn from_types(types: &[String]) -> Self {
        if types.iter().any(|t| t == "*") {
            EventFilter::Any
        } else {
            EventFilter::Types(types.to_vec())
        }
    }

    pub fn matches(&self, event_type: &str) -> bool {
        match self {
            EventFilter::Any => true,
            EventFilter::Types(t) => t.iter().any(|x| x == event_type),
        }
    }
}

struct PluginSlot {
    filter: EventFilter,
    plugin: Box<dyn ActionPlugin>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DetectorStats {
    pub ingested: u64,
    pub cycles: u64,
    pub events: u64,
    pub analyzer_failures: u64,
    pub plugin_failures: u64,
    #[serde(skip)]
    pub last_cycle_wall: Duration,
    #[serde(skip)]
    pub max_cycle_wall: Duration,
}

pub struct EventDetector {
    name: String,
    node: NodeId,
    buffer_duration: Duration,
    analysis_period: Duration,
    subscriptions: Vec<TopicPattern>,
    buffer: RingBuffer,
    analyzers: Vec<Box<dyn Analyzer>>,
    plugins: Vec<PluginSlot>,
    stats: DetectorStats,
}

impl fmt::Debug for EventDetector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventDetector")
            .field("name", &self.name)
            .field("node", &self.node)
            .field("analyzers", &self.analyzers.iter().map(|a| a.name()).collect::<Vec<_>>())
            .field("plugins", &self.plugins.iter().map(|p| p.plugin.name()).collect::<Vec<_>>())
            .field("stats", &self.stats)
            .finish()
    }
}

impl EventDetector {
    pub fn new(name: impl Into<String>, node: NodeId, config: &DetectorConfig) -> Result<Self, DetectorError> {
        config.validate()?;
        Ok(EventDetector {
            name: name.into(),
            node,
            buffer_duration: config.buffer_duration,
            analysis_period: config.analysis_period,
            subscriptions: config.subscriptions.clone(),
            buffer: RingBuffer::new(config.buffer_duration),
            analyzers: vec![],
            plugins: vec![],
            stats: DetectorStats::default(),
        })
    }

    pub fn with_analyzer(mut self, analyzer: Box<dyn Analyzer>) -> Self {
        self.analyzers.push(analyzer);
        self
    }

    pub fn with_plugin(mut self, filter: EventFilter, plugin: Box<dyn ActionPlugin>) -> Self {
        self.plugins.push(PluginSlot { filter, plugin });
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn node(&self) -> &NodeId {
        &self.node
    }

    pub fn subscriptions(&self) -> &[TopicPattern] {
        &self.subscriptions
    }

    pub fn analysis_period(&self) -> Duration {
        self.analysis_period
    }

    pub fn buffer_duration(&self) -> Duration {
        self.buffer_duration
    }

    pub fn stats(&self) -> &DetectorStats {
        &self.stats
    }

    pub fn buffer(&self) -> &RingBuffer {
        &self.buffer
    }

    /// Buffers the envelope and forwards it to pass-through plugins.
    pub fn ingest(&mut self, envelope: Arc<MessageEnvelope>, ctx: &mut PluginContext) {
        self.stats.ingested += 1;
        for slot in &mut self.plugins {
            if let Err(e) = slot.plugin.on_envelope(&envelope, ctx) {
                self.stats.plugin_failures += 1;
                log::warn!("{}: plugin {} failed on envelope: {e}", self.name, slot.plugin.name());
            }
        }
        self.buffer.insert(envelope, ctx.now);
    }

    pub fn query_window(
        &self,
        now: VirtualTime,
        pattern: &TopicPattern,
        from: VirtualTime,
        to: VirtualTime,
    ) -> Result<Vec<Arc<MessageEnvelope>>, DetectorError> {
        if from > to {
            return Err(DetectorError::BadRange { from, to });
        }
        Ok(self
            .buffer
            .view(now)
            .query(pattern, from, to)
            .into_iter()
            .cloned()
            .collect())
    }

    /// Runs every analyzer once; failures are counted and skipped.
    pub fn analysis_cycle(&mut self, now: VirtualTime) -> Vec<Event> {
        let started = Instant::now();
        self.buffer.evict(now);
        let view = self.buffer.view(now);
        let mut events = vec![];
        for analyzer in &mut self.analyzers {
            match analyzer.analyze(now, &view) {
                Ok(mut evs) => events.append(&mut evs),
                Err(e) => {
                    self.stats.analyzer_failures += 1;
                    log::warn!("{}: analyzer {} failed: {e}", self.name, analyzer.name());
                }
            }
        }
        let elapsed = started.elapsed();
        self.stats.cycles += 1;
        self.stats.events += events.len() as u64;
        self.stats.last_cycle_wall = elapsed;
        self.stats.max_cycle_wall = self.stats.max_cycle_wall.max(elapsed);
        events
    }

    /// Hands the event to each matching plugin once, in declaration order.
    pub fn dispatch(&mut self, event: &Event, ctx: &mut PluginContext) {
        for slot in &mut self.plugins {
            if !slot.filter.matches(&event.event_type) {
                continue;
            }
            if let Err(e) = slot.plugin.on_event(event, ctx) {
                self.stats.plugin_failures += 1;
                log::warn!("{}: plugin {} failed: {e}", self.name, slot.plugin.name());
            }
        }
    }

    /// One full period: analyze, dispatch, flush plugins.
    pub fn run_cycle(&mut self, ctx: &mut PluginContext) -> Vec<Event> {
        let events = self.analysis_cycle(ctx.now);
        for event in &events {
            self.dispatch(event, ctx);
        }
        for slot in &mut self.plugins {
            if let Err(e) = slot.plugin.flush(ctx) {
                self.stats.plugin_failures += 1;
                log::warn!("{}: plugin {} flush failed: {e}", self.name, slot.plugin.name());
            }
        }
        events
    }

    pub fn close(&mut self) {
        for slot in &mut self.plugins {
            if let Err(e) = slot.plugin.close() {
                self.stats.plugin_failures += 1;
                log::warn!("{}: plugin {} close failed: {e}", self.name, slot.plugin.name());
            }
        }
    }
}

/// Shared event-type attribute map helper for custom analyzers.
pub fn attributes(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
    pairs.iter().map(|(k, v)| ((*k).to_owned(), v.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::Topic;
    use std::cell::RefCell;
    use std::rc::Rc;

    struct Fixed(&'static str, Vec<&'static str>);

    impl Analyzer for Fixed {
        fn name(&self) -> &str {
            self.0
        }

        fn analyze(&mut self, now: VirtualTime, _: &BufferView<'_>) -> Result<Vec<Event>, AnalyzerError> {
            Ok(self
                .1
                .iter()
                .map(|t| Event {
                    event_type: (*t).into(),
                    detected_at: now,
                    correlation_key: format!("{}:{t}", self.0),
                    attributes: BTreeMap::new(),
                })
                .collect())
        }
    }

    struct Broken;

    impl Analyzer for Broken {
        fn name(&self) -> &str {
            "broken"
        }

        fn analyze(&mut self, _: VirtualTime, _: &BufferView<'_>) -> Result<Vec<Event>, AnalyzerError> {
            Err(AnalyzerError("malformed payload".into()))
        }
    }

    struct Log(&'static str, Rc<RefCell<Vec<String>>>, bool);

    impl ActionPlugin for Log {
        fn name(&self) -> &str {
            self.0
        }

        fn on_event(&mut self, event: &Event, _: &mut PluginContext) -> Result<(), PluginError> {
            self.1.borrow_mut().push(format!("{}:{}", self.0, event.event_type));
            if self.2 {
                Err(PluginError("boom".into()))
            } else {
                Ok(())
            }
        }
    }

    fn detector() -> EventDetector {
        EventDetector::new(
            "d",
            "cloud".into(),
            &DetectorConfig::new(vec![TopicPattern::new("#").unwrap()]),
        )
        .unwrap()
    }

    fn ctx() -> PluginContext {
        PluginContext::new(VirtualTime::ZERO, "cloud".into())
    }

    #[test]
    fn config_validation() {
        let mut c = DetectorConfig::new(vec![]);
        assert!(c.validate().is_err());
        c.subscriptions.push(TopicPattern::new("#").unwrap());
        assert!(c.validate().is_ok());
        c.analysis_period = Duration::ZERO;
        assert!(c.validate().is_err());
        c.analysis_period = DEFAULT_ANALYSIS_PERIOD;
        c.buffer_duration = Duration::ZERO;
        assert!(EventDetector::new("x", "n".into(), &c).is_err());
    }

    #[test]
    fn no_analyzers_no_events() {
        assert!(detector().analysis_cycle(VirtualTime::ZERO).is_empty());
    }

    #[test]
    fn events_follow_declaration_order_and_failures_are_isolated() {
        let mut d = detector()
            .with_analyzer(Box::new(Fixed("a", vec!["x"])))
            .with_analyzer(Box::new(Broken))
            .with_analyzer(Box::new(Fixed("b", vec!["y", "z"])));
        let evs = d.analysis_cycle(VirtualTime::ZERO);
        let types: Vec<_> = evs.iter().map(|e| e.event_type.as_str()).collect();
        assert_eq!(types, vec!["x", "y", "z"]);
        assert_eq!(d.stats().analyzer_failures, 1);
    }

    #[test]
    fn dispatch_respects_filters_and_order() {
        let log = Rc::new(RefCell::new(vec![]));
        let mut d = detector()
            .with_plugin(EventFilter::from_types(&["x".into()]), Box::new(Log("p1", log.clone(), true)))
            .with_plugin(EventFilter::Any, Box::new(Log("p2", log.clone(), false)))
            .with_plugin(EventFilter::from_types(&[]), Box::new(Log("p3", log.clone(), false)));
        let ev = Event {
            event_type: "x".into(),
            detected_at: VirtualTime::ZERO,
            correlation_key: "k".into(),
            attributes: BTreeMap::new(),
        };
        d.dispatch(&ev, &mut ctx());
        assert_eq!(*log.borrow(), vec!["p1:x", "p2:x"]);
        assert_eq!(d.stats().plugin_failures, 1);
        let other = Event {
            event_type: "nobody".into(),
            ..ev
        };
        log.borrow_mut().clear();
        let mut d2 = detector().with_plugin(EventFilter::from_types(&["x".into()]), Box::new(Log("p1", log.clone(), false)));
        d2.dispatch(&other, &mut ctx());
        assert!(log.borrow().is_empty());
    }

    #[test]
    fn query_window_rejects_inverted_range() {
        let d = detector();
        assert!(matches!(
            d.query_window(
                VirtualTime::ZERO,
                &TopicPattern::new("#").unwrap(),
                VirtualTime::from_secs(2),
                VirtualTime::from_secs(1)
            ),
            Err(DetectorError::BadRange { .. })
        ));
    }

    #[test]
    fn ingest_buffers_without_decoding() {
        let mut d = detector();
        let mut c = ctx();
        let env = Arc::new(MessageEnvelope::new(
            Topic::new("/x").unwrap(),
            VirtualTime::ZERO,
            "cloud".into(),
            "opaque",
            vec![0xff, 0x00, 0x13],
        ));
        d.ingest(env.clone(), &mut c);
        let got = d
            .query_window(VirtualTime::ZERO, &TopicPattern::new("#").unwrap(), VirtualTime::ZERO, VirtualTime::ZERO)
            .unwrap();
        assert_eq!(got[0].payload, env.payload);
    }
}
