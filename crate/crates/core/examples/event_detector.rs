//! An event detector with a custom threshold analyzer and a logging plugin,
//! fed by hand.
//!
//! `cargo run --example event_detector`

use std::sync::Arc;

use orchsim::bus::{MessageEnvelope, NodeId, Topic, TopicPattern};
use orchsim::detector::{
    attributes, ActionPlugin, Analyzer, AnalyzerError, BufferView, DetectorConfig, EventDetector, EventFilter,
    PluginContext, PluginError,
};
use orchsim::kernel::VirtualTime;
use orchsim::task::Event;

/// Fires once the newest temperature reading exceeds a limit.
struct Overheat {
    topic: Topic,
    limit: u8,
    hot: bool,
}

impl Analyzer for Overheat {
    fn name(&self) -> &str {
        "overheat"
    }

    fn analyze(&mut self, now: VirtualTime, view: &BufferView<'_>) -> Result<Vec<Event>, AnalyzerError> {
        let Some(env) = view.latest(&self.topic) else { return Ok(vec![]) };
        let reading = *env.payload.first().ok_or_else(|| AnalyzerError("empty reading".into()))?;
        let was = std::mem::replace(&mut self.hot, reading > self.limit);
        if self.hot && !was {
            return Ok(vec![Event {
                event_type: "overheat".into(),
                detected_at: now,
                correlation_key: "motor-1".into(),
                attributes: attributes(&[("reading", reading.into())]),
            }]);
        }
        Ok(vec![])
    }
}

struct Print;

impl ActionPlugin for Print {
    fn name(&self) -> &str {
        "print"
    }

    fn on_event(&mut self, event: &Event, ctx: &mut PluginContext) -> Result<(), PluginError> {
        println!("{:>10}  {} {:?} on {}", ctx.now, event.event_type, event.attributes, ctx.node);
        Ok(())
    }
}

fn main() {
    let topic = Topic::new("/motor/1/temp").unwrap();
    let node = NodeId::new("edge-0");
    let config = DetectorConfig::new(vec![TopicPattern::new("/motor/+/temp").unwrap()]);
    let mut detector = EventDetector::new("thermal", node.clone(), &config)
        .unwrap()
        .with_analyzer(Box::new(Overheat {
            topic: topic.clone(),
            limit: 80,
            hot: false,
        }))
        .with_plugin(EventFilter::Any, Box::new(Print));

    let readings = [60u8, 70, 85, 90, 75, 95];
    for (i, r) in readings.into_iter().enumerate() {
        let now = VirtualTime::from_millis(100 * i as u64);
        let mut ctx = PluginContext::new(now, node.clone());
        let env = MessageEnvelope::new(topic.clone(), now, node.clone(), "u8", vec![r]);
        detector.ingest(Arc::new(env), &mut ctx);
        detector.run_cycle(&mut ctx);
    }
    println!("{:?}", detector.stats());
}
