//! Built-in action plugins: task emission and recording.

use std::cell::RefCell;
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ActionPlugin, PluginContext, PluginError};
use crate::bus::{names, MessageEnvelope, Topic, TopicPattern};
use crate::control::NodeRole;
use crate::recorder::{RecordEntry, RecordStore, SessionId};
use crate::task::{CapabilityRequest, Event, Intent, TaskDescription, SCHEMA_TASK};
use crate::template::{self, Bindings};

/// Capability entry in an operator rule; `params` may hold `${attr}`
/// placeholders bound from the event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapabilityRule {
    pub tag: String,
    #[serde(default = "one")]
    pub count: u32,
    #[serde(default)]
    pub params: Value,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorRule {
    pub event_type: String,
    pub intent: Intent,
    #[serde(default)]
    pub capabilities: Vec<CapabilityRule>,
    /// Topic templates; array-valued attributes fan out.
    #[serde(default)]
    pub data_sources: Vec<String>,
    #[serde(default)]
    pub placement_hint: Option<NodeRole>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    /// Application manager the emitted tasks are addressed to.
    pub manager: String,
    pub rules: Vec<OperatorRule>,
}

/// Translates events into task descriptions on `/operator/tasks`.
#[derive(Debug)]
pub struct OperatorPlugin {
    name: String,
    config: OperatorConfig,
    issued: u64,
}

impl OperatorPlugin {
    pub fn new(name: impl Into<String>, config: OperatorConfig) -> Self {
        OperatorPlugin {
            name: name.into(),
            config,
            issued: 0,
        }
    }

    pub fn from_params(name: impl Into<String>, params: &Value) -> Result<Self, PluginError> {
        let config = serde_json::from_value(params.clone())
            .map_err(|e| PluginError(format!("operator params: {e}")))?;
        Ok(Self::new(name, config))
    }

    pub fn issued(&self) -> u64 {
        self.issued
    }

    fn bindings(event: &Event) -> Bindings {
        let mut b: Bindings = event.attributes.clone();
        b.insert("correlation_key".into(), Value::from(event.correlation_key.clone()));
        b.insert("event_type".into(), Value::from(event.event_type.clone()));
        b
    }

    /// Builds the task for `event` under `rule`, without publishing it.
    pub fn build_task(&mut self, rule: &OperatorRule, event: &Event, now: crate::kernel::VirtualTime) -> Result<TaskDescription, PluginError> {
        let bindings = Self::bindings(event);
        let err = |e: template::TemplateError| PluginError(format!("rule for {}: {e}", rule.event_type));
        let mut required_capabilities = vec![];
        for cap in &rule.capabilities {
            let params = template::substitute(&cap.params, &bindings).map_err(err)?;
            let params = match params {
                Value::Null => Default::default(),
                Value::Object(m) => m.into_iter().collect(),
                other => return Err(PluginError(format!("capability params must be an object, got {other}"))),
            };
            required_capabilities.push(CapabilityRequest {
                tag: cap.tag.clone(),
                count: cap.count,
                params,
            });
        }
        let mut data_sources = vec![];
        for tpl in &rule.data_sources {
            for t in template::expand(tpl, &bindings).map_err(err)? {
                data_sources.push(Topic::new(t).map_err(|e| PluginError(e.to_string()))?);
            }
        }
        self.issued += 1;
        Ok(TaskDescription {
            request_id: format!("{}-{:06}", self.name, self.issued),
            correlation_key: event.correlation_key.clone(),
            intent: rule.intent,
            required_capabilities,
            data_sources,
            placement_hint: rule.placement_hint,
            issued_at: now,
            manager: self.config.manager.clone(),
        })
    }
}

impl ActionPlugin for OperatorPlugin {
    fn name(&self) -> &str {
        &self.name
    }

    fn on_event(&mut self, event: &Event, ctx: &mut PluginContext) -> Result<(), PluginError> {
        let rules: Vec<OperatorRule> = self
            .config
            .rules
            .iter()
            .filter(|r| r.event_type == event.event_type)
            .cloned()
            .collect();
        for rule in &rules {
            let task = self.build_task(rule, event, ctx.now)?;
            log::debug!("{}: {:?} {} as {}", self.name, task.intent, task.correlation_key, task.request_id);
            ctx.outbox.push(MessageEnvelope::new(
                names::operator_tasks(),
                ctx.now,
                ctx.node.clone(),
                SCHEMA_TASK,
                task.to_payload(),
            ));
        }
        Ok(())
    }
}

/// Appends every passing envelope to a shared store.
///
/// The store lives outside the plugin so that a restarted recorder resumes
/// the same file with a fresh session.
#[derive(Debug)]
pub struct RecordingPlugin {
    name: String,
    store: Rc<RefCell<RecordStore>>,
    filter: Vec<TopicPattern>,
    session: SessionId,
}

impl RecordingPlugin {
    /// An empty `filter` records everything.
    pub fn new(name: impl Into<String>, store: Rc<RefCell<RecordStore>>, filter: Vec<TopicPattern>) -> Self {
        let session = store.borrow_mut().begin_session();
        RecordingPlugin {
            name: name.into(),
            store,
            filter,
            session,
        }
    }

    pub fn session(&self) -> SessionId {
        self.session
    }

    pub fn store(&self) -> &Rc<RefCell<RecordStore>> {
        &self.store
    }

    fn wants(&self, topic: &Topic) -> bool {
        self.filter.is_empty() || self.filter.iter().any(|p| p.matches(topic))
    }
}

impl ActionPlugin for RecordingPlugin {
    fn name(&self) -> &str {
        &self.name
    }

    fn on_envelope(&mut self, envelope: &MessageEnvelope, ctx: &mut PluginContext) -> Result<(), PluginError> {
        if !self.wants(&envelope.topic) {
            return Ok(());
        }
        let mut store = self.store.borrow_mut();
        let entry = RecordEntry::from_envelope(envelope, ctx.now);
        match store.append(entry.clone()) {
            Ok(_) => Ok(()),
            Err(e) if e.is_retryable() => match store.append(entry) {
                Ok(_) => Ok(()),
                Err(e) => {
                    store.record_drop();
                    Err(PluginError(format!("dropped entry on {}: {e}", envelope.topic)))
                }
            },
            Err(e) => {
                store.record_drop();
                Err(PluginError(format!("dropped entry on {}: {e}", envelope.topic)))
            }
        }
    }

    fn flush(&mut self, _ctx: &mut PluginContext) -> Result<(), PluginError> {
        self.store
            .borrow_mut()
            .flush()
            .map_err(|e| PluginError(e.to_string()))
    }

    fn close(&mut self) -> Result<(), PluginError> {
        self.store
            .borrow_mut()
            .flush()
            .map_err(|e| PluginError(e.to_string()))
    }
}
