//! Events and task descriptions exchanged between detectors and managers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bus::Topic;
use crate::control::NodeRole;
use crate::kernel::VirtualTime;

pub const SCHEMA_TASK: &str = "task";
pub const SCHEMA_DECISION: &str = "decision";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub event_type: String,
    pub detected_at: VirtualTime,
    pub correlation_key: String,
    pub attributes: BTreeMap<String, Value>,
}

impl Event {
    /// A vehicle-pair event. The key is independent of argument order.
    pub fn pair(event_type: &str, detected_at: VirtualTime, a: u32, b: u32, distance: f64) -> Self {
        let (lo, hi) = (a.min(b), a.max(b));
        let mut attributes = BTreeMap::new();
        attributes.insert("vehicles".to_owned(), Value::from(vec![lo, hi]));
        attributes.insert("distance".to_owned(), Value::from(distance));
        Event {
            event_type: event_type.to_owned(),
            detected_at,
            correlation_key: pair_key(lo, hi),
            attributes,
        }
    }
}

pub fn pair_key(a: u32, b: u32) -> String {
    format!("pair:{}-{}", a.min(b), a.max(b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intent {
    Deploy,
    Reconfigure,
    Shutdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapabilityRequest {
    pub tag: String,
    #[serde(default = "one")]
    pub count: u32,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

fn one() -> u32 {
    1
}

impl CapabilityRequest {
    pub fn new(tag: &str, count: u32, params: Value) -> Self {
        CapabilityRequest {
            tag: tag.to_owned(),
            count,
            params: serde_json::from_value(params).unwrap_or_default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDescription {
    pub request_id: String,
    pub correlation_key: String,
    pub intent: Intent,
    #[serde(default)]
    pub required_capabilities: Vec<CapabilityRequest>,
    #[serde(default)]
    pub data_sources: Vec<Topic>,
    #[serde(default)]
    pub placement_hint: Option<NodeRole>,
    pub issued_at: VirtualTime,
    /// Name of the application manager this request is addressed to.
    pub manager: String,
}

impl TaskDescription {
    /// Structural checks; returns a human-readable reason on failure.
    pub fn validate(&self) -> Result<(), String> {
        if self.request_id.is_empty() {
            return Err("empty request_id".into());
        }
        if self.correlation_key.is_empty() {
            return Err("empty correlation_key".into());
        }
        match self.intent {
            Intent::Deploy | Intent::Reconfigure if self.required_capabilities.is_empty() => {
                Err("deploy requires at least one capability".into())
            }
            _ if self.required_capabilities.iter().any(|c| c.count == 0 || c.tag.is_empty()) => {
                Err("capability with empty tag or zero count".into())
            }
            _ => Ok(()),
        }
    }

    pub fn to_payload(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("task descriptions always serialize")
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn pair_key_is_order_independent() {
        let a = Event::pair("pair-entered", VirtualTime::ZERO, 14, 0, 350.0);
        let b = Event::pair("pair-entered", VirtualTime::ZERO, 0, 14, 350.0);
        assert_eq!(a.correlation_key, "pair:0-14");
        assert_eq!(a, b);
    }

    #[test]
    fn validation() {
        let mut td = TaskDescription {
            request_id: "r1".into(),
            correlation_key: "pair:0-1".into(),
            intent: Intent::Deploy,
            required_capabilities: vec![],
            data_sources: vec![],
            placement_hint: Some(NodeRole::Cloud),
            issued_at: VirtualTime::ZERO,
            manager: "m".into(),
        };
        assert!(td.validate().is_err());
        td.required_capabilities
            .push(CapabilityRequest::new("recorder", 1, json!({})));
        assert!(td.validate().is_ok());
        td.required_capabilities[0].count = 0;
        assert!(td.validate().is_err());
        td.intent = Intent::Shutdown;
        td.required_capabilities.clear();
        assert!(td.validate().is_ok());
        let back = TaskDescription::from_payload(&td.to_payload()).unwrap();
        assert_eq!(back, td);
    }
}
