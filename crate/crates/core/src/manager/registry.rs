//! Static catalog of verified microservice templates.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::control::{serde_opt_ms, BehaviorKind, NodeRole, Resources};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    Integer,
    Number,
    String,
    Bool,
    IntegerList,
    Json,
}

impl ParamType {
    pub fn accepts(self, v: &Value) -> bool {
        match self {
            ParamType::Integer => v.is_i64() || v.is_u64(),
            ParamType::Number => v.is_number(),
            ParamType::String => v.is_string(),
            ParamType::Bool => v.is_boolean(),
            ParamType::IntegerList => v
                .as_array()
                .is_some_and(|a| a.iter().all(|x| x.is_i64() || x.is_u64())),
            ParamType::Json => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementRule {
    #[serde(default)]
    pub role: Option<NodeRole>,
    /// Node id template, e.g. `"vehicle-{vehicle_id}"`; pins the pod.
    #[serde(default)]
    pub node: Option<String>,
}

/// Spreads one element of an array parameter over each replica.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceBinding {
    pub from: String,
    pub bind_as: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicroserviceTemplate {
    pub name: String,
    pub capability_tags: BTreeSet<String>,
    pub image_ref: String,
    pub resource_request: Resources,
    #[serde(default)]
    pub config_params: BTreeMap<String, ParamType>,
    /// Fixed configuration; string values may use `${key}` placeholders.
    #[serde(default)]
    pub config: BTreeMap<String, Value>,
    #[serde(default)]
    pub publishes: Vec<String>,
    #[serde(default)]
    pub subscribes: Vec<String>,
    pub behavior_kind: BehaviorKind,
    #[serde(default)]
    pub placement: Option<PlacementRule>,
    #[serde(default)]
    pub instance_binding: Option<InstanceBinding>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_opt_ms")]
    pub startup_latency: Option<Duration>,
}

impl MicroserviceTemplate {
    pub fn validate(&self) -> Result<(), RegistryError> {
        let bad = |m: String| RegistryError::Template {
            name: self.name.clone(),
            message: m,
        };
        if self.name.is_empty() {
            return Err(bad("empty name".into()));
        }
        if !self.resource_request.is_positive() {
            return Err(bad("resource_request must be positive".into()));
        }
        if self.capability_tags.is_empty() {
            return Err(bad("no capability tags".into()));
        }
        for t in self.publishes.iter().chain(&self.subscribes) {
            check_topic_template(t).map_err(bad)?;
        }
        Ok(())
    }
}

/// A template is well formed if it starts with `/` and every placeholder is
/// closed.
fn check_topic_template(t: &str) -> Result<(), String> {
    if !t.starts_with('/') {
        return Err(format!("topic template {t:?} must start with '/'"));
    }
    let mut depth = 0;
    for c in t.chars() {
        match c {
            '{' if depth == 0 => depth = 1,
            '}' if depth == 1 => depth = 0,
            '{' | '}' => return Err(format!("unbalanced braces in {t:?}")),
            _ => {}
        }
    }
    if depth != 0 {
        return Err(format!("unbalanced braces in {t:?}"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub application_name: String,
    pub services: Vec<MicroserviceTemplate>,
    pub verified: bool,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read registry: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse registry: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("template {name}: {message}")]
    Template { name: String, message: String },
    #[error("registry is empty")]
    Empty,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub entries: Vec<RegistryEntry>,
}

impl Registry {
    pub fn new(entries: Vec<RegistryEntry>) -> Result<Self, RegistryError> {
        let r = Registry { entries };
        r.validate()?;
        Ok(r)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path)?;
        let r: Registry = serde_json::from_str(&text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        if self.entries.is_empty() {
            return Err(RegistryError::Empty);
        }
        for e in &self.entries {
            for s in &e.services {
                s.validate()?;
            }
        }
        Ok(())
    }

    /// Verified template offering `tag` with the smallest name.
    pub fn select(&self, tag: &str) -> Result<&MicroserviceTemplate, Unsatisfiable> {
        let mut unverified = false;
        let mut best: Option<&MicroserviceTemplate> = None;
        for entry in &self.entries {
            for s in entry.services.iter().filter(|s| s.capability_tags.contains(tag)) {
                if !entry.verified {
                    unverified = true;
                    continue;
                }
                if best.is_none_or(|b| s.name < b.name) {
                    best = Some(s);
                }
            }
        }
        best.ok_or(Unsatisfiable {
            tag: tag.to_owned(),
            only_unverified: unverified,
        })
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("no verified template provides {tag:?}{}", if *.only_unverified { " (only unverified matches)" } else { "" })]
pub struct Unsatisfiable {
    pub tag: String,
    pub only_unverified: bool,
}
