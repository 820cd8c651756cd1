//! Composition of capability requests into services, and node placement.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;
use thiserror::Error;

use super::registry::{MicroserviceTemplate, Registry, Unsatisfiable};
use crate::bus::{NodeId, Topic};
use crate::control::{ClusterView, NodeRole, NodeSelector, PodPhase, PodSpec, Resources, WorkloadDefinition};
use crate::task::CapabilityRequest;
use crate::template::{self, Bindings, TemplateError};

/// Config keys the manager fills in itself.
pub const RESERVED_KEYS: [&str; 2] = ["correlation_key", "instance_id"];

/// One template instantiated with concrete parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedService {
    pub pod_name: String,
    pub template: MicroserviceTemplate,
    pub config: BTreeMap<String, Value>,
    pub subscribes: Vec<Topic>,
    pub publishes: Vec<Topic>,
    pub pinned: Option<NodeId>,
    pub role: Option<NodeRole>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AppSpec {
    pub services: Vec<ResolvedService>,
}

impl AppSpec {
    pub fn demand(&self) -> Resources {
        self.services
            .iter()
            .fold(Resources::ZERO, |acc, s| acc + s.template.resource_request)
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ComposeError {
    #[error(transparent)]
    Unsatisfiable(#[from] Unsatisfiable),
    #[error("template {template}: {source}")]
    Template {
        template: String,
        source: TemplateError,
    },
    #[error("template {template}: parameter {key} {problem}")]
    Param {
        template: String,
        key: String,
        problem: String,
    },
    #[error("bad topic {0:?}")]
    Topic(String),
    #[error("duplicate pod name {0}")]
    DuplicatePod(String),
}

fn text_of(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Resolves each capability × count to one verified template.
///
/// `context` carries manager-supplied keys (correlation key, instance id)
/// that templates may reference; request parameters cannot override them.
pub fn compose(
    requests: &[CapabilityRequest],
    registry: &Registry,
    context: &Bindings,
    placement_hint: Option<NodeRole>,
) -> Result<AppSpec, ComposeError> {
    let mut services = vec![];
    let mut names = BTreeSet::new();
    for req in requests {
        let tpl = registry.select(&req.tag)?;
        for k in 0..req.count as usize {
            let mut bindings: Bindings = req.params.clone();
            bindings.extend(context.iter().map(|(k, v)| (k.clone(), v.clone())));
            let mut pod_name = if req.count > 1 {
                format!("{}-{k}", tpl.name)
            } else {
                tpl.name.clone()
            };
            if let Some(b) = &tpl.instance_binding {
                let items = bindings
                    .get(&b.from)
                    .and_then(Value::as_array)
                    .ok_or_else(|| ComposeError::Param {
                        template: tpl.name.clone(),
                        key: b.from.clone(),
                        problem: "must be an array".into(),
                    })?;
                let item = items.get(k).cloned().ok_or_else(|| ComposeError::Param {
                    template: tpl.name.clone(),
                    key: b.from.clone(),
                    problem: format!("has {} elements, need {}", items.len(), req.count),
                })?;
                pod_name = format!("{}-{}", tpl.name, text_of(&item));
                bindings.insert(b.bind_as.clone(), item);
            }
            if !names.insert(pod_name.clone()) {
                return Err(ComposeError::DuplicatePod(pod_name));
            }
            services.push(resolve(tpl, pod_name, &bindings, placement_hint)?);
        }
    }
    Ok(AppSpec { services })
}

fn resolve(
    tpl: &MicroserviceTemplate,
    pod_name: String,
    bindings: &Bindings,
    placement_hint: Option<NodeRole>,
) -> Result<ResolvedService, ComposeError> {
    let terr = |source| ComposeError::Template {
        template: tpl.name.clone(),
        source,
    };
    let mut config = BTreeMap::new();
    for (key, ty) in &tpl.config_params {
        let v = bindings.get(key).ok_or_else(|| ComposeError::Param {
            template: tpl.name.clone(),
            key: key.clone(),
            problem: "is missing".into(),
        })?;
        if !ty.accepts(v) {
            return Err(ComposeError::Param {
                template: tpl.name.clone(),
                key: key.clone(),
                problem: format!("expected {ty:?}"),
            });
        }
        config.insert(key.clone(), v.clone());
    }
    for (key, v) in &tpl.config {
        config.insert(key.clone(), template::substitute(v, bindings).map_err(terr)?);
    }
    for key in RESERVED_KEYS {
        if let Some(v) = bindings.get(key) {
            config.insert(key.to_owned(), v.clone());
        }
    }
    let topics = |list: &[String]| -> Result<Vec<Topic>, ComposeError> {
        let mut out = vec![];
        for t in list {
            for s in template::expand(t, bindings).map_err(terr)? {
                out.push(Topic::new(s.clone()).map_err(|_| ComposeError::Topic(s))?);
            }
        }
        Ok(out)
    };
    let subscribes = topics(&tpl.subscribes)?;
    let publishes = topics(&tpl.publishes)?;
    let rule = tpl.placement.as_ref();
    let pinned = match rule.and_then(|r| r.node.as_ref()) {
        Some(t) => Some(NodeId::new(template::expand_one(t, bindings).map_err(terr)?)),
        None => None,
    };
    let role = rule.and_then(|r| r.role).or(placement_hint);
    Ok(ResolvedService {
        pod_name,
        template: tpl.clone(),
        config,
        subscribes,
        publishes,
        pinned,
        role,
    })
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("no feasible node for pod {pod}")]
pub struct PlacementError {
    pub pod: String,
}

/// Assigns every service a node, best-fit on residual capacity.
///
/// With `relax_roles`, unpinned services may use any infrastructure node
/// instead of their role constraint.
pub fn place(
    app: &AppSpec,
    view: &ClusterView,
    owner: &str,
    revision: u64,
    relax_roles: bool,
) -> Result<WorkloadDefinition, PlacementError> {
    let mut residual: BTreeMap<&NodeId, Resources> = view
        .nodes
        .iter()
        .filter(|n| n.ready)
        .map(|n| (&n.node_id, n.capacity.saturating_sub(view.committed(&n.node_id))))
        .collect();
    // Pods this owner already runs, by name; an unchanged request stays put.
    let existing: BTreeMap<&str, (&NodeId, Resources)> = view
        .pods_of(owner)
        .filter(|p| p.phase != PodPhase::Terminated)
        .filter_map(|p| p.node_id.as_ref().map(|n| (p.spec.pod_name.as_str(), (n, p.spec.resource_request))))
        .collect();

    let mut pods = vec![];
    for svc in &app.services {
        let req = svc.template.resource_request;
        let eligible = |id: &NodeId| -> bool {
            let Some(node) = view.node(id) else { return false };
            if let Some(pin) = &svc.pinned {
                return pin == id;
            }
            if relax_roles {
                node.role.is_infrastructure()
            } else {
                svc.role.is_none_or(|r| r == node.role)
            }
        };
        let sticky = existing
            .get(svc.pod_name.as_str())
            .filter(|(n, old)| *old == req && view.node(n).is_some_and(|s| s.ready) && eligible(n));
        let node = match sticky {
            Some((n, _)) => (*n).clone(),
            None => {
                let node = residual
                    .iter()
                    .filter(|(id, r)| eligible(id) && req.fits_within(**r))
                    .min_by_key(|(id, r)| {
                        let left = r.saturating_sub(req);
                        (left.cpu_milli, left.mem_mib, (**id).clone())
                    })
                    .map(|(id, _)| (*id).clone())
                    .ok_or_else(|| PlacementError {
                        pod: svc.pod_name.clone(),
                    })?;
                if let Some(r) = residual.get_mut(&node) {
                    *r = r.saturating_sub(req);
                }
                node
            }
        };
        pods.push(PodSpec {
            pod_name: svc.pod_name.clone(),
            template: svc.template.name.clone(),
            image_ref: svc.template.image_ref.clone(),
            placement: NodeSelector::Node(node),
            resource_request: req,
            config: svc.config.clone(),
            subscribes: svc.subscribes.clone(),
            publishes: svc.publishes.clone(),
            behavior_kind: svc.template.behavior_kind,
            startup_latency: svc.template.startup_latency,
        });
    }
    Ok(WorkloadDefinition {
        owner: owner.to_owned(),
        revision,
        pods,
    })
}
