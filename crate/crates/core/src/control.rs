//! Simulated cluster control plane.
//!
//! Holds desired state (one [`WorkloadDefinition`] per owner) and actual
//! state (pods with lifecycle phases), and drives the latter towards the
//! former on every reconcile tick. Pod start and termination complete after
//! configurable virtual latencies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bus::{LinkSpec, NodeId, Topic};
use crate::kernel::VirtualTime;
use crate::serde_ms;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Cloud,
    Vehicle,
    Rsu,
    Edge,
}

impl NodeRole {
    /// Stationary infrastructure that can host offloaded work.
    pub fn is_infrastructure(self) -> bool {
        !matches!(self, NodeRole::Vehicle)
    }
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NodeRole::Cloud => "cloud",
            NodeRole::Vehicle => "vehicle",
            NodeRole::Rsu => "rsu",
            NodeRole::Edge => "edge",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resources {
    pub cpu_milli: u64,
    pub mem_mib: u64,
}

impl Resources {
    pub const ZERO: Resources = Resources {
        cpu_milli: 0,
        mem_mib: 0,
    };

    pub fn new(cpu_milli: u64, mem_mib: u64) -> Self {
        Resources { cpu_milli, mem_mib }
    }

    pub fn fits_within(self, other: Resources) -> bool {
        self.cpu_milli <= other.cpu_milli && self.mem_mib <= other.mem_mib
    }

    pub fn saturating_sub(self, other: Resources) -> Resources {
        Resources {
            cpu_milli: self.cpu_milli.saturating_sub(other.cpu_milli),
            mem_mib: self.mem_mib.saturating_sub(other.mem_mib),
        }
    }

    pub fn is_positive(self) -> bool {
        self.cpu_milli > 0 && self.mem_mib > 0
    }
}

impl std::ops::Add for Resources {
    type Output = Resources;

    fn add(self, rhs: Resources) -> Resources {
        Resources {
            cpu_milli: self.cpu_milli + rhs.cpu_milli,
            mem_mib: self.mem_mib + rhs.mem_mib,
        }
    }
}

impl std::ops::AddAssign for Resources {
    fn add_assign(&mut self, rhs: Resources) {
        *self = *self + rhs;
    }
}

/// One node entry of the cluster topology file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub node_id: NodeId,
    pub role: NodeRole,
    pub capacity: Resources,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
}

impl Topology {
    pub fn load(path: &Path) -> Result<Self, ControlError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ControlError::Topology(format!("{}: {e}", path.display())))?;
        let topo: Topology = serde_json::from_str(&text)
            .map_err(|e| ControlError::Topology(format!("{}: {e}", path.display())))?;
        topo.validate()?;
        Ok(topo)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(&n.node_id) {
                return Err(ControlError::Topology(format!("duplicate node {}", n.node_id)));
            }
        }
        for l in &self.links {
            for end in [&l.endpoint_a, &l.endpoint_b] {
                if !seen.contains(end) {
                    return Err(ControlError::Topology(format!("link to unknown node {end}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorKind {
    Bridge,
    Recorder,
    Operator,
    Generic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeSelector {
    Node(NodeId),
    Role(NodeRole),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PodSpec {
    pub pod_name: String,
    /// Registry template this pod was resolved from.
    pub template: String,
    pub image_ref: String,
    pub placement: NodeSelector,
    pub resource_request: Resources,
    pub config: BTreeMap<String, Value>,
    pub subscribes: Vec<Topic>,
    pub publishes: Vec<Topic>,
    pub behavior_kind: BehaviorKind,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_ms")]
    pub startup_latency: Option<Duration>,
}

impl PodSpec {
    /// Fields that can change without recreating the pod.
    fn same_shape(&self, other: &PodSpec) -> bool {
        self.template == other.template
            && self.image_ref == other.image_ref
            && self.placement == other.placement
            && self.resource_request == other.resource_request
            && self.behavior_kind == other.behavior_kind
            && self.startup_latency == other.startup_latency
    }
}

pub(crate) mod opt_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => crate::serde_ms::serialize(d, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        let ms: Option<f64> = Option::deserialize(d)?;
        Ok(ms.map(|ms| Duration::from_nanos((ms.max(0.0) * 1e6).round() as u64)))
    }
}

pub(crate) use opt_ms as serde_opt_ms;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadDefinition {
    /// Application instance that owns every pod in this workload.
    pub owner: String,
    pub revision: u64,
    pub pods: Vec<PodSpec>,
}

impl WorkloadDefinition {
    pub fn empty(owner: impl Into<String>, revision: u64) -> Self {
        WorkloadDefinition {
            owner: owner.into(),
            revision,
            pods: vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PodId(String);

impl PodId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PodPhase {
    Pending,
    Starting,
    Running,
    Terminating,
    Terminated,
    Failed,
}

impl PodPhase {
    /// Holds a capacity reservation on its node.
    pub fn reserves(self) -> bool {
        matches!(
            self,
            PodPhase::Starting | PodPhase::Running | PodPhase::Terminating | PodPhase::Failed
        )
    }

    /// The lifecycle machine. Removal from desired state may also interrupt
    /// a pod that is still starting or failed.
    pub fn can_transition(self, to: PodPhase) -> bool {
        use PodPhase::*;
        matches!(
            (self, to),
            (Pending, Starting)
                | (Pending, Terminated)
                | (Starting, Running)
                | (Starting, Terminating)
                | (Running, Terminating)
                | (Running, Failed)
                | (Running, Starting)
                | (Failed, Starting)
                | (Failed, Terminating)
                | (Terminating, Terminated)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeStatus {
    pub node_id: NodeId,
    pub role: NodeRole,
    pub capacity: Resources,
    pub allocated: Resources,
    pub ready: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PodStatus {
    pub pod_id: PodId,
    pub owner: String,
    pub node_id: Option<NodeId>,
    pub phase: PodPhase,
    pub phase_since: VirtualTime,
    pub restart_count: u32,
    pub spec: PodSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Transition {
    pub pod_id: PodId,
    pub from: PodPhase,
    pub to: PodPhase,
    pub at: VirtualTime,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ReconcileReport {
    pub tick_time: VirtualTime,
    pub transitions: Vec<Transition>,
    pub pending_unschedulable: Vec<(PodId, String)>,
    /// Completion deadlines created during this call; the driver should call
    /// [`ControlPlane::complete_due`] at each.
    pub deadlines: Vec<VirtualTime>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ApplyOutcome {
    pub revision: u64,
    pub created: Vec<PodId>,
    pub removed: Vec<PodId>,
    pub reconfigured: Vec<PodId>,
}

impl ApplyOutcome {
    pub fn is_noop(&self) -> bool {
        self.created.is_empty() && self.removed.is_empty() && self.reconfigured.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterView {
    pub time: VirtualTime,
    pub nodes: Vec<NodeStatus>,
    pub pods: Vec<PodStatus>,
}

impl ClusterView {
    pub fn node(&self, id: &NodeId) -> Option<&NodeStatus> {
        self.nodes.iter().find(|n| &n.node_id == id)
    }

    pub fn pods_of<'a>(&'a self, owner: &'a str) -> impl Iterator<Item = &'a PodStatus> + 'a {
        self.pods.iter().filter(move |p| p.owner == owner)
    }

    /// Capacity promised to pods that are not terminated, including pending
    /// pods already bound to the node.
    pub fn committed(&self, node: &NodeId) -> Resources {
        self.pods
            .iter()
            .filter(|p| p.node_id.as_ref() == Some(node) && p.phase != PodPhase::Terminated)
            .fold(Resources::ZERO, |acc, p| acc + p.spec.resource_request)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPlaneConfig {
    #[serde(with = "serde_ms")]
    pub startup_latency: Duration,
    #[serde(with = "serde_ms")]
    pub reconcile_interval: Duration,
    #[serde(with = "serde_ms")]
    pub termination_latency: Duration,
    /// Reconfiguration restarts affected pods instead of swapping config in place.
    #[serde(default)]
    pub restart_on_reconfigure: bool,
}

impl Default for ControlPlaneConfig {
    fn default() -> Self {
        ControlPlaneConfig {
            startup_latency: Duration::from_secs(5),
            reconcile_interval: Duration::from_millis(250),
            termination_latency: Duration::from_millis(500),
            restart_on_reconfigure: false,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("duplicate pod name {0} in workload")]
    DuplicatePod(String),
    #[error("pod {pod} targets unknown node {node}")]
    UnknownNode { pod: String, node: NodeId },
    #[error("admitting {pod} would exceed capacity of {node}")]
    CapacityViolation { pod: String, node: NodeId },
    #[error("unknown pod {0}")]
    UnknownPod(PodId),
    #[error("pod {pod} is {phase:?}, expected Running")]
    NotRunning { pod: PodId, phase: PodPhase },
}

#[derive(Debug)]
struct NodeState {
    role: NodeRole,
    capacity: Resources,
    allocated: Resources,
    ready: bool,
}

#[derive(Debug)]
struct PodRecord {
    owner: String,
    node: Option<NodeId>,
    phase: PodPhase,
    phase_since: VirtualTime,
    restart_count: u32,
    spec: PodSpec,
    /// Removed from desired state; terminate at next tick.
    doomed: bool,
    /// Completion time for Starting / Terminating.
    due: Option<VirtualTime>,
    created: u64,
}

#[derive(Debug)]
pub struct ControlPlane {
    config: ControlPlaneConfig,
    nodes: BTreeMap<NodeId, NodeState>,
    pods: BTreeMap<PodId, PodRecord>,
    desired: BTreeMap<String, WorkloadDefinition>,
    created_counter: u64,
    applies: u64,
    history: Vec<Transition>,
}

impl ControlPlane {
    pub fn new(config: ControlPlaneConfig, topology: &Topology) -> Self {
        let nodes = topology
            .nodes
            .iter()
            .map(|n| {
                (
                    n.node_id.clone(),
                    NodeState {
                        role: n.role,
                        capacity: n.capacity,
                        allocated: Resources::ZERO,
                        ready: true,
                    },
                )
            })
            .collect();
        ControlPlane {
            config,
            nodes,
            pods: BTreeMap::new(),
            desired: BTreeMap::new(),
            created_counter: 0,
            applies: 0,
            history: vec![],
        }
    }

    pub fn config(&self) -> &ControlPlaneConfig {
        &self.config
    }

    pub fn set_node_ready(&mut self, node: &NodeId, ready: bool) {
        if let Some(n) = self.nodes.get_mut(node) {
            n.ready = ready;
        }
    }

    pub fn applies(&self) -> u64 {
        self.applies
    }

    /// Every phase transition so far, in order.
    pub fn history(&self) -> &[Transition] {
        &self.history
    }

    fn committed_on(&self, node: &NodeId) -> Resources {
        self.pods
            .values()
            .filter(|p| p.node.as_ref() == Some(node) && p.phase != PodPhase::Terminated)
            .fold(Resources::ZERO, |acc, p| acc + p.spec.resource_request)
    }

    pub fn apply(
        &mut self,
        workload: WorkloadDefinition,
        now: VirtualTime,
    ) -> Result<ApplyOutcome, ControlError> {
        let mut names = BTreeSet::new();
        for pod in &workload.pods {
            if !names.insert(pod.pod_name.as_str()) {
                return Err(ControlError::DuplicatePod(pod.pod_name.clone()));
            }
        }

        let current: BTreeMap<&str, (&PodId, &PodRecord)> = self
            .pods
            .iter()
            .filter(|(_, p)| p.owner == workload.owner && !p.doomed && p.phase != PodPhase::Terminated)
            .map(|(id, p)| (p.spec.pod_name.as_str(), (id, p)))
            .collect();

        // Admission for explicitly targeted pods that need new capacity.
        let mut extra: BTreeMap<NodeId, Resources> = BTreeMap::new();
        for pod in &workload.pods {
            let keeps_capacity = current
                .get(pod.pod_name.as_str())
                .is_some_and(|(_, rec)| rec.spec.same_shape(pod));
            if let NodeSelector::Node(node) = &pod.placement {
                let state = self.nodes.get(node).ok_or_else(|| ControlError::UnknownNode {
                    pod: pod.pod_name.clone(),
                    node: node.clone(),
                })?;
                if keeps_capacity {
                    continue;
                }
                let add = extra.entry(node.clone()).or_default();
                *add += pod.resource_request;
                if !(self.committed_on(node) + *add).fits_within(state.capacity) {
                    return Err(ControlError::CapacityViolation {
                        pod: pod.pod_name.clone(),
                        node: node.clone(),
                    });
                }
            }
        }

        self.applies += 1;
        let mut outcome = ApplyOutcome {
            revision: workload.revision,
            ..Default::default()
        };
        let mut to_doom = vec![];
        let mut to_update = vec![];
        for (name, (id, rec)) in &current {
            match workload.pods.iter().find(|p| p.pod_name == *name) {
                None => to_doom.push((*id).clone()),
                Some(spec) if !rec.spec.same_shape(spec) => to_doom.push((*id).clone()),
                Some(spec) if rec.spec != *spec => to_update.push(((*id).clone(), spec.clone())),
                Some(_) => {}
            }
        }
        let reused: BTreeSet<String> = workload
            .pods
            .iter()
            .filter(|pod| {
                current
                    .get(pod.pod_name.as_str())
                    .is_some_and(|(_, rec)| rec.spec.same_shape(pod))
            })
            .map(|pod| pod.pod_name.clone())
            .collect();
        for pod in &workload.pods {
            if reused.contains(&pod.pod_name) {
                continue;
            }
            let id = PodId(format!(
                "{}/{}.r{}",
                workload.owner, pod.pod_name, workload.revision
            ));
            let node = match &pod.placement {
                NodeSelector::Node(n) => Some(n.clone()),
                NodeSelector::Role(_) => None,
            };
            self.created_counter += 1;
            self.pods.insert(
                id.clone(),
                PodRecord {
                    owner: workload.owner.clone(),
                    node,
                    phase: PodPhase::Pending,
                    phase_since: now,
                    restart_count: 0,
                    spec: pod.clone(),
                    doomed: false,
                    due: None,
                    created: self.created_counter,
                },
            );
            outcome.created.push(id);
        }
        for id in to_doom {
            if let Some(rec) = self.pods.get_mut(&id) {
                rec.doomed = true;
            }
            outcome.removed.push(id);
        }
        for (id, spec) in to_update {
            let restart = self.config.restart_on_reconfigure;
            let startup = spec.startup_latency.unwrap_or(self.config.startup_latency);
            let rec = self.pods.get_mut(&id).expect("current pod");
            rec.spec = spec;
            if restart && rec.phase == PodPhase::Running {
                let t = Transition {
                    pod_id: id.clone(),
                    from: PodPhase::Running,
                    to: PodPhase::Starting,
                    at: now,
                };
                rec.phase = PodPhase::Starting;
                rec.phase_since = now;
                rec.restart_count += 1;
                rec.due = Some(now + startup);
                self.history.push(t);
            }
            outcome.reconfigured.push(id);
        }
        if workload.pods.is_empty() {
            self.desired.remove(&workload.owner);
        } else {
            self.desired.insert(workload.owner.clone(), workload);
        }
        Ok(outcome)
    }

    fn transition(&mut self, id: &PodId, to: PodPhase, now: VirtualTime) -> Transition {
        let rec = self.pods.get_mut(id).expect("known pod");
        debug_assert!(
            rec.phase.can_transition(to),
            "illegal transition {:?} -> {:?} for {id}",
            rec.phase,
            to
        );
        let from = rec.phase;
        let had = from.reserves();
        rec.phase = to;
        rec.phase_since = now;
        rec.due = None;
        let request = rec.spec.resource_request;
        let node = rec.node.clone();
        if let Some(node) = node {
            let state = self.nodes.get_mut(&node).expect("known node");
            match (had, to.reserves()) {
                (false, true) => state.allocated += request,
                (true, false) => state.allocated = state.allocated.saturating_sub(request),
                _ => {}
            }
        }
        let t = Transition {
            pod_id: id.clone(),
            from,
            to,
            at: now,
        };
        self.history.push(t.clone());
        t
    }

    /// Finishes every start or termination whose deadline has passed.
    pub fn complete_due(&mut self, now: VirtualTime) -> Vec<Transition> {
        let due: Vec<(PodId, PodPhase)> = self
            .pods
            .iter()
            .filter(|(_, p)| p.due.is_some_and(|d| d <= now))
            .map(|(id, p)| (id.clone(), p.phase))
            .collect();
        let mut out = vec![];
        for (id, phase) in due {
            match phase {
                PodPhase::Starting => out.push(self.transition(&id, PodPhase::Running, now)),
                PodPhase::Terminating => out.push(self.transition(&id, PodPhase::Terminated, now)),
                _ => {}
            }
        }
        out
    }

    fn best_fit(&self, role: NodeRole, request: Resources) -> Option<NodeId> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.ready && n.role == role)
            .filter_map(|(id, n)| {
                let residual = n.capacity.saturating_sub(n.allocated);
                request
                    .fits_within(residual)
                    .then(|| (residual.saturating_sub(request), id))
            })
            .min_by(|a, b| {
                (a.0.cpu_milli, a.0.mem_mib, a.1).cmp(&(b.0.cpu_milli, b.0.mem_mib, b.1))
            })
            .map(|(_, id)| id.clone())
    }

    pub fn reconcile_tick(&mut self, now: VirtualTime) -> ReconcileReport {
        let mut report = ReconcileReport {
            tick_time: now,
            ..Default::default()
        };
        report.transitions.extend(self.complete_due(now));

        // Removed pods first so their capacity can be reused promptly.
        let doomed: Vec<(PodId, PodPhase)> = self
            .pods
            .iter()
            .filter(|(_, p)| p.doomed && !matches!(p.phase, PodPhase::Terminating | PodPhase::Terminated))
            .map(|(id, p)| (id.clone(), p.phase))
            .collect();
        for (id, phase) in doomed {
            if phase == PodPhase::Pending {
                report.transitions.push(self.transition(&id, PodPhase::Terminated, now));
            } else {
                report.transitions.push(self.transition(&id, PodPhase::Terminating, now));
                let due = now + self.config.termination_latency;
                self.pods.get_mut(&id).expect("pod").due = Some(due);
                report.deadlines.push(due);
            }
        }

        let failed: Vec<PodId> = self
            .pods
            .iter()
            .filter(|(_, p)| p.phase == PodPhase::Failed && !p.doomed)
            .map(|(id, _)| id.clone())
            .collect();
        for id in failed {
            report.transitions.push(self.transition(&id, PodPhase::Starting, now));
            let rec = self.pods.get_mut(&id).expect("pod");
            rec.restart_count += 1;
            let due = now + rec.spec.startup_latency.unwrap_or(self.config.startup_latency);
            rec.due = Some(due);
            report.deadlines.push(due);
        }

        let mut pending: Vec<(u64, PodId)> = self
            .pods
            .iter()
            .filter(|(_, p)| p.phase == PodPhase::Pending && !p.doomed)
            .map(|(id, p)| (p.created, id.clone()))
            .collect();
        pending.sort();
        for (_, id) in pending {
            let rec = &self.pods[&id];
            let request = rec.spec.resource_request;
            let target = match (&rec.node, &rec.spec.placement) {
                (Some(node), _) => {
                    let n = &self.nodes[node];
                    let residual = n.capacity.saturating_sub(n.allocated);
                    if !n.ready {
                        Err("node-not-ready")
                    } else if request.fits_within(residual) {
                        Ok(node.clone())
                    } else {
                        Err("insufficient-capacity")
                    }
                }
                (None, NodeSelector::Role(role)) => {
                    self.best_fit(*role, request).ok_or("insufficient-capacity")
                }
                (None, NodeSelector::Node(_)) => unreachable!("explicit targets are bound at apply"),
            };
            match target {
                Ok(node) => {
                    let startup = rec.spec.startup_latency.unwrap_or(self.config.startup_latency);
                    self.pods.get_mut(&id).expect("pod").node = Some(node);
                    report.transitions.push(self.transition(&id, PodPhase::Starting, now));
                    let due = now + startup;
                    self.pods.get_mut(&id).expect("pod").due = Some(due);
                    report.deadlines.push(due);
                }
                Err(reason) => report.pending_unschedulable.push((id, reason.to_owned())),
            }
        }

        debug_assert!(self.capacity_safe(), "capacity exceeded at {now}");
        report
    }

    pub fn inject_failure(&mut self, pod: &PodId, now: VirtualTime) -> Result<Transition, ControlError> {
        let rec = self
            .pods
            .get(pod)
            .ok_or_else(|| ControlError::UnknownPod(pod.clone()))?;
        if rec.phase != PodPhase::Running {
            return Err(ControlError::NotRunning {
                pod: pod.clone(),
                phase: rec.phase,
            });
        }
        Ok(self.transition(pod, PodPhase::Failed, now))
    }

    /// Sum of requests of reserving pods never exceeds node capacity.
    pub fn capacity_safe(&self) -> bool {
        self.nodes.iter().all(|(id, n)| {
            let used = self
                .pods
                .values()
                .filter(|p| p.node.as_ref() == Some(id) && p.phase.reserves())
                .fold(Resources::ZERO, |acc, p| acc + p.spec.resource_request);
            used == n.allocated && used.fits_within(n.capacity)
        })
    }

    /// Actual state matches desired state: every desired pod Running, nothing
    /// left to remove.
    pub fn is_converged(&self) -> bool {
        self.pods.values().all(|p| {
            if p.doomed {
                p.phase == PodPhase::Terminated
            } else {
                matches!(p.phase, PodPhase::Running | PodPhase::Terminated)
            }
        })
    }

    pub fn pod(&self, id: &PodId) -> Option<PodStatus> {
        self.pods.get(id).map(|p| status(id, p))
    }

    pub fn cluster_view(&self, now: VirtualTime) -> ClusterView {
        ClusterView {
            time: now,
            nodes: self
                .nodes
                .iter()
                .map(|(id, n)| NodeStatus {
                    node_id: id.clone(),
                    role: n.role,
                    capacity: n.capacity,
                    allocated: n.allocated,
                    ready: n.ready,
                })
                .collect(),
            pods: self.pods.iter().map(|(id, p)| status(id, p)).collect(),
        }
    }

    pub fn desired(&self, owner: &str) -> Option<&WorkloadDefinition> {
        self.desired.get(owner)
    }
}

fn status(id: &PodId, p: &PodRecord) -> PodStatus {
    PodStatus {
        pod_id: id.clone(),
        owner: p.owner.clone(),
        node_id: p.node.clone(),
        phase: p.phase,
        phase_since: p.phase_since,
        restart_count: p.restart_count,
        spec: p.spec.clone(),
    }
}
