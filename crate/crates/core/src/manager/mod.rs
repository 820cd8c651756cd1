//! Application manager: task descriptions in, workload definitions out.
//!
//! A manager is a single logical actor. It handles one task at a time,
//! records every decision, and owns the lifecycle of the application
//! instances it launched. Rejected and postponed decisions never touch the
//! control plane.

pub mod compose;
pub mod registry;

use std::collections::{BTreeMap, VecDeque};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use crate::control::{ClusterView, ControlPlane, PodId, PodPhase, WorkloadDefinition};
use crate::kernel::VirtualTime;
use crate::serde_ms;
use crate::task::{Intent, TaskDescription};
use crate::template::Bindings;

pub use compose::{compose, place, AppSpec, ComposeError, PlacementError, ResolvedService};
pub use registry::{MicroserviceTemplate, ParamType, Registry, RegistryEntry, RegistryError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConflictStrategy {
    Cancel,
    #[default]
    Postpone,
    Offload,
}

pub const DEFAULT_RETRY_INTERVAL: Duration = Duration::from_secs(1);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManagerConfig {
    pub name: String,
    #[serde(default)]
    pub strategy: ConflictStrategy,
    #[serde(with = "serde_ms", default = "default_retry")]
    pub retry_interval: Duration,
}

fn default_retry() -> Duration {
    DEFAULT_RETRY_INTERVAL
}

impl ManagerConfig {
    pub fn new(name: impl Into<String>) -> Self {
        ManagerConfig {
            name: name.into(),
            strategy: ConflictStrategy::default(),
            retry_interval: DEFAULT_RETRY_INTERVAL,
        }
    }

    pub fn with_strategy(mut self, strategy: ConflictStrategy) -> Self {
        self.strategy = strategy;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionKind {
    Accepted,
    Postponed,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Decision {
    pub manager: String,
    pub request_id: String,
    pub correlation_key: String,
    pub intent: Option<Intent>,
    pub kind: DecisionKind,
    pub reason: String,
    pub instance_id: Option<String>,
    pub workload: Option<WorkloadDefinition>,
    pub retry_at: Option<VirtualTime>,
    pub decided_at: VirtualTime,
    /// Wall-clock time spent translating the task.
    #[serde(rename = "translation_ms", serialize_with = "ser_ms_f64")]
    pub translation_wall: Duration,
}

fn ser_ms_f64<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64() * 1e3)
}

impl Decision {
    pub fn is_accepted(&self) -> bool {
        self.kind == DecisionKind::Accepted
    }

    pub fn to_payload(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("decisions always serialize")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceState {
    Pending,
    Deploying,
    Running,
    Terminating,
    Terminated,
    Postponed,
}

impl InstanceState {
    pub fn is_live(self) -> bool {
        self != InstanceState::Terminated
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApplicationInstance {
    pub instance_id: String,
    pub correlation_key: String,
    pub workload_revision: u64,
    pub state: InstanceState,
    pub owned_pods: Vec<PodId>,
    pub request_ids: Vec<String>,
    pub created_at: VirtualTime,
    /// When the most recent workload was applied.
    pub applied_at: Option<VirtualTime>,
    pub running_at: Option<VirtualTime>,
    pub terminating_at: Option<VirtualTime>,
    pub terminated_at: Option<VirtualTime>,
}

/// A lifecycle change observed by [`ApplicationManager::sync`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceChange {
    pub instance_id: String,
    pub correlation_key: String,
    pub to: InstanceState,
    pub at: VirtualTime,
}

#[derive(Debug)]
struct Postponement {
    task: TaskDescription,
    instance_id: String,
    retry_at: VirtualTime,
}

#[derive(Debug)]
pub struct ApplicationManager {
    config: ManagerConfig,
    registry: Registry,
    instances: BTreeMap<String, ApplicationInstance>,
    /// Live correlation key → instance id.
    live: BTreeMap<String, String>,
    /// Request ids seen for live instances.
    replays: BTreeMap<String, String>,
    postponed: VecDeque<Postponement>,
    decisions: Vec<Decision>,
    next_instance: u64,
}

/// Result of one translation attempt, before it becomes a [`Decision`].
#[derive(Debug)]
struct Outcome {
    kind: DecisionKind,
    reason: String,
    workload: Option<WorkloadDefinition>,
    retry_at: Option<VirtualTime>,
    instance_id: Option<String>,
}

impl Outcome {
    fn rejected(reason: &str) -> Self {
        Outcome {
            kind: DecisionKind::Rejected,
            reason: reason.to_owned(),
            workload: None,
            retry_at: None,
            instance_id: None,
        }
    }

    fn accepted(reason: &str, workload: WorkloadDefinition, instance_id: &str) -> Self {
        Outcome {
            kind: DecisionKind::Accepted,
            reason: reason.to_owned(),
            workload: Some(workload),
            retry_at: None,
            instance_id: Some(instance_id.to_owned()),
        }
    }

    fn postponed(retry_at: VirtualTime, instance_id: &str) -> Self {
        Outcome {
            kind: DecisionKind::Postponed,
            reason: "no-capacity".into(),
            workload: None,
            retry_at: Some(retry_at),
            instance_id: Some(instance_id.to_owned()),
        }
    }

    fn into_decision(self, manager: &str, td: &TaskDescription, now: VirtualTime, started: Instant) -> Decision {
        Decision {
            manager: manager.to_owned(),
            request_id: td.request_id.clone(),
            correlation_key: td.correlation_key.clone(),
            intent: Some(td.intent),
            kind: self.kind,
            reason: self.reason,
            instance_id: self.instance_id,
            workload: self.workload,
            retry_at: self.retry_at,
            decided_at: now,
            translation_wall: started.elapsed(),
        }
    }
}

impl ApplicationManager {
    pub fn new(config: ManagerConfig, registry: Registry) -> Self {
        ApplicationManager {
            config,
            registry,
            instances: BTreeMap::new(),
            live: BTreeMap::new(),
            replays: BTreeMap::new(),
            postponed: VecDeque::new(),
            decisions: vec![],
            next_instance: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn instances(&self) -> impl Iterator<Item = &ApplicationInstance> {
        self.instances.values()
    }

    pub fn instance(&self, id: &str) -> Option<&ApplicationInstance> {
        self.instances.get(id)
    }

    pub fn live_instance(&self, correlation_key: &str) -> Option<&ApplicationInstance> {
        self.live.get(correlation_key).and_then(|id| self.instances.get(id))
    }

    /// Earliest pending retry, if any.
    pub fn next_retry(&self) -> Option<VirtualTime> {
        self.postponed.iter().map(|p| p.retry_at).min()
    }

    /// Whether a task is addressed to this manager.
    pub fn accepts(&self, td: &TaskDescription) -> bool {
        td.manager == self.config.name
    }

    /// Decodes and handles a task payload. Returns `None` for tasks
    /// addressed to another manager.
    pub fn handle_payload(&mut self, payload: &[u8], cp: &mut ControlPlane, now: VirtualTime) -> Option<Decision> {
        match TaskDescription::from_payload(payload) {
            Ok(td) if !self.accepts(&td) => None,
            Ok(td) => Some(self.handle_task(&td, cp, now)),
            Err(e) => {
                let probe: Option<Value> = serde_json::from_slice(payload).ok();
                let field = |k: &str| {
                    probe
                        .as_ref()
                        .and_then(|v| v.get(k))
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                        .to_owned()
                };
                let manager = field("manager");
                if !manager.is_empty() && manager != self.config.name {
                    return None;
                }
                log::warn!("{}: undecodable task: {e}", self.config.name);
                let d = Decision {
                    manager: self.config.name.clone(),
                    request_id: field("request_id"),
                    correlation_key: field("correlation_key"),
                    intent: None,
                    kind: DecisionKind::Rejected,
                    reason: "invalid".into(),
                    instance_id: None,
                    workload: None,
                    retry_at: None,
                    decided_at: now,
                    translation_wall: Duration::ZERO,
                };
                self.decisions.push(d.clone());
                Some(d)
            }
        }
    }

    /// Processes one task to completion and records the decision.
    pub fn handle_task(&mut self, td: &TaskDescription, cp: &mut ControlPlane, now: VirtualTime) -> Decision {
        let started = Instant::now();
        let outcome = match td.validate() {
            Err(why) => {
                log::debug!("{}: invalid task {}: {why}", self.config.name, td.request_id);
                Outcome::rejected("invalid")
            }
            Ok(()) => match td.intent {
                Intent::Deploy => self.deploy(td, cp, now),
                Intent::Reconfigure => self.reconfigure(td, cp, now),
                Intent::Shutdown => self.shutdown(&td.correlation_key, cp, now),
            },
        };
        let d = outcome.into_decision(&self.config.name, td, now, started);
        log::info!(
            "{}: {} {:?} {} -> {:?} ({})",
            self.config.name,
            d.request_id,
            td.intent,
            d.correlation_key,
            d.kind,
            d.reason
        );
        self.decisions.push(d.clone());
        d
    }

    fn deploy(&mut self, td: &TaskDescription, cp: &mut ControlPlane, now: VirtualTime) -> Outcome {
        if self.replays.contains_key(&td.request_id) || self.live.contains_key(&td.correlation_key) {
            return Outcome::rejected("duplicate");
        }
        let instance_id = format!("{}-app{}", self.config.name, self.next_instance + 1);
        let outcome = self.try_deploy(td, &instance_id, 1, cp, now);
        if outcome.kind == DecisionKind::Rejected {
            return outcome;
        }
        self.next_instance += 1;
        self.instances.insert(
            instance_id.clone(),
            ApplicationInstance {
                instance_id: instance_id.clone(),
                correlation_key: td.correlation_key.clone(),
                workload_revision: 1,
                state: InstanceState::Pending,
                owned_pods: vec![],
                request_ids: vec![],
                created_at: now,
                applied_at: None,
                running_at: None,
                terminating_at: None,
                terminated_at: None,
            },
        );
        self.live.insert(td.correlation_key.clone(), instance_id.clone());
        self.remember(td, &instance_id);
        self.after_attempt(td, &instance_id, &outcome, cp, now);
        outcome
    }

    fn remember(&mut self, td: &TaskDescription, instance_id: &str) {
        self.replays.insert(td.request_id.clone(), instance_id.to_owned());
        if let Some(inst) = self.instances.get_mut(instance_id) {
            inst.request_ids.push(td.request_id.clone());
        }
    }

    fn refresh_pods(&mut self, instance_id: &str, cp: &ControlPlane, now: VirtualTime) {
        let pods = cp
            .cluster_view(now)
            .pods_of(instance_id)
            .filter(|p| p.phase != PodPhase::Terminated)
            .map(|p| p.pod_id.clone())
            .collect();
        if let Some(inst) = self.instances.get_mut(instance_id) {
            inst.owned_pods = pods;
        }
    }

    fn after_attempt(&mut self, td: &TaskDescription, instance_id: &str, outcome: &Outcome, cp: &ControlPlane, now: VirtualTime) {
        match outcome.kind {
            DecisionKind::Accepted => {
                let inst = self.instances.get_mut(instance_id).expect("instance registered");
                inst.state = InstanceState::Deploying;
                inst.applied_at = Some(now);
                self.refresh_pods(instance_id, cp, now);
            }
            DecisionKind::Postponed => {
                let inst = self.instances.get_mut(instance_id).expect("instance registered");
                inst.state = InstanceState::Postponed;
                self.postponed.push_back(Postponement {
                    task: td.clone(),
                    instance_id: instance_id.to_owned(),
                    retry_at: outcome.retry_at.expect("postponed carries retry_at"),
                });
            }
            DecisionKind::Rejected => {}
        }
    }

    /// Compose, place and apply; on conflict apply the configured strategy.
    fn try_deploy(&self, td: &TaskDescription, instance_id: &str, revision: u64, cp: &mut ControlPlane, now: VirtualTime) -> Outcome {
        let mut context = Bindings::new();
        context.insert("correlation_key".into(), Value::from(td.correlation_key.clone()));
        context.insert("instance_id".into(), Value::from(instance_id.to_owned()));
        let app = match compose(&td.required_capabilities, &self.registry, &context, td.placement_hint) {
            Ok(app) => app,
            Err(ComposeError::Unsatisfiable(u)) => {
                log::debug!("{}: {u}", self.config.name);
                return Outcome::rejected("unsatisfiable");
            }
            Err(e) => {
                log::debug!("{}: composition failed: {e}", self.config.name);
                return Outcome::rejected("invalid");
            }
        };
        let view = cp.cluster_view(now);
        let retry_at = now + self.config.retry_interval;
        let (workload, reason) = match place(&app, &view, instance_id, revision, false) {
            Ok(w) => (w, "placed"),
            Err(e) => {
                log::debug!("{}: {e}", self.config.name);
                match self.config.strategy {
                    ConflictStrategy::Cancel => return Outcome::rejected("no-capacity"),
                    ConflictStrategy::Postpone => return Outcome::postponed(retry_at, instance_id),
                    ConflictStrategy::Offload => match place(&app, &view, instance_id, revision, true) {
                        Ok(w) => (w, "offloaded"),
                        Err(_) => return Outcome::postponed(retry_at, instance_id),
                    },
                }
            }
        };
        match cp.apply(workload.clone(), now) {
            Ok(_) => Outcome::accepted(reason, workload, instance_id),
            Err(e) => {
                log::debug!("{}: control plane refused workload: {e}", self.config.name);
                match self.config.strategy {
                    ConflictStrategy::Cancel => Outcome::rejected("no-capacity"),
                    _ => Outcome::postponed(retry_at, instance_id),
                }
            }
        }
    }

    fn reconfigure(&mut self, td: &TaskDescription, cp: &mut ControlPlane, now: VirtualTime) -> Outcome {
        if self.replays.contains_key(&td.request_id) {
            return Outcome::rejected("duplicate");
        }
        let Some(id) = self.live.get(&td.correlation_key).cloned() else {
            return Outcome::rejected("not-found");
        };
        let inst = &self.instances[&id];
        if !matches!(inst.state, InstanceState::Deploying | InstanceState::Running) {
            return Outcome::rejected("not-found");
        }
        let revision = inst.workload_revision + 1;
        let mut outcome = self.try_deploy(td, &id, revision, cp, now);
        match outcome.kind {
            DecisionKind::Accepted => {
                outcome.reason = "reconfigured".into();
                let inst = self.instances.get_mut(&id).expect("live instance");
                inst.workload_revision = revision;
                self.remember(td, &id);
                self.refresh_pods(&id, cp, now);
            }
            // A reconfiguration that does not fit leaves the running
            // application untouched.
            DecisionKind::Postponed => outcome = Outcome::rejected("no-capacity"),
            DecisionKind::Rejected => {}
        }
        outcome
    }

    /// Tears down the live instance for `correlation_key`.
    fn shutdown(&mut self, correlation_key: &str, cp: &mut ControlPlane, now: VirtualTime) -> Outcome {
        let Some(id) = self.live.get(correlation_key).cloned() else {
            return Outcome::rejected("not-found");
        };
        match self.instances[&id].state {
            InstanceState::Terminating | InstanceState::Terminated => Outcome::rejected("not-found"),
            InstanceState::Postponed | InstanceState::Pending => {
                self.postponed.retain(|p| p.instance_id != id);
                let revision = self.instances[&id].workload_revision;
                self.finish(&id, now);
                Outcome::accepted("withdrawn", WorkloadDefinition::empty(id.clone(), revision), &id)
            }
            InstanceState::Deploying | InstanceState::Running => {
                let inst = self.instances.get_mut(&id).expect("live instance");
                inst.workload_revision += 1;
                let empty = WorkloadDefinition::empty(id.clone(), inst.workload_revision);
                cp.apply(empty.clone(), now).expect("empty workloads always admit");
                inst.state = InstanceState::Terminating;
                inst.terminating_at = Some(now);
                Outcome::accepted("shutdown", empty, &id)
            }
        }
    }

    fn finish(&mut self, id: &str, now: VirtualTime) {
        if let Some(inst) = self.instances.get_mut(id) {
            inst.state = InstanceState::Terminated;
            inst.terminated_at = Some(now);
            inst.owned_pods.clear();
            if self.live.get(&inst.correlation_key).map(String::as_str) == Some(id) {
                self.live.remove(&inst.correlation_key);
            }
            for r in &inst.request_ids {
                self.replays.remove(r);
            }
        }
    }

    /// Retries postponed deployments that are due.
    pub fn retry_due(&mut self, cp: &mut ControlPlane, now: VirtualTime) -> Vec<Decision> {
        let mut out = vec![];
        let (due, rest): (Vec<_>, Vec<_>) = self.postponed.drain(..).partition(|p| p.retry_at <= now);
        self.postponed = rest.into();
        for p in due {
            let started = Instant::now();
            let outcome = self.try_deploy(&p.task, &p.instance_id, 1, cp, now);
            if outcome.kind == DecisionKind::Rejected {
                self.finish(&p.instance_id, now);
            } else {
                self.after_attempt(&p.task, &p.instance_id, &outcome, cp, now);
            }
            let d = outcome.into_decision(&self.config.name, &p.task, now, started);
            log::info!("{}: retry {} -> {:?} ({})", self.config.name, d.request_id, d.kind, d.reason);
            self.decisions.push(d.clone());
            out.push(d);
        }
        out
    }

    /// Shuts down every live instance; used when the owning operator stops.
    pub fn shutdown_all(&mut self, cp: &mut ControlPlane, now: VirtualTime) -> Vec<Decision> {
        let keys: Vec<String> = self.live.keys().cloned().collect();
        let mut out = vec![];
        for key in keys {
            let started = Instant::now();
            let outcome = self.shutdown(&key, cp, now);
            if outcome.kind == DecisionKind::Rejected {
                continue;
            }
            let td = TaskDescription {
                request_id: format!("{}-teardown", self.config.name),
                correlation_key: key,
                intent: Intent::Shutdown,
                required_capabilities: vec![],
                data_sources: vec![],
                placement_hint: None,
                issued_at: now,
                manager: self.config.name.clone(),
            };
            let d = outcome.into_decision(&self.config.name, &td, now, started);
            self.decisions.push(d.clone());
            out.push(d);
        }
        out
    }

    /// Advances instance states from the observed cluster.
    pub fn sync(&mut self, view: &ClusterView) -> Vec<InstanceChange> {
        let mut changes = vec![];
        let mut finished = vec![];
        for (id, inst) in &mut self.instances {
            let pods: Vec<_> = view.pods_of(id).filter(|p| p.phase != PodPhase::Terminated).collect();
            let next = match inst.state {
                InstanceState::Deploying
                    if view.pods_of(id).count() > 0 && !pods.is_empty() && pods.iter().all(|p| p.phase == PodPhase::Running) =>
                {
                    Some(InstanceState::Running)
                }
                InstanceState::Running if pods.iter().any(|p| p.phase != PodPhase::Running) => Some(InstanceState::Deploying),
                InstanceState::Terminating if pods.is_empty() => Some(InstanceState::Terminated),
                _ => None,
            };
            if let Some(to) = next {
                inst.state = to;
                match to {
                    InstanceState::Running => {
                        inst.running_at.get_or_insert(view.time);
                    }
                    InstanceState::Terminated => finished.push(id.clone()),
                    _ => {}
                }
                changes.push(InstanceChange {
                    instance_id: id.clone(),
                    correlation_key: inst.correlation_key.clone(),
                    to,
                    at: view.time,
                });
            }
            if inst.state.is_live() {
                inst.owned_pods = pods.iter().map(|p| p.pod_id.clone()).collect();
            }
        }
        for id in finished {
            self.finish(&id, view.time);
        }
        changes
    }
}
