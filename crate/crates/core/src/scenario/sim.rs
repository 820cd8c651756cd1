//! The simulated world: vehicles, bus, cluster, and the pods running on it.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use thiserror::Error;

use super::analyzers::{build_analyzer, ProximityParams, PAIR_ENTERED, PAIR_LEFT};
use super::config::{vehicle_node, Diagnostic, ResolvedConfig, ScenarioConfig};
use super::motion::{random_route, Fleet, Lidar, RouteShape, SCHEMA_POINTS, SCHEMA_POSE};
use super::report::{
    AnalysisSummary, CloudDelivery, Episode, EventRecord, LatencySummary, PodSummary, RunSummary, ScenarioReport,
    StoreSummary, Trace,
};
use crate::bus::{
    names, Bus, CrossNodePolicy, Delivery, ExportId, MessageEnvelope, NodeId, SubscriptionId, Topic, TopicPattern,
};
use crate::control::{
    BehaviorKind, ControlPlane, NodeRole, NodeSelector, PodId, PodPhase, PodSpec, Resources, WorkloadDefinition,
};
use crate::detector::plugins::{OperatorConfig, OperatorPlugin, RecordingPlugin};
use crate::detector::{
    AnalyzerBinding, DetectorConfig, EventDetector, EventFilter, PluginBinding, PluginContext, PluginKind,
};
use crate::kernel::{Kernel, VirtualTime};
use crate::manager::{ApplicationManager, Decision, DecisionKind, InstanceChange, ManagerConfig};
use crate::recorder::{RecordStore, StoreError};
use crate::task::{Intent, SCHEMA_DECISION};

/// Owner of the workload installed before the run starts.
pub const BOOTSTRAP_OWNER: &str = "bootstrap";
/// Pod name of the startup operator application.
pub const OPERATOR_POD: &str = "cloud-operator";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration ({} problems)", .0.len())]
    Invalid(Vec<Diagnostic>),
    #[error("cannot create output directory {path}: {source}")]
    OutDir {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("record store {path}: {source}")]
    Store { path: String, source: StoreError },
    #[error("startup workload rejected: {0}")]
    Bootstrap(String),
}

/// Report plus the fine-grained trace used by tests.
#[derive(Debug)]
pub struct ScenarioOutcome {
    pub report: ScenarioReport,
    pub trace: Trace,
}

/// Validates, builds and runs a scenario. Stores go to `out_dir` when given,
/// otherwise they stay in memory.
pub fn run_scenario(config: &ScenarioConfig, out_dir: Option<&Path>) -> Result<ScenarioOutcome, ScenarioError> {
    let resolved = config.resolve().map_err(ScenarioError::Invalid)?;
    Scenario::new(resolved, out_dir)?.run()
}

#[derive(Debug)]
enum Action {
    PosePublish { vehicle: u32, k: u64 },
    CloudPublish { vehicle: u32, k: u64 },
    Deliver(Delivery),
    Cycle { pod: PodId, generation: u64 },
    Reconcile,
    Complete,
    Retry { manager: String },
    Fault(usize),
}

impl From<Delivery> for Action {
    fn from(d: Delivery) -> Self {
        Action::Deliver(d)
    }
}

#[derive(Clone, Debug)]
enum Handler {
    /// Republishes onto `to` from the subscribing node.
    Bridge { to: Topic },
    Detector(PodId),
    Manager(String),
}

type RouteKey = (NodeId, Topic, Topic);

#[derive(Debug)]
struct Route {
    sub: SubscriptionId,
    export: ExportId,
    refs: u32,
}

struct DetectorSlot {
    detector: EventDetector,
    node: NodeId,
    subs: Vec<SubscriptionId>,
    generation: u64,
}

struct ManagerSlot {
    manager: ApplicationManager,
    active: bool,
    node: Option<NodeId>,
    sub: Option<SubscriptionId>,
    retry_scheduled: Option<VirtualTime>,
}

enum Activity {
    Bridge(Vec<RouteKey>),
    Detector,
    Operator { manager: Option<String> },
}

#[derive(Default)]
struct AnalysisAcc {
    cycles: u64,
    events: u64,
    failures: u64,
    max_wall: Duration,
    total_wall: Duration,
}

struct StoreSlot {
    file: String,
    correlation_key: String,
    store: Rc<RefCell<RecordStore>>,
    owner: String,
}

/// A runnable scenario. Most callers want [`run_scenario`].
pub struct Scenario {
    config: ScenarioConfig,
    fleet: Fleet,
    lidar: Lidar,
    kernel: Kernel<Action>,
    bus: Bus<Handler>,
    cp: ControlPlane,
    registry: crate::manager::Registry,
    roles: BTreeMap<NodeId, NodeRole>,
    cloud: NodeId,
    out_dir: Option<PathBuf>,
    t_end: VirtualTime,

    seen_history: usize,
    deadlines: BTreeSet<VirtualTime>,
    routes: BTreeMap<RouteKey, Route>,
    detectors: BTreeMap<PodId, DetectorSlot>,
    managers: BTreeMap<String, ManagerSlot>,
    active: BTreeMap<PodId, Activity>,
    stores: Vec<StoreSlot>,
    /// Owners seen per correlation key; numbers the store files.
    store_owners: BTreeMap<String, Vec<String>>,
    generation: u64,
    analysis: BTreeMap<String, AnalysisAcc>,

    events: Vec<EventRecord>,
    decisions: Vec<Decision>,
    instance_changes: Vec<InstanceChange>,
    trace: Trace,
    errors: Vec<ScenarioError>,
}

fn pose_time(k: u64, f: f64) -> VirtualTime {
    VirtualTime::from_nanos((k as f64 * 1e9 / f).round() as u64)
}

fn exact(topic: &Topic) -> TopicPattern {
    TopicPattern::exact(topic)
}

impl Scenario {
    pub fn new(resolved: ResolvedConfig, out_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        let ResolvedConfig {
            config,
            topology,
            registry,
        } = resolved;
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir).map_err(|source| ScenarioError::OutDir {
                path: dir.to_owned(),
                source,
            })?;
        }
        let mut routes = config.routes.clone();
        for i in routes.len() as u32..config.N {
            routes.push(random_route(config.seed, i, RouteShape::default()));
        }
        let mut bus = Bus::new(CrossNodePolicy::Gated);
        for n in &topology.nodes {
            bus.add_node(n.node_id.clone());
        }
        for l in &topology.links {
            bus.set_link(l.clone()).expect("validated topology");
        }
        let cloud = topology
            .nodes
            .iter()
            .find(|n| n.role == NodeRole::Cloud)
            .map(|n| n.node_id.clone())
            .expect("validated topology has a cloud node");
        Ok(Scenario {
            fleet: Fleet::new(&routes),
            lidar: Lidar {
                seed: config.seed,
                lidar_count: config.M,
                points: config.points_per_cloud,
            },
            kernel: Kernel::new(config.seed),
            bus,
            cp: ControlPlane::new(config.control_plane.clone(), &topology),
            registry,
            roles: topology.nodes.iter().map(|n| (n.node_id.clone(), n.role)).collect(),
            cloud,
            out_dir: out_dir.map(Path::to_owned),
            t_end: VirtualTime::from_secs_f64(config.duration),
            config,
            seen_history: 0,
            deadlines: BTreeSet::new(),
            routes: BTreeMap::new(),
            detectors: BTreeMap::new(),
            managers: BTreeMap::new(),
            active: BTreeMap::new(),
            stores: vec![],
            store_owners: BTreeMap::new(),
            generation: 0,
            analysis: BTreeMap::new(),
            events: vec![],
            decisions: vec![],
            instance_changes: vec![],
            trace: Trace::default(),
            errors: vec![],
        })
    }

    /// The startup workload: a pose bridge per vehicle and the cloud operator.
    pub fn bootstrap_workload(&self) -> WorkloadDefinition {
        let cfg = &self.config;
        let mut pods = vec![];
        for i in 0..cfg.N {
            pods.push(PodSpec {
                pod_name: format!("pose-bridge-{i}"),
                template: "pose-bridge".into(),
                image_ref: "orchsim/bridge:1".into(),
                placement: NodeSelector::Node(NodeId::new(vehicle_node(i))),
                resource_request: Resources::new(100, 64),
                config: BTreeMap::new(),
                subscribes: vec![names::vehicle_pose(i)],
                publishes: vec![names::cloud_pose(i)],
                behavior_kind: BehaviorKind::Bridge,
                startup_latency: None,
            });
        }
        let detector = DetectorConfig {
            buffer_duration: cfg.buffer_duration,
            analysis_period: cfg.analysis_period,
            subscriptions: vec![TopicPattern::new("/cloud/vehicle/+/pose").expect("valid pattern")],
            analyzers: vec![AnalyzerBinding {
                kind: "proximity".into(),
                params: serde_json::to_value(ProximityParams {
                    vehicles: (0..cfg.M).collect(),
                    d_start: cfg.d_start,
                    d_stop: cfg.d_stop,
                    pose_topic: "/cloud/vehicle/{id}/pose".into(),
                })
                .expect("params serialize"),
            }],
            plugins: vec![PluginBinding {
                kind: PluginKind::Operator,
                event_types: vec![PAIR_ENTERED.into(), PAIR_LEFT.into()],
                params: serde_json::to_value(OperatorConfig {
                    manager: cfg.operator.manager.name.clone(),
                    rules: cfg.operator.rules.clone(),
                })
                .expect("params serialize"),
            }],
        };
        let mut config = BTreeMap::new();
        config.insert("detector".into(), serde_json::to_value(detector).expect("serialize"));
        config.insert(
            "manager".into(),
            serde_json::to_value(&cfg.operator.manager).expect("serialize"),
        );
        pods.push(PodSpec {
            pod_name: OPERATOR_POD.into(),
            template: "cloud-operator".into(),
            image_ref: "orchsim/operator:1".into(),
            placement: NodeSelector::Node(self.cloud.clone()),
            resource_request: Resources::new(500, 512),
            config,
            subscribes: vec![],
            publishes: vec![names::operator_tasks()],
            behavior_kind: BehaviorKind::Operator,
            startup_latency: None,
        });
        WorkloadDefinition {
            owner: BOOTSTRAP_OWNER.into(),
            revision: 1,
            pods,
        }
    }

    pub fn run(mut self) -> Result<ScenarioOutcome, ScenarioError> {
        let started = Instant::now();
        let wl = self.bootstrap_workload();
        self.cp
            .apply(wl, VirtualTime::ZERO)
            .map_err(|e| ScenarioError::Bootstrap(e.to_string()))?;
        self.schedule_sources();
        let t_end = self.t_end;
        let mut kernel = std::mem::replace(&mut self.kernel, Kernel::new(0));
        kernel.run_until(t_end, |k, a| self.handle(k, a));
        self.kernel = kernel;
        self.finish();
        if let Some(e) = self.errors.drain(..).next() {
            return Err(e);
        }
        let report = self.report(started.elapsed());
        Ok(ScenarioOutcome {
            report,
            trace: std::mem::take(&mut self.trace),
        })
    }

    fn schedule_sources(&mut self) {
        let k = &mut self.kernel;
        for i in 0..self.config.N {
            k.schedule(Action::PosePublish { vehicle: i, k: 0 }, VirtualTime::ZERO)
                .expect("start of time");
        }
        for i in 0..self.config.M {
            k.schedule(Action::CloudPublish { vehicle: i, k: 0 }, VirtualTime::ZERO)
                .expect("start of time");
        }
        k.schedule(Action::Reconcile, VirtualTime::ZERO).expect("start of time");
        for (idx, f) in self.config.faults.iter().enumerate() {
            k.schedule(Action::Fault(idx), VirtualTime::from_secs_f64(f.at))
                .expect("faults are non-negative");
        }
    }

    fn handle(&mut self, k: &mut Kernel<Action>, action: Action) {
        let now = k.now();
        match action {
            Action::PosePublish { vehicle, k: n } => {
                let pose = self.fleet.pose_at(vehicle, now).expect("vehicle exists");
                let node = NodeId::new(vehicle_node(vehicle));
                self.publish(
                    k,
                    MessageEnvelope::new(names::vehicle_pose(vehicle), now, node, SCHEMA_POSE, pose.encode()),
                );
                let next = pose_time(n + 1, self.config.f_p);
                if next <= self.t_end {
                    k.schedule(Action::PosePublish { vehicle, k: n + 1 }, next).expect("future");
                }
            }
            Action::CloudPublish { vehicle, k: n } => {
                let node = NodeId::new(vehicle_node(vehicle));
                let payload = self.lidar.cloud(vehicle, now).expect("clouds are only scheduled for lidar vehicles");
                self.publish(
                    k,
                    MessageEnvelope::new(names::vehicle_points(vehicle), now, node, SCHEMA_POINTS, payload),
                );
                let next = pose_time(n + 1, self.config.f_pc);
                if next <= self.t_end {
                    k.schedule(Action::CloudPublish { vehicle, k: n + 1 }, next).expect("future");
                }
            }
            Action::Deliver(d) => self.deliver(k, d),
            Action::Cycle { pod, generation } => self.cycle(k, pod, generation),
            Action::Reconcile => {
                let report = self.cp.reconcile_tick(now);
                for d in report.deadlines {
                    if self.deadlines.insert(d) {
                        k.schedule(Action::Complete, d).expect("deadlines are in the future");
                    }
                }
                self.after_cluster_change(k);
                k.schedule_in(Action::Reconcile, self.config.control_plane.reconcile_interval);
            }
            Action::Complete => {
                self.deadlines.remove(&now);
                self.cp.complete_due(now);
                self.after_cluster_change(k);
            }
            Action::Retry { manager } => {
                let Some(slot) = self.managers.get_mut(&manager) else { return };
                slot.retry_scheduled = None;
                if !slot.active {
                    return;
                }
                let decisions = slot.manager.retry_due(&mut self.cp, now);
                let node = slot.node.clone();
                self.publish_decisions(k, node, decisions);
                self.schedule_retry(k, &manager);
                self.after_cluster_change(k);
            }
            Action::Fault(idx) => {
                let template = self.config.faults[idx].template.clone();
                let target = self
                    .cp
                    .cluster_view(now)
                    .pods
                    .into_iter()
                    .find(|p| p.phase == PodPhase::Running && p.spec.template == template)
                    .map(|p| p.pod_id);
                match target {
                    Some(pod) => {
                        self.cp.inject_failure(&pod, now).expect("pod is running");
                        log::info!("fault injected into {pod} at {now}");
                        self.trace.faults.push((now, pod));
                        self.after_cluster_change(k);
                    }
                    None => log::warn!("fault at {now}: no running pod from template {template}"),
                }
            }
        }
    }

    fn publish(&mut self, k: &mut Kernel<Action>, env: MessageEnvelope) {
        if let Err(e) = self.bus.publish(k, env) {
            log::error!("publish failed: {e}");
        }
    }

    fn deliver(&mut self, k: &mut Kernel<Action>, d: Delivery) {
        let now = k.now();
        let Some((node, handler)) = self.bus.accept(&d) else { return };
        let (node, handler) = (node.clone(), handler.clone());
        let env = &d.envelope;
        if env.schema_tag == SCHEMA_POINTS && self.roles.get(&node).is_some_and(|r| r.is_infrastructure()) {
            self.trace.cloud_deliveries.push(CloudDelivery {
                at: now,
                topic: env.topic.clone(),
                node: node.clone(),
            });
        }
        match handler {
            Handler::Bridge { to } => {
                let out = MessageEnvelope::new(to, now, node, env.schema_tag.clone(), env.payload.clone());
                self.publish(k, out);
            }
            Handler::Detector(pod) => {
                let Some(slot) = self.detectors.get_mut(&pod) else { return };
                let mut ctx = PluginContext::new(now, slot.node.clone());
                slot.detector.ingest(Arc::clone(env), &mut ctx);
                for out in ctx.outbox {
                    self.publish(k, out);
                }
            }
            Handler::Manager(name) => {
                let Some(slot) = self.managers.get_mut(&name) else { return };
                if !slot.active {
                    return;
                }
                if let Some(decision) = slot.manager.handle_payload(&env.payload, &mut self.cp, now) {
                    self.publish_decisions(k, Some(node), vec![decision]);
                    self.schedule_retry(k, &name);
                    self.after_cluster_change(k);
                }
            }
        }
    }

    fn publish_decisions(&mut self, k: &mut Kernel<Action>, node: Option<NodeId>, decisions: Vec<Decision>) {
        let node = node.unwrap_or_else(|| self.cloud.clone());
        for d in decisions {
            let env = MessageEnvelope::new(
                names::operator_decisions(),
                k.now(),
                node.clone(),
                SCHEMA_DECISION,
                d.to_payload(),
            );
            self.publish(k, env);
            self.decisions.push(d);
        }
    }

    fn schedule_retry(&mut self, k: &mut Kernel<Action>, name: &str) {
        let Some(slot) = self.managers.get_mut(name) else { return };
        let Some(at) = slot.manager.next_retry() else { return };
        if slot.retry_scheduled.is_some_and(|s| s <= at) {
            return;
        }
        slot.retry_scheduled = Some(at);
        k.schedule(Action::Retry { manager: name.to_owned() }, at.max(k.now()))
            .expect("not in the past");
    }

    fn cycle(&mut self, k: &mut Kernel<Action>, pod: PodId, generation: u64) {
        let now = k.now();
        let Some(slot) = self.detectors.get_mut(&pod) else { return };
        if slot.generation != generation {
            return;
        }
        let mut ctx = PluginContext::new(now, slot.node.clone());
        let events = slot.detector.run_cycle(&mut ctx);
        let period = slot.detector.analysis_period();
        let name = slot.detector.name().to_owned();
        let wall = slot.detector.stats().last_cycle_wall;
        let acc = self.analysis.entry(name.clone()).or_default();
        acc.total_wall += wall;
        acc.max_wall = acc.max_wall.max(wall);
        for e in &events {
            self.events.push(EventRecord {
                event_type: e.event_type.clone(),
                correlation_key: e.correlation_key.clone(),
                t: e.detected_at.as_secs_f64(),
                detector: name.clone(),
                attributes: e.attributes.clone(),
            });
        }
        for out in ctx.outbox {
            self.publish(k, out);
        }
        k.schedule_in(Action::Cycle { pod, generation }, period);
    }

    /// Reacts to every control-plane transition not yet seen.
    fn after_cluster_change(&mut self, k: &mut Kernel<Action>) {
        let mut changed = false;
        loop {
            let history = self.cp.history();
            if self.seen_history >= history.len() {
                break;
            }
            let fresh = history[self.seen_history..].to_vec();
            self.seen_history = history.len();
            changed = true;
            for t in fresh {
                log::debug!("{} {:?} -> {:?} at {}", t.pod_id, t.from, t.to, t.at);
                if t.from == PodPhase::Running {
                    self.deactivate(k, &t.pod_id, t.to);
                }
                if t.to == PodPhase::Running {
                    self.activate(k, &t.pod_id);
                }
                self.trace.transitions.push(t);
            }
        }
        if changed {
            let view = self.cp.cluster_view(k.now());
            for slot in self.managers.values_mut() {
                self.instance_changes.extend(slot.manager.sync(&view));
            }
        }
    }

    fn activate(&mut self, k: &mut Kernel<Action>, pod_id: &PodId) {
        let Some(status) = self.cp.pod(pod_id) else { return };
        let Some(node) = status.node_id.clone() else { return };
        let spec = status.spec;
        match spec.behavior_kind {
            BehaviorKind::Bridge => {
                let mut keys = vec![];
                for (src, dst) in spec.subscribes.iter().zip(&spec.publishes) {
                    let key = (node.clone(), src.clone(), dst.clone());
                    match self.routes.get_mut(&key) {
                        Some(r) => r.refs += 1,
                        None => {
                            let sub = self
                                .bus
                                .subscribe_pattern(&node, exact(src), Handler::Bridge { to: dst.clone() })
                                .expect("pod nodes exist");
                            let export = self.bus.export(exact(dst));
                            self.routes.insert(key.clone(), Route { sub, export, refs: 1 });
                        }
                    }
                    keys.push(key);
                }
                self.trace.bridges.insert(pod_id.clone(), spec.publishes.clone());
                self.active.insert(pod_id.clone(), Activity::Bridge(keys));
            }
            BehaviorKind::Recorder => {
                let mut cfg = DetectorConfig::new(spec.subscribes.iter().map(exact).collect());
                cfg.analysis_period = self.config.analysis_period;
                cfg.buffer_duration = self.config.buffer_duration;
                let Some(store) = self.store_for(&status.owner, &spec) else { return };
                let plugin = RecordingPlugin::new(format!("{}-store", spec.pod_name), store, vec![]);
                match EventDetector::new(spec.pod_name.clone(), node.clone(), &cfg) {
                    Ok(d) => {
                        let d = d.with_plugin(EventFilter::Any, Box::new(plugin));
                        self.install_detector(k, pod_id, node, d);
                        self.active.insert(pod_id.clone(), Activity::Detector);
                    }
                    Err(e) => log::error!("{pod_id}: {e}"),
                }
            }
            BehaviorKind::Operator => {
                let manager = self.start_operator(k, pod_id, &status.owner, &node, &spec);
                self.active.insert(pod_id.clone(), Activity::Operator { manager });
            }
            BehaviorKind::Generic => {}
        }
    }

    fn install_detector(&mut self, k: &mut Kernel<Action>, pod_id: &PodId, node: NodeId, detector: EventDetector) {
        let subs = detector
            .subscriptions()
            .iter()
            .map(|p| {
                self.bus
                    .subscribe_pattern(&node, p.clone(), Handler::Detector(pod_id.clone()))
                    .expect("pod nodes exist")
            })
            .collect();
        self.generation += 1;
        let period = detector.analysis_period();
        self.detectors.insert(
            pod_id.clone(),
            DetectorSlot {
                detector,
                node,
                subs,
                generation: self.generation,
            },
        );
        k.schedule_in(
            Action::Cycle {
                pod: pod_id.clone(),
                generation: self.generation,
            },
            period,
        );
    }

    /// Builds detector, plugins and manager from the pod's config. Returns
    /// the hosted manager's name.
    fn start_operator(
        &mut self,
        k: &mut Kernel<Action>,
        pod_id: &PodId,
        owner: &str,
        node: &NodeId,
        spec: &PodSpec,
    ) -> Option<String> {
        let parsed = spec
            .config
            .get("detector")
            .cloned()
            .ok_or_else(|| "missing detector config".to_owned())
            .and_then(|v| serde_json::from_value::<DetectorConfig>(v).map_err(|e| e.to_string()));
        match parsed.and_then(|cfg| self.build_operator_detector(owner, node, spec, &cfg)) {
            Ok(d) => self.install_detector(k, pod_id, node.clone(), d),
            Err(e) => log::error!("{pod_id}: operator detector not started: {e}"),
        }
        let cfg: ManagerConfig = match spec.config.get("manager").map(|v| serde_json::from_value(v.clone())) {
            Some(Ok(c)) => c,
            Some(Err(e)) => {
                log::error!("{pod_id}: bad manager config: {e}");
                return None;
            }
            None => return None,
        };
        let name = cfg.name.clone();
        let registry = self.registry.clone();
        let slot = self.managers.entry(name.clone()).or_insert_with(|| ManagerSlot {
            manager: ApplicationManager::new(cfg, registry),
            active: false,
            node: None,
            sub: None,
            retry_scheduled: None,
        });
        if slot.active {
            log::warn!("{pod_id}: manager {name} already hosted elsewhere");
            return None;
        }
        slot.active = true;
        slot.node = Some(node.clone());
        slot.sub = Some(
            self.bus
                .subscribe(node, names::OPERATOR_TASKS, Handler::Manager(name.clone()))
                .expect("pod nodes exist"),
        );
        self.schedule_retry(k, &name);
        Some(name)
    }

    fn build_operator_detector(
        &mut self,
        owner: &str,
        node: &NodeId,
        spec: &PodSpec,
        cfg: &DetectorConfig,
    ) -> Result<EventDetector, String> {
        let mut d = EventDetector::new(spec.pod_name.clone(), node.clone(), cfg).map_err(|e| e.to_string())?;
        for a in &cfg.analyzers {
            d = d.with_analyzer(build_analyzer(a).map_err(|e| e.to_string())?);
        }
        for p in &cfg.plugins {
            let filter = EventFilter::from_types(&p.event_types);
            match p.kind {
                PluginKind::Operator => {
                    let plugin = OperatorPlugin::from_params(spec.pod_name.clone(), &p.params).map_err(|e| e.to_string())?;
                    d = d.with_plugin(filter, Box::new(plugin));
                }
                PluginKind::Recording => {
                    let store = self.store_for(owner, spec).ok_or("store unavailable")?;
                    let topics = serde_json::from_value::<Vec<TopicPattern>>(p.params.get("topics").cloned().unwrap_or(json!([])))
                        .map_err(|e| e.to_string())?;
                    d = d.with_plugin(filter, Box::new(RecordingPlugin::new(format!("{}-store", spec.pod_name), store, topics)));
                }
            }
        }
        Ok(d)
    }

    /// The store for `owner`'s recordings, shared across pod restarts.
    fn store_for(&mut self, owner: &str, spec: &PodSpec) -> Option<Rc<RefCell<RecordStore>>> {
        let key = spec
            .config
            .get("correlation_key")
            .and_then(Value::as_str)
            .unwrap_or(owner)
            .to_owned();
        if let Some(s) = self.stores.iter().find(|s| s.owner == owner && s.correlation_key == key) {
            return Some(Rc::clone(&s.store));
        }
        let owners = self.store_owners.entry(key.clone()).or_default();
        owners.push(owner.to_owned());
        let revision = owners.len();
        let file = format!("recording_{key}_{revision}.ndjson");
        let store = match &self.out_dir {
            Some(dir) => match RecordStore::create(dir.join(&file)) {
                Ok(s) => s,
                Err(source) => {
                    log::error!("cannot create store {file}: {source}");
                    self.errors.push(ScenarioError::Store { path: file, source });
                    return None;
                }
            },
            None => RecordStore::in_memory(),
        };
        let store = Rc::new(RefCell::new(store));
        self.stores.push(StoreSlot {
            file,
            correlation_key: key,
            store: Rc::clone(&store),
            owner: owner.to_owned(),
        });
        Some(store)
    }

    fn deactivate(&mut self, k: &mut Kernel<Action>, pod_id: &PodId, to: PodPhase) {
        match self.active.remove(pod_id) {
            Some(Activity::Bridge(keys)) => {
                for key in keys {
                    let Some(r) = self.routes.get_mut(&key) else { continue };
                    r.refs -= 1;
                    if r.refs == 0 {
                        let r = self.routes.remove(&key).expect("present");
                        self.bus.unsubscribe(r.sub);
                        self.bus.withdraw(r.export);
                    }
                }
            }
            Some(Activity::Detector) => self.stop_detector(pod_id),
            Some(Activity::Operator { manager }) => {
                self.stop_detector(pod_id);
                let Some(name) = manager else { return };
                let Some(slot) = self.managers.get_mut(&name) else { return };
                slot.active = false;
                if let Some(sub) = slot.sub.take() {
                    self.bus.unsubscribe(sub);
                }
                // A crash keeps the manager's state for the restarted pod; an
                // orderly stop takes its applications down with it.
                if to == PodPhase::Terminating {
                    let decisions = slot.manager.shutdown_all(&mut self.cp, k.now());
                    let node = slot.node.clone();
                    self.publish_decisions(k, node, decisions);
                }
            }
            None => {}
        }
    }

    fn stop_detector(&mut self, pod_id: &PodId) {
        let Some(mut slot) = self.detectors.remove(pod_id) else { return };
        slot.detector.close();
        for s in slot.subs {
            self.bus.unsubscribe(s);
        }
        let stats = slot.detector.stats();
        let acc = self.analysis.entry(slot.detector.name().to_owned()).or_default();
        acc.cycles += stats.cycles;
        acc.events += stats.events;
        acc.failures += stats.analyzer_failures;
    }

    /// Stops every detector and closes the stores at the end of the run.
    fn finish(&mut self) {
        let pods: Vec<PodId> = self.detectors.keys().cloned().collect();
        for p in pods {
            self.stop_detector(&p);
        }
        for s in &self.stores {
            if let Err(source) = s.store.borrow_mut().close() {
                self.errors.push(ScenarioError::Store {
                    path: s.file.clone(),
                    source,
                });
            }
        }
    }

    fn pair_distance(&self, vehicles: &[u32], t: VirtualTime) -> Option<f64> {
        let [a, b] = vehicles else { return None };
        self.fleet.distance_at(*a, *b, t).ok()
    }

    /// Virtual time from the first pose sample satisfying the trigger up to
    /// the event.
    fn detection_delay(&self, vehicles: &[u32], detected: VirtualTime, floor: VirtualTime) -> Duration {
        let f = self.config.f_p;
        let sat = |k: u64| {
            self.pair_distance(vehicles, pose_time(k, f))
                .is_some_and(|d| d <= self.config.d_start)
        };
        let mut j = (detected.as_secs_f64() * f).floor() as u64;
        while j > 0 && pose_time(j, f) > detected {
            j -= 1;
        }
        if !sat(j) && j > 0 {
            j -= 1;
        }
        if !sat(j) {
            return Duration::ZERO;
        }
        while j > 0 && sat(j - 1) && pose_time(j - 1, f) > floor {
            j -= 1;
        }
        detected.saturating_sub(pose_time(j, f))
    }

    fn instance(&self, id: &str) -> Option<&crate::manager::ApplicationInstance> {
        self.managers.values().find_map(|m| m.manager.instance(id))
    }

    fn report(&self, wall: Duration) -> ScenarioReport {
        let mut episodes = vec![];
        let mut last_leave: BTreeMap<&str, VirtualTime> = BTreeMap::new();
        let pair_events: Vec<&EventRecord> = self
            .events
            .iter()
            .filter(|e| e.event_type == PAIR_ENTERED || e.event_type == PAIR_LEFT)
            .collect();
        for (idx, e) in pair_events.iter().enumerate() {
            if e.event_type != PAIR_ENTERED {
                continue;
            }
            let key = e.correlation_key.as_str();
            let t_enter = VirtualTime::from_secs_f64(e.t);
            let leave = pair_events[idx + 1..]
                .iter()
                .find(|x| x.correlation_key == key && x.event_type == PAIR_LEFT)
                .map(|x| VirtualTime::from_secs_f64(x.t));
            let vehicles: Vec<u32> = e
                .attributes
                .get("vehicles")
                .and_then(|v| serde_json::from_value(v.clone()).ok())
                .unwrap_or_default();
            let floor = last_leave.get(key).copied().unwrap_or(VirtualTime::ZERO);
            let detection = self.detection_delay(&vehicles, t_enter, floor);
            if let Some(l) = leave {
                last_leave.insert(key, l);
            }
            let window_end = leave.unwrap_or(self.t_end);
            let deploy = self.decisions.iter().find(|d| {
                d.correlation_key == key
                    && d.intent == Some(Intent::Deploy)
                    && d.decided_at >= t_enter
                    && d.decided_at <= window_end
                    && d.kind != DecisionKind::Rejected
            });
            let instance_id = deploy.and_then(|d| d.instance_id.clone());
            let instance = instance_id.as_deref().and_then(|id| self.instance(id));
            let reconciliation = instance.and_then(|i| Some(i.running_at?.saturating_sub(i.applied_at?).as_secs_f64()));
            let store = self.stores.iter().find(|s| {
                s.correlation_key == key && self.owner_started_in(&s.owner, t_enter, window_end)
            });
            let mut pose_entries = BTreeMap::new();
            let mut cloud_entries = BTreeMap::new();
            let mut recorder_running = vec![];
            let (mut store_entries, mut storage_s, mut store_file) = (0, None, None);
            if let Some(s) = store {
                let st = s.store.borrow();
                store_entries = st.len();
                storage_s = Some(st.total_write_time().as_secs_f64());
                store_file = Some(s.file.clone());
                for &v in &vehicles {
                    let count = |t: Topic| st.entries().iter().filter(|x| x.topic == t).count();
                    pose_entries.insert(v, count(names::cloud_pose(v)));
                    cloud_entries.insert(v, count(names::cloud_points(v)));
                }
                for p in self.recorder_pods(&s.owner) {
                    for (a, b) in self.trace.running_intervals(&p) {
                        recorder_running.push((a.as_secs_f64(), b.map(VirtualTime::as_secs_f64)));
                    }
                }
            }
            episodes.push(Episode {
                pair: key.to_owned(),
                vehicles,
                t_enter: e.t,
                t_leave: leave.map(VirtualTime::as_secs_f64),
                instance_id,
                detection_ms: detection.as_secs_f64() * 1e3,
                translation_ms: deploy.map(|d| d.translation_wall.as_secs_f64() * 1e3),
                reconciliation_s: reconciliation,
                storage_s,
                store: store_file,
                store_entries,
                pose_entries,
                cloud_entries,
                recorder_running,
            });
        }

        let view = self.cp.cluster_view(self.kernel.now());
        let pods = view
            .pods
            .iter()
            .map(|p| {
                let life = self.trace.lifetime(&p.pod_id);
                let terminated = self
                    .trace
                    .transitions
                    .iter()
                    .find(|t| t.pod_id == p.pod_id && t.to == PodPhase::Terminated)
                    .map(|t| t.at.as_secs_f64());
                PodSummary {
                    pod_id: p.pod_id.clone(),
                    owner: p.owner.clone(),
                    template: p.spec.template.clone(),
                    behavior_kind: p.spec.behavior_kind,
                    node: p.node_id.clone(),
                    first_running: life.map(|l| l.0.as_secs_f64()),
                    terminated_at: terminated,
                    restart_count: p.restart_count,
                    final_phase: p.phase,
                }
            })
            .collect();
        let store_stats = self
            .stores
            .iter()
            .map(|s| {
                let st = s.store.borrow();
                StoreSummary {
                    file: s.file.clone(),
                    correlation_key: s.correlation_key.clone(),
                    entries: st.len(),
                    sessions: st.sessions().cloned().collect(),
                }
            })
            .collect();
        let analysis = self
            .analysis
            .iter()
            .map(|(name, a)| AnalysisSummary {
                detector: name.clone(),
                cycles: a.cycles,
                events: a.events,
                analyzer_failures: a.failures,
                max_cycle_ms: a.max_wall.as_secs_f64() * 1e3,
                mean_cycle_ms: if a.cycles == 0 {
                    0.0
                } else {
                    a.total_wall.as_secs_f64() * 1e3 / a.cycles as f64
                },
            })
            .collect();
        ScenarioReport {
            latency: LatencySummary::mean_of(&episodes),
            episodes,
            decisions: self.decisions.clone(),
            store_stats,
            events: self.events.clone(),
            pods,
            instances: self.instance_changes.clone(),
            analysis,
            run: RunSummary {
                seed: self.config.seed,
                duration_s: self.config.duration,
                events_fired: self.kernel.events_fired(),
                bus: self.bus.stats(),
                wall_clock_s: wall.as_secs_f64(),
            },
        }
    }

    fn recorder_pods(&self, owner: &str) -> Vec<PodId> {
        self.cp
            .cluster_view(self.kernel.now())
            .pods_of(owner)
            .filter(|p| p.spec.behavior_kind == BehaviorKind::Recorder)
            .map(|p| p.pod_id.clone())
            .collect()
    }

    fn owner_started_in(&self, owner: &str, from: VirtualTime, to: VirtualTime) -> bool {
        self.instance(owner)
            .is_some_and(|i| i.created_at >= from && i.created_at <= to)
    }
}
