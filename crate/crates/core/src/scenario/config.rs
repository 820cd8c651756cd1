//! Scenario configuration and its validation diagnostics.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bus::{LinkSpec, NodeId};
use crate::control::{ControlPlaneConfig, NodeRole, NodeSpec, Resources, Topology};
use crate::detector::plugins::{CapabilityRule, OperatorRule};
use crate::manager::{ConflictStrategy, ManagerConfig, Registry};
use crate::serde_ms;
use crate::task::Intent;

pub const DEFAULT_MANAGER: &str = "cloud-manager";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    /// Speed in m/s on the leg that starts here; ignored on the last point.
    pub speed: f64,
}

pub type Route = Vec<Waypoint>;

/// Either an inline document or a path relative to the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

/// Operator application installed at startup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSetup {
    pub manager: ManagerConfig,
    pub rules: Vec<OperatorRule>,
}

impl Default for OperatorSetup {
    fn default() -> Self {
        OperatorSetup {
            manager: ManagerConfig::new(DEFAULT_MANAGER),
            rules: recording_rules(),
        }
    }
}

/// Deploy bridges and a cloud recorder for a close pair; tear down on exit.
pub fn recording_rules() -> Vec<OperatorRule> {
    let vehicles = json!({"vehicle_ids": "${vehicles}"});
    vec![
        OperatorRule {
            event_type: "pair-entered".into(),
            intent: Intent::Deploy,
            capabilities: vec![
                CapabilityRule {
                    tag: "pose-bridge".into(),
                    count: 2,
                    params: vehicles.clone(),
                },
                CapabilityRule {
                    tag: "points-bridge".into(),
                    count: 2,
                    params: vehicles.clone(),
                },
                CapabilityRule {
                    tag: "recorder".into(),
                    count: 1,
                    params: vehicles,
                },
            ],
            data_sources: vec![
                "/cloud/vehicle/{vehicles}/pose".into(),
                "/cloud/vehicle/{vehicles}/points".into(),
            ],
            placement_hint: Some(NodeRole::Cloud),
        },
        OperatorRule {
            event_type: "pair-left".into(),
            intent: Intent::Shutdown,
            capabilities: vec![],
            data_sources: vec![],
            placement_hint: None,
        },
    ]
}

/// Fails the first Running pod built from `template` at time `at` (seconds).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub at: f64,
    pub template: String,
}

#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub N: u32,
    pub M: u32,
    pub f_p: f64,
    pub f_pc: f64,
    pub d_start: f64,
    pub d_stop: f64,
    /// Seconds of virtual time.
    pub duration: f64,
    pub seed: u64,
    /// Routes for the first vehicles; the rest get seeded random routes.
    #[serde(default)]
    pub routes: Vec<Route>,
    pub topology: Source<Topology>,
    pub registry: Source<Registry>,
    pub points_per_cloud: u32,
    #[serde(with = "serde_ms", default = "default_period")]
    pub analysis_period: Duration,
    #[serde(with = "serde_ms", default = "default_buffer")]
    pub buffer_duration: Duration,
    #[serde(default)]
    pub control_plane: ControlPlaneConfig,
    #[serde(default)]
    pub operator: OperatorSetup,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
}

fn default_period() -> Duration {
    crate::detector::DEFAULT_ANALYSIS_PERIOD
}

fn default_buffer() -> Duration {
    crate::detector::DEFAULT_BUFFER_DURATION
}

/// One problem found in a configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            field: field.to_owned(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for Diagnostic {}

/// A config with its referenced documents loaded.
#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    pub config: ScenarioConfig,
    pub topology: Topology,
    pub registry: Registry,
}

impl ScenarioConfig {
    /// Reads a config file. Errors are a single fatal diagnostic.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Diagnostic> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Diagnostic::new("config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ScenarioConfig = serde_json::from_str(&text)
            .map_err(|e| Diagnostic::new("config", format!("cannot parse {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for src in [&mut cfg.topology as &mut dyn Rebase, &mut cfg.registry] {
            src.rebase(base);
        }
        Ok(cfg)
    }

    /// Every invariant violation; empty means the config is runnable.
    pub fn validate(&self) -> Vec<Diagnostic> {
        match self.resolve() {
            Ok(_) => vec![],
            Err(d) => d,
        }
    }

    pub fn resolve(&self) -> Result<ResolvedConfig, Vec<Diagnostic>> {
        let mut out = vec![];
        if self.N == 0 {
            out.push(Diagnostic::new("N", "at least one vehicle is required"));
        }
        if self.M > self.N {
            out.push(Diagnostic::new("M", "M ≤ N violated"));
        }
        if !(self.d_stop > self.d_start) {
            out.push(Diagnostic::new("d_stop", "d_stop must exceed d_start"));
        }
        if !(self.d_start >= 0.0) || !self.d_start.is_finite() {
            out.push(Diagnostic::new("d_start", "must be a non-negative distance"));
        }
        for (name, f) in [("f_p", self.f_p), ("f_pc", self.f_pc)] {
            if !(f > 0.0 && f.is_finite()) {
                out.push(Diagnostic::new(name, "frequency must be positive"));
            }
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            out.push(Diagnostic::new("duration", "must be positive"));
        }
        if self.points_per_cloud == 0 {
            out.push(Diagnostic::new("points_per_cloud", "must be positive"));
        }
        if self.analysis_period.is_zero() {
            out.push(Diagnostic::new("analysis_period", "must be positive"));
        }
        if self.buffer_duration.is_zero() {
            out.push(Diagnostic::new("buffer_duration", "must be positive"));
        }
        if self.routes.len() > self.N as usize {
            out.push(Diagnostic::new("routes", "more routes than vehicles"));
        }
        for (i, r) in self.routes.iter().enumerate() {
            let field = format!("routes[{i}]");
            if r.len() < 2 {
                out.push(Diagnostic::new(&field, "a route needs at least 2 waypoints"));
            }
            if r.iter().any(|w| !(w.x.is_finite() && w.y.is_finite())) {
                out.push(Diagnostic::new(&field, "waypoint coordinates must be finite"));
            }
            if r.iter().take(r.len().saturating_sub(1)).any(|w| !(w.speed > 0.0 && w.speed.is_finite())) {
                out.push(Diagnostic::new(&field, "leg speeds must be positive"));
            }
        }
        for (i, f) in self.faults.iter().enumerate() {
            if !(f.at >= 0.0 && f.at.is_finite()) {
                out.push(Diagnostic::new(&format!("faults[{i}]"), "time must be non-negative"));
            }
        }

        let topology = match &self.topology {
            Source::Inline(t) => Some(t.clone()),
            Source::Path(p) => match Topology::load(p) {
                Ok(t) => Some(t),
                Err(e) => {
                    out.push(Diagnostic::new("topology", e.to_string()));
                    None
                }
            },
        };
        if let Some(t) = &topology {
            if let Err(e) = t.validate() {
                out.push(Diagnostic::new("topology", e.to_string()));
            }
            for i in 0..self.N {
                let id = NodeId::new(vehicle_node(i));
                match t.nodes.iter().find(|n| n.node_id == id) {
                    None => out.push(Diagnostic::new("topology", format!("missing node {id}"))),
                    Some(n) if n.role != NodeRole::Vehicle => {
                        out.push(Diagnostic::new("topology", format!("node {id} must have role vehicle")))
                    }
                    Some(_) => {}
                }
            }
            if !t.nodes.iter().any(|n| n.role == NodeRole::Cloud) {
                out.push(Diagnostic::new("topology", "no cloud node"));
            }
        }
        let registry = match &self.registry {
            Source::Inline(r) => r.validate().map(|_| r.clone()).map_err(|e| e.to_string()),
            Source::Path(p) => Registry::load(p).map_err(|e| e.to_string()),
        };
        let registry = match registry {
            Ok(r) => Some(r),
            Err(e) => {
                out.push(Diagnostic::new("registry", e));
                None
            }
        };
        match (out.is_empty(), topology, registry) {
            (true, Some(topology), Some(registry)) => Ok(ResolvedConfig {
                config: self.clone(),
                topology,
                registry,
            }),
            _ => Err(out),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_strategy(mut self, strategy: ConflictStrategy) -> Self {
        self.operator.manager.strategy = strategy;
        self
    }
}

trait Rebase {
    fn rebase(&mut self, base: &Path);
}

impl<T> Rebase for Source<T> {
    fn rebase(&mut self, base: &Path) {
        if let Source::Path(p) = self {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

pub fn vehicle_node(id: u32) -> String {
    format!("vehicle-{id}")
}

/// A star topology: one cloud, one edge node and `n` vehicles, all linked to
/// the cloud with zero latency.
pub fn star_topology(n: u32) -> Topology {
    let mut nodes = vec![
        NodeSpec {
            node_id: "cloud".into(),
            role: NodeRole::Cloud,
            capacity: Resources::new(8000, 16384),
        },
        NodeSpec {
            node_id: "edge-0".into(),
            role: NodeRole::Edge,
            capacity: Resources::new(4000, 8192),
        },
    ];
    let mut links = vec![LinkSpec {
        endpoint_a: "edge-0".into(),
        endpoint_b: "cloud".into(),
        latency: Duration::ZERO,
        symmetric: true,
    }];
    for i in 0..n {
        let id = NodeId::new(vehicle_node(i));
        nodes.push(NodeSpec {
            node_id: id.clone(),
            role: NodeRole::Vehicle,
            capacity: Resources::new(2000, 4096),
        });
        links.push(LinkSpec {
            endpoint_a: id,
            endpoint_b: "cloud".into(),
            latency: Duration::ZERO,
            symmetric: true,
        });
    }
    Topology { nodes, links }
}

/// Parses a config from an in-memory JSON value.
pub fn from_value(v: Value) -> Result<ScenarioConfig, Diagnostic> {
    serde_json::from_value(v).map_err(|e| Diagnostic::new("config", e.to_string()))
}
