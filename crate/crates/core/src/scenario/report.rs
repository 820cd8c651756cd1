//! Machine-readable summary of a scenario run.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use crate::bus::{BusStats, NodeId, Topic};
use crate::control::{BehaviorKind, PodId, PodPhase, Transition};
use crate::kernel::VirtualTime;
use crate::manager::{Decision, InstanceChange};
use crate::recorder::SessionStats;

/// Report keys holding wall-clock measurements. Everything else is a pure
/// function of config and seed.
pub const WALL_CLOCK_KEYS: [&str; 6] = [
    "translation_ms",
    "storage_s",
    "wall_clock_s",
    "wall_clock_write_time",
    "max_cycle_ms",
    "mean_cycle_ms",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Episode {
    pub pair: String,
    pub vehicles: Vec<u32>,
    pub t_enter: f64,
    pub t_leave: Option<f64>,
    pub instance_id: Option<String>,
    /// Virtual delay from the first pose sample satisfying the trigger to
    /// the emitted event.
    pub detection_ms: f64,
    pub translation_ms: Option<f64>,
    pub reconciliation_s: Option<f64>,
    pub storage_s: Option<f64>,
    pub store: Option<String>,
    pub store_entries: usize,
    pub pose_entries: BTreeMap<u32, usize>,
    pub cloud_entries: BTreeMap<u32, usize>,
    /// Intervals during which the recorder pod was Running, in seconds.
    pub recorder_running: Vec<(f64, Option<f64>)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LatencySummary {
    pub detection_ms: Option<f64>,
    pub translation_ms: Option<f64>,
    pub reconciliation_s: Option<f64>,
    pub storage_s: Option<f64>,
}

impl LatencySummary {
    pub fn mean_of(episodes: &[Episode]) -> Self {
        fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
            let v: Vec<f64> = xs.collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        }
        LatencySummary {
            detection_ms: mean(episodes.iter().map(|e| e.detection_ms)),
            translation_ms: mean(episodes.iter().filter_map(|e| e.translation_ms)),
            reconciliation_s: mean(episodes.iter().filter_map(|e| e.reconciliation_s)),
            storage_s: mean(episodes.iter().filter_map(|e| e.storage_s)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventRecord {
    pub event_type: String,
    pub correlation_key: String,
    pub t: f64,
    pub detector: String,
    pub attributes: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PodSummary {
    pub pod_id: PodId,
    pub owner: String,
    pub template: String,
    pub behavior_kind: BehaviorKind,
    pub node: Option<NodeId>,
    pub first_running: Option<f64>,
    pub terminated_at: Option<f64>,
    pub restart_count: u32,
    pub final_phase: PodPhase,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StoreSummary {
    pub file: String,
    pub correlation_key: String,
    pub entries: usize,
    pub sessions: Vec<SessionStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisSummary {
    pub detector: String,
    pub cycles: u64,
    pub events: u64,
    pub analyzer_failures: u64,
    pub max_cycle_ms: f64,
    pub mean_cycle_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub duration_s: f64,
    pub events_fired: u64,
    pub bus: BusStats,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub episodes: Vec<Episode>,
    pub latency: LatencySummary,
    pub decisions: Vec<Decision>,
    pub store_stats: Vec<StoreSummary>,
    pub events: Vec<EventRecord>,
    pub pods: Vec<PodSummary>,
    pub instances: Vec<InstanceChange>,
    pub analysis: Vec<AnalysisSummary>,
    pub run: RunSummary,
}

impl ScenarioReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// The report with every wall-clock measurement removed.
    pub fn deterministic_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("reports always serialize");
        strip_wall_clock(&mut v);
        v
    }

    /// Pods not created by the startup workload.
    pub fn dynamic_pods(&self) -> impl Iterator<Item = &PodSummary> {
        self.pods.iter().filter(|p| p.owner != super::sim::BOOTSTRAP_OWNER)
    }
}

/// Removes [`WALL_CLOCK_KEYS`] at any depth.
pub fn strip_wall_clock(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !WALL_CLOCK_KEYS.contains(&k.as_str()));
            map.values_mut().for_each(strip_wall_clock);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_wall_clock),
        _ => {}
    }
}

/// Point-cloud delivery to a non-vehicle node.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudDelivery {
    pub at: VirtualTime,
    pub topic: Topic,
    pub node: NodeId,
}

/// Fine-grained record kept alongside the report.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub transitions: Vec<Transition>,
    pub cloud_deliveries: Vec<CloudDelivery>,
    /// `(pod, published topics)` for every bridge that ever ran.
    pub bridges: BTreeMap<PodId, Vec<Topic>>,
    pub faults: Vec<(VirtualTime, PodId)>,
}

impl Trace {
    /// Running intervals of `pod`, closed at the time it left Running.
    pub fn running_intervals(&self, pod: &PodId) -> Vec<(VirtualTime, Option<VirtualTime>)> {
        let mut out: Vec<(VirtualTime, Option<VirtualTime>)> = vec![];
        for t in self.transitions.iter().filter(|t| &t.pod_id == pod) {
            if t.to == PodPhase::Running {
                out.push((t.at, None));
            } else if t.from == PodPhase::Running {
                if let Some(last) = out.last_mut() {
                    last.1 = Some(t.at);
                }
            }
        }
        out
    }

    /// `[Running, Terminated]` windows of `pod`.
    pub fn lifetime(&self, pod: &PodId) -> Option<(VirtualTime, Option<VirtualTime>)> {
        let first = self
            .transitions
            .iter()
            .find(|t| &t.pod_id == pod && t.to == PodPhase::Running)?
            .at;
        let end = self
            .transitions
            .iter()
            .find(|t| &t.pod_id == pod && t.to == PodPhase::Terminated)
            .map(|t| t.at);
        Some((first, end))
    }

    /// Cloud-side point-cloud deliveries that no running bridge accounts for.
    pub fn gating_violations(&self) -> usize {
        self.cloud_deliveries
            .iter()
            .filter(|d| {
                !self.bridges.iter().any(|(pod, topics)| {
                    topics.contains(&d.topic)
                        && self.running_intervals(pod).iter().any(|(a, b)| {
                            *a <= d.at && b.is_none_or(|b| d.at <= b)
                        })
                })
            })
            .count()
    }
}
