#![allow(dead_code)]

use std::path::{Path, PathBuf};

use orchsim::control::{ClusterView, ControlPlane, NodeRole, Transition};
use orchsim::kernel::VirtualTime;
use orchsim::manager::Registry;
use orchsim::task::{CapabilityRequest, Intent, TaskDescription};
use serde_json::json;

pub fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn registry() -> Registry {
    Registry::load(config_path("registry.json")).expect("shipped registry loads")
}

/// The recording request an operator issues when a pair gets close.
pub fn recording_task(request_id: &str, key: &str, vehicles: [u32; 2], manager: &str) -> TaskDescription {
    let params = json!({ "vehicle_ids": vehicles });
    TaskDescription {
        request_id: request_id.into(),
        correlation_key: key.into(),
        intent: Intent::Deploy,
        required_capabilities: vec![
            CapabilityRequest::new("pose-bridge", 2, params.clone()),
            CapabilityRequest::new("points-bridge", 2, params.clone()),
            CapabilityRequest::new("recorder", 1, params),
        ],
        data_sources: vec![],
        placement_hint: Some(NodeRole::Cloud),
        issued_at: VirtualTime::ZERO,
        manager: manager.into(),
    }
}

pub fn shutdown_task(request_id: &str, key: &str, manager: &str) -> TaskDescription {
    TaskDescription {
        request_id: request_id.into(),
        correlation_key: key.into(),
        intent: Intent::Shutdown,
        required_capabilities: vec![],
        data_sources: vec![],
        placement_hint: None,
        issued_at: VirtualTime::ZERO,
        manager: manager.into(),
    }
}

/// Everything observable about a control plane, for mutation checks.
pub fn snapshot(cp: &ControlPlane, now: VirtualTime) -> (String, Vec<Transition>, u64) {
    let view: ClusterView = cp.cluster_view(now);
    (
        serde_json::to_string(&view).unwrap(),
        cp.history().to_vec(),
        cp.applies(),
    )
}

/// Runs reconcile ticks and completions until `until`.
pub fn drive(cp: &mut ControlPlane, from: VirtualTime, until: VirtualTime) {
    let step = cp.config().reconcile_interval;
    let mut t = from;
    while t <= until {
        cp.complete_due(t);
        cp.reconcile_tick(t);
        t = t + step;
    }
}

use orchsim::scenario::{ScenarioConfig, Waypoint};

pub fn default_config() -> ScenarioConfig {
    ScenarioConfig::load(config_path("default.json")).expect("default config loads")
}

/// Straight-leg interpolation, written out independently of the simulator.
pub fn position(route: &[Waypoint], t: f64) -> (f64, f64) {
    let mut clock = 0.0;
    for w in route.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
        let dur = len / a.speed;
        if t < clock + dur {
            let f = (t - clock) / dur;
            return (a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f);
        }
        clock += dur;
    }
    let last = route[route.len() - 1];
    (last.x, last.y)
}

pub fn distance(ra: &[Waypoint], rb: &[Waypoint], t: f64) -> f64 {
    let (a, b) = (position(ra, t), position(rb, t));
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Brute-force episodes for one pair: distance evaluated at every analysis
/// tick from `start`, entering at `d <= d_start` and leaving at `d > d_stop`.
///
/// The detector sees the latest pose, which may be up to `pose_lag` old.
/// The second value is true if any tick would decide differently on a pose
/// that old, i.e. the run cannot be compared tick for tick.
pub fn oracle_episodes(
    ra: &[Waypoint],
    rb: &[Waypoint],
    d_start: f64,
    d_stop: f64,
    period: f64,
    pose_lag: f64,
    start: f64,
    duration: f64,
) -> (Vec<(f64, Option<f64>)>, bool) {
    let mut out: Vec<(f64, Option<f64>)> = vec![];
    let mut active = false;
    let mut ambiguous = false;
    let first = (start / period).round() as u64;
    let ticks = (duration / period + 1e-9).floor() as u64;
    for k in first..=ticks {
        let t = k as f64 * period;
        let d = distance(ra, rb, t);
        let earlier = distance(ra, rb, (t - pose_lag).max(0.0));
        let flips = |x: f64| if active { x > d_stop } else { x <= d_start };
        ambiguous |= flips(d) != flips(earlier);
        if !active && d <= d_start {
            active = true;
            out.push((t, None));
        } else if active && d > d_stop {
            active = false;
            out.last_mut().unwrap().1 = Some(t);
        }
    }
    (out, ambiguous)
}

pub fn wp(x: f64, y: f64, speed: f64) -> Waypoint {
    Waypoint { x, y, speed }
}
