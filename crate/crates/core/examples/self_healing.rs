//! Applies a one-pod workload, crashes the pod, and lets reconciliation
//! restart it.
//!
//! `cargo run --example self_healing`

use std::collections::BTreeMap;

use orchsim::control::{
    BehaviorKind, ControlPlane, ControlPlaneConfig, NodeSelector, PodSpec, Resources, WorkloadDefinition,
};
use orchsim::kernel::VirtualTime;
use orchsim::scenario::star_topology;

fn main() {
    let config = ControlPlaneConfig::default();
    let tick = config.reconcile_interval;
    let mut cp = ControlPlane::new(config, &star_topology(2));
    let workload = WorkloadDefinition {
        owner: "demo".into(),
        revision: 1,
        pods: vec![PodSpec {
            pod_name: "recorder".into(),
            template: "recorder".into(),
            image_ref: "orchsim/recorder:2.0".into(),
            placement: NodeSelector::Node("cloud".into()),
            resource_request: Resources::new(1000, 2048),
            config: BTreeMap::new(),
            subscribes: vec![],
            publishes: vec![],
            behavior_kind: BehaviorKind::Recorder,
            startup_latency: None,
        }],
    };
    cp.apply(workload, VirtualTime::ZERO).unwrap();

    let crash_at = VirtualTime::from_secs(8);
    let mut crashed = false;
    let mut now = VirtualTime::ZERO;
    while now <= VirtualTime::from_secs(16) {
        if !crashed && now >= crash_at {
            let id = cp.cluster_view(now).pods[0].pod_id.clone();
            cp.inject_failure(&id, now).unwrap();
            crashed = true;
        }
        cp.reconcile_tick(now);
        now = now + tick;
    }
    for t in cp.history() {
        println!("{:>10}  {}  {:?} -> {:?}", t.at, t.pod_id, t.from, t.to);
    }
    let pod = &cp.cluster_view(now).pods[0];
    println!("final phase {:?}, restarts {}", pod.phase, pod.restart_count);
}
