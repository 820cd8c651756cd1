//! The same recording request against a cloud node that is too small, under
//! each conflict strategy.
//!
//! `cargo run --example conflict_strategies`

use std::path::Path;

use orchsim::control::{ControlPlane, ControlPlaneConfig, NodeRole, Resources};
use orchsim::kernel::VirtualTime;
use orchsim::manager::{ApplicationManager, ConflictStrategy, ManagerConfig, Registry};
use orchsim::scenario::star_topology;
use orchsim::task::{CapabilityRequest, Intent, TaskDescription};
use serde_json::json;

fn task() -> TaskDescription {
    let vehicles = json!({ "vehicle_ids": [0, 1] });
    TaskDescription {
        request_id: "demo-000001".into(),
        correlation_key: "pair:0-1".into(),
        intent: Intent::Deploy,
        required_capabilities: vec![
            CapabilityRequest::new("pose-bridge", 2, vehicles.clone()),
            CapabilityRequest::new("points-bridge", 2, vehicles.clone()),
            CapabilityRequest::new("recorder", 1, vehicles),
        ],
        data_sources: vec![],
        placement_hint: Some(NodeRole::Cloud),
        issued_at: VirtualTime::ZERO,
        manager: "apps".into(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = Registry::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/registry.json"))?;
    let mut topology = star_topology(2);
    // Room for less than one recorder.
    topology.nodes[0].capacity = Resources::new(600, 1024);

    for strategy in [ConflictStrategy::Cancel, ConflictStrategy::Postpone, ConflictStrategy::Offload] {
        let mut cp = ControlPlane::new(ControlPlaneConfig::default(), &topology);
        let mut manager = ApplicationManager::new(ManagerConfig::new("apps").with_strategy(strategy), registry.clone());
        let d = manager.handle_task(&task(), &mut cp, VirtualTime::ZERO);
        let recorder_node = d.workload.as_ref().and_then(|w| {
            w.pods.iter().find(|p| p.pod_name == "recorder").map(|p| format!("{:?}", p.placement))
        });
        println!(
            "{strategy:?}: {:?} ({}), retry at {:?}, recorder placement {}",
            d.kind,
            d.reason,
            d.retry_at,
            recorder_node.unwrap_or_else(|| "-".into())
        );
    }
    Ok(())
}
