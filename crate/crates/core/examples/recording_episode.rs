//! Runs the shipped two-vehicle crossing and prints the recording episode.
//!
//! `cargo run --example recording_episode`

use std::path::Path;

use orchsim::scenario::{run_scenario, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/default.json");
    let config = ScenarioConfig::load(&path)?;
    let outcome = run_scenario(&config, None)?;
    let report = &outcome.report;

    for e in &report.episodes {
        println!(
            "{}: entered {:.2} s, left {}, instance {}",
            e.pair,
            e.t_enter,
            e.t_leave.map_or("never".into(), |t| format!("{t:.2} s")),
            e.instance_id.as_deref().unwrap_or("-"),
        );
        println!(
            "  detection {:.1} ms, translation {:.3} ms, reconciliation {:.2} s",
            e.detection_ms,
            e.translation_ms.unwrap_or(f64::NAN),
            e.reconciliation_s.unwrap_or(f64::NAN),
        );
        for (v, n) in &e.pose_entries {
            println!("  vehicle {v}: {n} poses, {} clouds", e.cloud_entries[v]);
        }
    }
    println!("dynamic pods:");
    for p in report.dynamic_pods() {
        println!(
            "  {:<48} on {:<10} running {:>6.2} s .. {}",
            p.pod_id.as_str(),
            p.node.as_ref().map_or("-", |n| n.as_str()),
            p.first_running.unwrap_or(f64::NAN),
            p.terminated_at.map_or("-".into(), |t| format!("{t:.2} s")),
        );
    }
    println!(
        "{} kernel events, {:.2} s wall clock, {} point-cloud deliveries outside bridge windows",
        report.run.events_fired,
        report.run.wall_clock_s,
        outcome.trace.gating_violations(),
    );
    Ok(())
}
