//! A cloud operator deploys a per-pair supervisor operator, which in turn
//! deploys the recording application. Stopping the supervisor tears down
//! everything it launched.
//!
//! `cargo run --example operator_chain`

use std::path::Path;

use orchsim::scenario::{run_scenario, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/chain.json");
    let outcome = run_scenario(&ScenarioConfig::load(&path)?, None)?;
    let report = &outcome.report;

    println!("decisions:");
    for d in &report.decisions {
        println!(
            "  {:>7.2} s  {:<22} {:<10} {:?} {:<12} -> {}",
            d.decided_at.as_secs_f64(),
            d.manager,
            d.correlation_key,
            d.kind,
            d.reason,
            d.instance_id.as_deref().unwrap_or("-"),
        );
    }
    println!("pods by owner:");
    for p in report.dynamic_pods() {
        println!(
            "  {:<28} {:<16} {:?}, terminated at {}",
            p.owner,
            p.template,
            p.final_phase,
            p.terminated_at.map_or("-".into(), |t| format!("{t:.2} s")),
        );
    }
    for s in &report.store_stats {
        println!("store {}: {} entries", s.file, s.entries);
    }
    Ok(())
}
