//! The connected-vehicle recording scenario: motion, sensors, proximity
//! detection and the applications deployed in response.

pub mod analyzers;
pub mod config;
pub mod motion;
pub mod report;
pub mod sim;

pub use config::{star_topology, vehicle_node, Diagnostic, FaultSpec, OperatorSetup, ResolvedConfig, ScenarioConfig, Source, Waypoint};
pub use motion::{synth_cloud, Fleet, Lidar, MotionError, Pose};
pub use report::{strip_wall_clock, Episode, ScenarioReport, Trace};
pub use sim::{run_scenario, Scenario, ScenarioError, ScenarioOutcome, BOOTSTRAP_OWNER};
