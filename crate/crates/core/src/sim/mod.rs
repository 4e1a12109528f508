//! Closed-loop desk-scale simulation: wall environments, a spinning lidar,
//! odometry noise, the NMPC and potential-field controllers, and run metrics.

mod apf;
mod environment;
mod metrics;
mod reference;
mod scenario;
mod sensors;
mod trace;

pub use apf::{potential_field_force, potential_field_step, ApfGains};
pub use environment::{Environment, Panel, Waypoint, CRUISE_ALTITUDE};
pub use metrics::{compute_metrics, Metrics};
pub use reference::ReferencePath;
pub use scenario::{
    run_scenario, ControllerMode, EnvironmentConfig, EnvironmentKind, RunConfig, Scenario,
};
pub use sensors::{
    body_to_world, level_cloud, synthetic_scan, LidarConfig, NoiseConfig, OdometryNoise, VarianceMode,
};
pub use trace::{PlaneSnapshot, RunTiming, RunTrace, TickRecord, TRACE_COLUMNS};
