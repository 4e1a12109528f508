use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, MavState, ModelParams};
use crate::geometry::PointCloud;

/// Artificial-potential-field gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApfGains {
    /// Attraction per metre of distance to the active waypoint (m/s² per m).
    pub attraction: f64,
    /// Cap on the attractive acceleration (m/s²).
    pub max_attraction: f64,
    /// Velocity damping (1/s).
    pub damping: f64,
    /// Repulsion scale of each point inside the influence radius.
    pub repulsion: f64,
    /// Points farther than this are ignored (m).
    pub influence: f64,
}

impl Default for ApfGains {
    fn default() -> Self {
        Self {
            attraction: 1.0,
            max_attraction: 1.0,
            damping: 1.5,
            repulsion: 0.005,
            influence: 1.0,
        }
    }
}

/// Desired acceleration from attraction to `goal` and inverse-square
/// repulsion from every cloud point within the influence radius. `cloud` is
/// gravity-aligned and centred on the vehicle.
pub fn potential_field_force(x_est: &MavState, cloud: &PointCloud, goal: &Vector3<f64>, gains: &ApfGains) -> Vector3<f64> {
    let mut attract = (goal - x_est.p) * gains.attraction;
    let norm = attract.norm();
    if norm > gains.max_attraction {
        attract *= gains.max_attraction / norm;
    }
    let rho = gains.influence;
    let mut repel = Vector3::zeros();
    for q in &cloud.points {
        let d = q.coords.norm();
        if d > 1e-6 && d < rho {
            let magnitude = gains.repulsion * (1.0 / d - 1.0 / rho) / (d * d);
            repel -= q.coords * (magnitude / d);
        }
    }
    attract + repel - x_est.v * gains.damping
}

/// Maps the potential-field acceleration to thrust and attitude commands by
/// inverting the small-angle dynamics, then clips to `[u_min, u_max]`.
pub fn potential_field_step(
    x_est: &MavState,
    cloud: &PointCloud,
    goal: &Vector3<f64>,
    gains: &ApfGains,
    model: &ModelParams,
    u_min: &ControlInput,
    u_max: &ControlInput,
) -> ControlInput {
    let a = potential_field_force(x_est, cloud, goal, gains);
    let g = model.g;
    let u = ControlInput::new(g + a.z + model.drag[2] * x_est.v.z, (-a.y / g).atan(), (a.x / g).atan());
    u.clamped(u_min, u_max)
}
