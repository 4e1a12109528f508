use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;

use super::environment::Environment;
use super::trace::RunTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean distance from the true position to the reference point (m).
    pub waypoint_mae: f64,
    /// Mean norm of the velocity tracking error (m/s).
    pub velocity_mae: f64,
    pub path_length: f64,
    /// Closest true approach to any panel (m); absent without panels.
    pub min_distance: Option<f64>,
    pub collision: bool,
    pub reached_goal: bool,
    pub ticks: usize,
    pub duration: f64,
    pub non_converged_ticks: usize,
    /// Largest predicted collision deficit reported by the controller (m).
    pub max_constraint_violation: f64,
}

/// Summarizes a trace. A tick closer than `collision_distance` to a panel
/// sets the collision flag.
pub fn compute_metrics(trace: &RunTrace, env: &Environment, collision_distance: f64) -> Result<Metrics> {
    let Some(last) = trace.ticks.last() else {
        return Err(Error::EmptyInput("run trace"));
    };
    let n = trace.ticks.len() as f64;
    let mut wp = 0.0;
    let mut vel = 0.0;
    let mut min_distance = f64::INFINITY;
    for r in &trace.ticks {
        let p = r.truth.p;
        wp += (p - nalgebra::Vector3::from(r.reference_position)).norm();
        vel += (r.truth.v - nalgebra::Vector3::from(r.reference_velocity)).norm();
        min_distance = min_distance.min(env.distance_to_nearest(&Point3::from(p)));
    }
    let path_length = trace
        .ticks
        .windows(2)
        .map(|w| (w[1].truth.p - w[0].truth.p).norm())
        .sum();
    Ok(Metrics {
        waypoint_mae: wp / n,
        velocity_mae: vel / n,
        path_length,
        min_distance: min_distance.is_finite().then_some(min_distance),
        collision: min_distance < collision_distance,
        reached_goal: trace.reached_goal,
        ticks: trace.ticks.len(),
        duration: last.time,
        non_converged_ticks: trace.ticks.iter().filter(|r| !r.converged).count(),
        max_constraint_violation: trace.ticks.iter().map(|r| r.constraint_violation).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ControlInput, MavState};
    use crate::sim::environment::Panel;
    use crate::sim::trace::TickRecord;
    use nalgebra::Vector3;

    fn record(tick: usize, p: [f64; 3], r: [f64; 3]) -> TickRecord {
        TickRecord {
            tick,
            time: tick as f64 * 0.05,
            truth: MavState::hover_at(Vector3::from(p)),
            estimate: MavState::hover_at(Vector3::from(p)),
            input: ControlInput::hover(9.81),
            reference_position: r,
            reference_velocity: [0.0; 3],
            weights: [0.0; 6],
            active_planes: 0,
            cost: 0.0,
            constraint_violation: 0.0,
            rate_violation: 0.0,
            inner_iterations: 0,
            penalty_rounds: 1,
            converged: true,
            min_distance: 0.0,
        }
    }

    fn wall_env() -> Environment {
        Environment {
            name: "wall".into(),
            panels: vec![Panel::new([2.0, -5.0, -5.0], [2.0, 5.0, 5.0]).unwrap()],
            spawn: [0.0; 3],
            waypoints: Vec::new(),
        }
    }

    #[test]
    fn perfect_tracking_has_zero_error() {
        let trace = RunTrace {
            ticks: (0..5).map(|k| record(k, [k as f64 * 0.1, 0.0, 0.0], [k as f64 * 0.1, 0.0, 0.0])).collect(),
            ..Default::default()
        };
        let m = compute_metrics(&trace, &wall_env(), 0.05).unwrap();
        assert_eq!(m.waypoint_mae, 0.0);
        assert!((m.path_length - 0.4).abs() < 1e-12);
    }

    #[test]
    fn hover_distance_to_wall() {
        let trace = RunTrace {
            ticks: (0..3).map(|k| record(k, [0.0; 3], [0.0; 3])).collect(),
            ..Default::default()
        };
        let m = compute_metrics(&trace, &wall_env(), 0.05).unwrap();
        assert_eq!(m.min_distance, Some(2.0));
        assert!(!m.collision);
    }

    #[test]
    fn hand_built_trace() {
        let trace = RunTrace {
            ticks: vec![
                record(0, [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
                record(1, [1.0, 0.0, 0.0], [1.0, 0.3, 0.4]),
                record(2, [1.96, 0.0, 0.0], [1.0, 0.0, 0.0]),
            ],
            ..Default::default()
        };
        let m = compute_metrics(&trace, &wall_env(), 0.05).unwrap();
        assert!((m.waypoint_mae - (0.0 + 0.5 + 0.96) / 3.0).abs() < 1e-12);
        assert!((m.min_distance.unwrap() - 0.04).abs() < 1e-12);
        assert!(m.collision);
    }

    #[test]
    fn empty_trace_is_an_error() {
        assert!(compute_metrics(&RunTrace::default(), &wall_env(), 0.05).is_err());
    }
}
