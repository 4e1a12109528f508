use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, MavState};
use crate::error::Result;
use crate::geometry::Plane;

/// One control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: usize,
    pub time: f64,
    pub truth: MavState,
    pub estimate: MavState,
    pub input: ControlInput,
    pub reference_position: [f64; 3],
    pub reference_velocity: [f64; 3],
    /// Tracking weights on `p_x, p_y, p_z, v_x, v_y, v_z`.
    pub weights: [f64; 6],
    pub active_planes: usize,
    pub cost: f64,
    pub constraint_violation: f64,
    pub rate_violation: f64,
    pub inner_iterations: usize,
    pub penalty_rounds: usize,
    pub converged: bool,
    /// True distance to the nearest panel (m).
    pub min_distance: f64,
}

/// Plane set produced by one segmentation, in the gravity-aligned frame of
/// the vehicle at the scan tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSnapshot {
    pub tick: usize,
    pub time: f64,
    pub points: usize,
    /// `[alpha, beta, gamma, zeta]` per plane.
    pub planes: Vec<[f64; 4]>,
}

impl PlaneSnapshot {
    pub fn new(tick: usize, time: f64, points: usize, planes: &[Plane]) -> Self {
        Self {
            tick,
            time,
            points,
            planes: planes.iter().map(Plane::coefficients).collect(),
        }
    }
}

/// Wall-clock measurements. Kept apart from the trace so traces and metrics
/// stay byte-identical across runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    /// Seconds per control solve.
    pub control: Vec<f64>,
    /// Seconds per segmentation.
    pub segmentation: Vec<f64>,
}

impl RunTiming {
    pub fn mean_control(&self) -> f64 {
        mean(&self.control)
    }

    pub fn max_control(&self) -> f64 {
        self.control.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_segmentation(&self) -> f64 {
        mean(&self.segmentation)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub ticks: Vec<TickRecord>,
    pub snapshots: Vec<PlaneSnapshot>,
    pub timing: RunTiming,
    /// Every waypoint was reached before the time limit.
    pub reached_goal: bool,
}

/// Column order of the trace CSV.
pub const TRACE_COLUMNS: [&str; 41] = [
    "tick", "time",
    "px", "py", "pz", "vx", "vy", "vz", "phi", "theta",
    "est_px", "est_py", "est_pz", "est_vx", "est_vy", "est_vz", "est_phi", "est_theta",
    "thrust", "phi_d", "theta_d",
    "ref_px", "ref_py", "ref_pz", "ref_vx", "ref_vy", "ref_vz",
    "w_px", "w_py", "w_pz", "w_vx", "w_vy", "w_vz",
    "active_planes", "cost", "constraint_violation", "rate_violation", "inner_iterations",
    "penalty_rounds", "converged", "min_distance",
];

/// Formats a float with a fixed representation so output bytes are stable.
fn f(v: f64) -> String {
    format!("{v:.9}")
}

impl RunTrace {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(TRACE_COLUMNS)?;
        for r in &self.ticks {
            let mut row = vec![r.tick.to_string(), f(r.time)];
            row.extend(r.truth.to_array().iter().map(|v| f(*v)));
            row.extend(r.estimate.to_array().iter().map(|v| f(*v)));
            row.extend(r.input.to_array().iter().map(|v| f(*v)));
            row.extend(r.reference_position.iter().map(|v| f(*v)));
            row.extend(r.reference_velocity.iter().map(|v| f(*v)));
            row.extend(r.weights.iter().map(|v| f(*v)));
            row.push(r.active_planes.to_string());
            row.push(f(r.cost));
            row.push(f(r.constraint_violation));
            row.push(f(r.rate_violation));
            row.push(r.inner_iterations.to_string());
            row.push(r.penalty_rounds.to_string());
            row.push(u8::from(r.converged).to_string());
            row.push(f(r.min_distance));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Plot-ready series: trajectory against reference, minimum distance and
    /// the position and velocity tracking weights over time.
    pub fn write_plot_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["time", "px", "py", "pz", "ref_px", "ref_py", "ref_pz", "min_distance", "w_px", "w_py", "w_vx", "w_vy"])?;
        for r in &self.ticks {
            let row = [
                r.time,
                r.truth.p.x,
                r.truth.p.y,
                r.truth.p.z,
                r.reference_position[0],
                r.reference_position[1],
                r.reference_position[2],
                r.min_distance,
                r.weights[0],
                r.weights[1],
                r.weights[3],
                r.weights[4],
            ];
            wtr.write_record(row.iter().map(|v| f(*v)))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_planes_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.snapshots)?;
        Ok(())
    }
}
