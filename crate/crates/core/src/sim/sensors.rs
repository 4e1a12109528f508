use std::collections::VecDeque;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::MavState;
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::nmpc::TRACKED_AXES;

use super::environment::Environment;

/// Multi-channel spinning lidar. Channels are spread evenly over
/// `[-half_fov_deg, half_fov_deg]` in elevation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub channels: usize,
    pub half_fov_deg: f64,
    pub horizontal_resolution_deg: f64,
    pub max_range: f64,
    /// Standard deviation of the per-return range noise (m).
    pub range_noise: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            half_fov_deg: 15.0,
            horizontal_resolution_deg: 2.0,
            max_range: 20.0,
            range_noise: 0.01,
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0
            || !(self.horizontal_resolution_deg > 0.0)
            || !(self.max_range > 0.0)
            || !(self.range_noise >= 0.0)
            || !self.half_fov_deg.is_finite()
        {
            return Err(Error::InvalidConfig(format!("invalid lidar configuration: {self:?}")));
        }
        Ok(())
    }

    /// Unit ray directions in the sensor frame, channel-major.
    pub fn ray_directions(&self) -> Vec<[f64; 3]> {
        let azimuths = (360.0 / self.horizontal_resolution_deg).round().max(1.0) as usize;
        let mut rays = Vec::with_capacity(self.channels * azimuths);
        for c in 0..self.channels {
            let elev = if self.channels == 1 {
                0.0
            } else {
                -self.half_fov_deg + 2.0 * self.half_fov_deg * c as f64 / (self.channels - 1) as f64
            }
            .to_radians();
            for a in 0..azimuths {
                let az = (a as f64 * 360.0 / azimuths as f64).to_radians();
                rays.push([elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin()]);
            }
        }
        rays
    }
}

/// Body-to-world rotation for roll `phi` and pitch `theta` with zero yaw,
/// consistent with the thrust direction of the dynamics model.
pub fn body_to_world(phi: f64, theta: f64) -> Matrix3<f64> {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
    let ry = Matrix3::new(ct, 0.0, st, 0.0, 1.0, 0.0, -st, 0.0, ct);
    ry * rx
}

/// Casts every ray against the environment and returns hits in the body frame.
/// One range-noise sample is drawn per ray, hit or not, so the random stream
/// does not depend on the geometry.
pub fn synthetic_scan<R: Rng + ?Sized>(
    env: &Environment,
    state: &MavState,
    lidar: &LidarConfig,
    rng: &mut R,
) -> PointCloud {
    let rot = body_to_world(state.phi, state.theta);
    let origin = Point3::from(state.p);
    let mut points = Vec::new();
    for d_body in lidar.ray_directions() {
        let noise: f64 = rng.sample(StandardNormal);
        let d_world = rot * Vector3::from(d_body);
        let dir = [d_world.x, d_world.y, d_world.z];
        let hit = env
            .panels
            .iter()
            .filter_map(|p| p.intersect(&origin, &dir))
            .fold(f64::INFINITY, f64::min);
        if hit <= lidar.max_range {
            let range = hit + lidar.range_noise * noise;
            points.push(Point3::new(d_body[0] * range, d_body[1] * range, d_body[2] * range));
        }
    }
    PointCloud::body(points)
}

/// Rotates a body-frame cloud into the gravity-aligned frame centred on the
/// sensor. With zero yaw its axes are the world axes.
pub fn level_cloud(cloud: &PointCloud, phi: f64, theta: f64) -> PointCloud {
    let rot = body_to_world(phi, theta);
    PointCloud::body(cloud.points.iter().map(|p| Point3::from(rot * p.coords)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// Emit the configured noise variance once the noise is active.
    #[default]
    Known,
    /// Emit the rolling sample variance of the last `window` measurements.
    Estimated,
}

/// Gaussian odometry noise on the x and y position and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub position_std: f64,
    pub velocity_std: f64,
    /// Simulated time at which the noise switches on (s).
    pub activation_time: f64,
    pub variance_mode: VarianceMode,
    /// Window length of the estimated-variance mode.
    pub window: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            position_std: 1.5,
            velocity_std: 0.5,
            activation_time: 0.0,
            variance_mode: VarianceMode::Known,
            window: 10,
        }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self {
            position_std: 0.0,
            velocity_std: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.position_std >= 0.0) || !(self.velocity_std >= 0.0) || !(self.activation_time >= 0.0) || self.window < 2 {
            return Err(Error::InvalidConfig(format!("invalid noise configuration: {self:?}")));
        }
        Ok(())
    }
}

/// Stateful odometry corruption.
#[derive(Debug, Clone)]
pub struct OdometryNoise {
    config: NoiseConfig,
    history: [VecDeque<f64>; TRACKED_AXES],
}

impl OdometryNoise {
    pub fn new(config: NoiseConfig) -> Self {
        Self {
            config,
            history: Default::default(),
        }
    }

    /// Returns the estimated state and one variance sample per tracked axis.
    /// Four normal samples are drawn every call regardless of activation.
    pub fn inject<R: Rng + ?Sized>(&mut self, truth: &MavState, t: f64, rng: &mut R) -> (MavState, [f64; TRACKED_AXES]) {
        let draws: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let active = t >= self.config.activation_time;
        let mut est = *truth;
        if active {
            est.p.x += self.config.position_std * draws[0];
            est.p.y += self.config.position_std * draws[1];
            est.v.x += self.config.velocity_std * draws[2];
            est.v.y += self.config.velocity_std * draws[3];
        }
        let variances = match self.config.variance_mode {
            VarianceMode::Known if active => {
                let (p2, v2) = (self.config.position_std.powi(2), self.config.velocity_std.powi(2));
                [p2, p2, 0.0, v2, v2, 0.0]
            }
            VarianceMode::Known => [0.0; TRACKED_AXES],
            VarianceMode::Estimated => {
                let measured = [est.p.x, est.p.y, est.p.z, est.v.x, est.v.y, est.v.z];
                std::array::from_fn(|i| {
                    let buf = &mut self.history[i];
                    if buf.len() == self.config.window {
                        buf.pop_front();
                    }
                    buf.push_back(measured[i]);
                    sample_variance(buf)
                })
            }
        };
        (est, variances)
    }
}

fn sample_variance(values: &VecDeque<f64>) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}
