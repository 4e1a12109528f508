//! Eight-state quadrotor model with yaw fixed at zero.
//!
//! State `[p, v, phi, theta]`, input `[T, phi_d, theta_d]` with `T` a
//! mass-normalized thrust in m/s². Translational dynamics follow the tilted
//! thrust vector with linear drag; roll and pitch track their commands through
//! first-order lags. Discretized with forward Euler at `ts`.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STATE_DIM: usize = 8;
pub const INPUT_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MavState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub phi: f64,
    pub theta: f64,
}

impl Default for MavState {
    fn default() -> Self {
        Self::hover_at(Vector3::zeros())
    }
}

impl MavState {
    pub fn hover_at(p: Vector3<f64>) -> Self {
        Self {
            p,
            v: Vector3::zeros(),
            phi: 0.0,
            theta: 0.0,
        }
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [
            self.p.x, self.p.y, self.p.z, self.v.x, self.v.y, self.v.z, self.phi, self.theta,
        ]
    }

    pub fn from_array(a: &[f64; STATE_DIM]) -> Self {
        Self {
            p: Vector3::new(a[0], a[1], a[2]),
            v: Vector3::new(a[3], a[4], a[5]),
            phi: a[6],
            theta: a[7],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Mass-normalized thrust (m/s²).
    pub thrust: f64,
    pub phi_d: f64,
    pub theta_d: f64,
}

impl ControlInput {
    pub fn new(thrust: f64, phi_d: f64, theta_d: f64) -> Self {
        Self {
            thrust,
            phi_d,
            theta_d,
        }
    }

    pub fn hover(g: f64) -> Self {
        Self::new(g, 0.0, 0.0)
    }

    pub fn to_array(&self) -> [f64; INPUT_DIM] {
        [self.thrust, self.phi_d, self.theta_d]
    }

    pub fn from_slice(a: &[f64]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// Elementwise clamp into `[lo, hi]`.
    pub fn clamped(&self, lo: &ControlInput, hi: &ControlInput) -> Self {
        Self::new(
            self.thrust.clamp(lo.thrust, hi.thrust),
            self.phi_d.clamp(lo.phi_d, hi.phi_d),
            self.theta_d.clamp(lo.theta_d, hi.theta_d),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub g: f64,
    pub tau_phi: f64,
    pub tau_theta: f64,
    pub k_phi: f64,
    pub k_theta: f64,
    /// Linear drag coefficients per axis (1/s).
    pub drag: [f64; 3],
    /// Sampling period (s).
    pub ts: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            g: 9.81,
            tau_phi: 0.5,
            tau_theta: 0.5,
            k_phi: 1.0,
            k_theta: 1.0,
            drag: [0.1, 0.1, 0.1],
            ts: 0.05,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tau_phi > 0.0
            && self.tau_theta > 0.0
            && self.ts > 0.0
            && self.g.is_finite()
            && self.k_phi.is_finite()
            && self.k_theta.is_finite()
            && self.drag.iter().all(|d| d.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid model parameters: {self:?}")))
        }
    }
}

/// Wraps an angle into `[-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    if (-PI..=PI).contains(&a) {
        a
    } else {
        let w = (a + PI).rem_euclid(2.0 * PI) - PI;
        if w == -PI && a > 0.0 {
            PI
        } else {
            w
        }
    }
}

/// Continuous-time derivative on the flat state layout.
pub(crate) fn derivative_array(
    x: &[f64; STATE_DIM],
    u: &[f64; INPUT_DIM],
    params: &ModelParams,
) -> [f64; STATE_DIM] {
    let (sphi, cphi) = x[6].sin_cos();
    let (stheta, ctheta) = x[7].sin_cos();
    let t = u[0];
    [
        x[3],
        x[4],
        x[5],
        stheta * cphi * t - params.drag[0] * x[3],
        -sphi * t - params.drag[1] * x[4],
        cphi * ctheta * t - params.g - params.drag[2] * x[5],
        (params.k_phi * u[1] - x[6]) / params.tau_phi,
        (params.k_theta * u[2] - x[7]) / params.tau_theta,
    ]
}

pub(crate) fn step_array(
    x: &[f64; STATE_DIM],
    u: &[f64; INPUT_DIM],
    params: &ModelParams,
) -> [f64; STATE_DIM] {
    let dx = derivative_array(x, u, params);
    let mut next = [0.0; STATE_DIM];
    for i in 0..STATE_DIM {
        next[i] = x[i] + params.ts * dx[i];
    }
    next[6] = wrap_angle(next[6]);
    next[7] = wrap_angle(next[7]);
    next
}

/// Time derivative of the state, returned in state layout.
pub fn continuous_derivative(x: &MavState, u: &ControlInput, params: &ModelParams) -> MavState {
    MavState::from_array(&derivative_array(&x.to_array(), &u.to_array(), params))
}

/// One forward-Euler step of length `params.ts`.
pub fn step_euler(x: &MavState, u: &ControlInput, params: &ModelParams) -> MavState {
    MavState::from_array(&step_array(&x.to_array(), &u.to_array(), params))
}

/// Applies `inputs` in order from `x0`; returns `x_1 ..= x_N`.
pub fn rollout(x0: &MavState, inputs: &[ControlInput], params: &ModelParams) -> Vec<MavState> {
    let mut x = *x0;
    inputs
        .iter()
        .map(|u| {
            x = step_euler(&x, u, params);
            x
        })
        .collect()
}
