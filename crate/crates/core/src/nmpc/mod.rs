//! Penalty-based nonlinear MPC over the eight-state model.
//!
//! Collision constraints against body-frame planes and attitude-rate limits
//! enter the cost as `(c/2)·max(0, violation)²`. The box-constrained problem
//! is solved by PANOC and `c` grows until violations fall below tolerance.

mod controller;
mod entropy;
mod objective;
mod panoc;

pub use controller::{control_step, reference_state, solve, ControllerState, NmpcSolution, WeightMode};
pub use entropy::{
    entropy_weights, shannon_entropy, AdaptiveWeights, VarianceWindow, TRACKED_AXES, VARIANCE_FLOOR,
};
pub use objective::{CostTerms, Objective, Violations};
pub use panoc::{panoc_minimize, BoxSet, FnObjective, PanocOptions, PanocResult, SmoothObjective};

use serde::{Deserialize, Serialize};

use crate::dynamics::ControlInput;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmpcConfig {
    /// Prediction horizon `N` in steps of the model sampling period.
    pub horizon: usize,
    /// Weights on `u − u_ref`. The thrust entry applies to thrust divided by
    /// the width of its box, so it keeps its meaning for a `[0, 1]` thrust.
    pub q_u: [f64; 3],
    /// Weights on successive input differences, thrust normalized as in `q_u`.
    pub q_du: [f64; 3],
    pub q_phi: f64,
    pub q_theta: f64,
    pub u_min: ControlInput,
    pub u_max: ControlInput,
    /// Safety distance to every plane (m).
    pub d_s: f64,
    /// Bound on `|φ_d,j − φ_d,j−1|` per step (rad).
    pub dphi_max: f64,
    pub dtheta_max: f64,
    pub n_max: usize,
    pub solver_tol: f64,
    pub penalty_init: f64,
    pub penalty_factor: f64,
    pub penalty_max: f64,
    /// Accepted collision deficit (m).
    pub constraint_tol: f64,
    /// Accepted excess over the rate bounds (rad).
    pub rate_tol: f64,
    pub max_inner_iters: usize,
    pub lbfgs_memory: usize,
}

impl Default for NmpcConfig {
    fn default() -> Self {
        let g = 9.81;
        Self {
            horizon: 40,
            q_u: [10.0; 3],
            q_du: [20.0; 3],
            q_phi: 5.0,
            q_theta: 5.0,
            u_min: ControlInput::new(0.0, -0.4, -0.4),
            u_max: ControlInput::new(2.0 * g, 0.4, 0.4),
            d_s: 1.0,
            dphi_max: 0.05,
            dtheta_max: 0.05,
            n_max: 10,
            solver_tol: 1e-3,
            penalty_init: 10.0,
            penalty_factor: 5.0,
            penalty_max: 1e6,
            constraint_tol: 0.05,
            rate_tol: 0.005,
            max_inner_iters: 200,
            lbfgs_memory: 10,
        }
    }
}

impl NmpcConfig {
    fn thrust_scale(&self) -> f64 {
        (self.u_max.thrust - self.u_min.thrust).powi(-2)
    }

    /// `q_u` in the units of [`ControlInput`].
    pub fn effective_q_u(&self) -> [f64; 3] {
        [self.q_u[0] * self.thrust_scale(), self.q_u[1], self.q_u[2]]
    }

    /// `q_du` in the units of [`ControlInput`].
    pub fn effective_q_du(&self) -> [f64; 3] {
        [self.q_du[0] * self.thrust_scale(), self.q_du[1], self.q_du[2]]
    }

    pub fn validate(&self) -> Result<()> {
        let lo = self.u_min.to_array();
        let hi = self.u_max.to_array();
        let checks = [
            (self.horizon >= 1, "horizon must be at least 1"),
            (self.d_s > 0.0, "d_s must be positive"),
            (self.penalty_factor > 1.0, "penalty_factor must exceed 1"),
            (self.penalty_init > 0.0, "penalty_init must be positive"),
            (self.penalty_max >= self.penalty_init, "penalty_max must be at least penalty_init"),
            (lo.iter().zip(&hi).all(|(a, b)| a < b), "u_min must be below u_max elementwise"),
            (self.n_max >= 1, "n_max must be at least 1"),
            (self.solver_tol > 0.0, "solver_tol must be positive"),
            (self.constraint_tol >= 0.0 && self.rate_tol >= 0.0, "tolerances must be non-negative"),
            (self.dphi_max >= 0.0 && self.dtheta_max >= 0.0, "rate bounds must be non-negative"),
            (self.max_inner_iters >= 1, "max_inner_iters must be at least 1"),
            (
                self.q_u.iter().chain(&self.q_du).chain([&self.q_phi, &self.q_theta]).all(|q| *q >= 0.0),
                "weights must be non-negative",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidConfig(format!("nmpc: {msg}")));
            }
        }
        Ok(())
    }
}
