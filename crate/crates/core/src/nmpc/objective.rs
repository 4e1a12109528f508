//! Single-shooting NMPC objective with exterior penalties and its adjoint gradient.
//!
//! Decision vector layout: `u = [T_0, phi_d_0, theta_d_0, T_1, ...]`, length `3N`.

use crate::dynamics::{step_array, ModelParams, INPUT_DIM, STATE_DIM};
use crate::geometry::Plane;

use super::entropy::AdaptiveWeights;

/// A collision constraint in the leveled body frame: the vehicle stays on the
/// side of the plane it currently occupies, at least `d_s` from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SidedPlane {
    /// Unit normal oriented from the plane toward the vehicle.
    n: [f64; 3],
    /// Distance from the current vehicle position to the plane.
    offset: f64,
}

impl SidedPlane {
    pub(crate) fn new(plane: &Plane) -> Self {
        let n = plane.normal();
        // Origin signed distance is zeta; flip so it is non-negative.
        let s = if plane.zeta() < 0.0 { -1.0 } else { 1.0 };
        Self {
            n: [s * n.x, s * n.y, s * n.z],
            offset: s * plane.zeta(),
        }
    }

    /// Oriented distance of displacement `d`. Negative once the plane is crossed.
    #[inline]
    pub(crate) fn distance(&self, d: &[f64; 3]) -> f64 {
        self.n[0] * d[0] + self.n[1] * d[1] + self.n[2] * d[2] + self.offset
    }
}

/// Every fixed quantity of one NMPC problem instance.
#[derive(Debug, Clone)]
pub struct Objective {
    pub(crate) x0: [f64; STATE_DIM],
    /// Reference state per horizon step (`x_r` for `x_{j+1}`).
    pub(crate) x_ref: Vec<[f64; STATE_DIM]>,
    pub(crate) u_prev: [f64; INPUT_DIM],
    pub(crate) u_ref: [f64; INPUT_DIM],
    pub(crate) q_x: [f64; STATE_DIM],
    pub(crate) q_u: [f64; INPUT_DIM],
    pub(crate) q_du: [f64; INPUT_DIM],
    pub(crate) planes: Vec<SidedPlane>,
    pub(crate) d_s: f64,
    pub(crate) dphi_max: f64,
    pub(crate) dtheta_max: f64,
    pub(crate) penalty: f64,
    pub(crate) model: ModelParams,
    pub(crate) horizon: usize,
}

/// Breakdown of constraint violations along a rollout.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Violations {
    /// `max_{i,j} max(0, d_s - dist_i(p_{j+1} - p_0))` in metres.
    pub collision: f64,
    /// `max_j max(0, |Δφ_d| - Δφ_max, |Δθ_d| - Δθ_max)` in radians.
    pub rate: f64,
}

/// Objective value split by term; `total` is their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostTerms {
    pub tracking: f64,
    pub actuation: f64,
    pub smoothness: f64,
    pub collision_penalty: f64,
    pub rate_penalty: f64,
    pub total: f64,
}

impl Objective {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x0: [f64; STATE_DIM],
        x_ref: &[[f64; STATE_DIM]],
        u_prev: [f64; INPUT_DIM],
        weights: &AdaptiveWeights,
        planes: &[Plane],
        config: &super::NmpcConfig,
        model: &ModelParams,
        penalty: f64,
    ) -> Self {
        let n = config.horizon;
        let x_ref = match x_ref.len() {
            0 => vec![x0; n],
            1 => vec![x_ref[0]; n],
            _ => (0..n).map(|j| x_ref[j.min(x_ref.len() - 1)]).collect(),
        };
        Self {
            x0,
            x_ref,
            u_prev,
            u_ref: [model.g, 0.0, 0.0],
            q_x: weights.q,
            q_u: config.effective_q_u(),
            q_du: config.effective_q_du(),
            planes: planes.iter().map(SidedPlane::new).collect(),
            d_s: config.d_s,
            dphi_max: config.dphi_max,
            dtheta_max: config.dtheta_max,
            penalty,
            model: *model,
            horizon: n,
        }
    }

    pub fn dim(&self) -> usize {
        INPUT_DIM * self.horizon
    }

    pub fn set_penalty(&mut self, c: f64) {
        self.penalty = c;
    }

    fn input(u: &[f64], j: usize) -> [f64; INPUT_DIM] {
        [u[3 * j], u[3 * j + 1], u[3 * j + 2]]
    }

    fn previous(&self, u: &[f64], j: usize) -> [f64; INPUT_DIM] {
        if j == 0 {
            self.u_prev
        } else {
            Self::input(u, j - 1)
        }
    }

    /// Predicted states `x_1 ..= x_N`.
    pub fn rollout(&self, u: &[f64]) -> Vec<[f64; STATE_DIM]> {
        let mut x = self.x0;
        (0..self.horizon)
            .map(|j| {
                x = step_array(&x, &Self::input(u, j), &self.model);
                x
            })
            .collect()
    }

    fn displacement(&self, x: &[f64; STATE_DIM]) -> [f64; 3] {
        [x[0] - self.x0[0], x[1] - self.x0[1], x[2] - self.x0[2]]
    }

    pub fn terms(&self, u: &[f64]) -> CostTerms {
        let traj = self.rollout(u);
        let mut t = CostTerms::default();
        let half_c = 0.5 * self.penalty;
        for (j, x) in traj.iter().enumerate() {
            let r = &self.x_ref[j];
            t.tracking += (0..STATE_DIM).map(|i| self.q_x[i] * (x[i] - r[i]).powi(2)).sum::<f64>();
            let uj = Self::input(u, j);
            let up = self.previous(u, j);
            for i in 0..INPUT_DIM {
                t.actuation += self.q_u[i] * (uj[i] - self.u_ref[i]).powi(2);
                t.smoothness += self.q_du[i] * (uj[i] - up[i]).powi(2);
            }
            let d = self.displacement(x);
            for plane in &self.planes {
                let deficit = (self.d_s - plane.distance(&d)).max(0.0);
                t.collision_penalty += half_c * deficit * deficit;
            }
            let ephi = ((uj[1] - up[1]).abs() - self.dphi_max).max(0.0);
            let etheta = ((uj[2] - up[2]).abs() - self.dtheta_max).max(0.0);
            t.rate_penalty += half_c * (ephi * ephi + etheta * etheta);
        }
        t.total = t.tracking + t.actuation + t.smoothness + t.collision_penalty + t.rate_penalty;
        t
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        self.terms(u).total
    }

    /// Objective value and its exact gradient by reverse accumulation through
    /// the Euler rollout.
    pub fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dim());
        debug_assert_eq!(grad.len(), self.dim());
        let n = self.horizon;
        let mut states = Vec::with_capacity(n + 1);
        states.push(self.x0);
        for j in 0..n {
            let next = step_array(&states[j], &Self::input(u, j), &self.model);
            states.push(next);
        }

        let c = self.penalty;
        let mut value = 0.0;
        grad.iter_mut().for_each(|g| *g = 0.0);

        // Input-only terms.
        for j in 0..n {
            let uj = Self::input(u, j);
            let up = self.previous(u, j);
            for i in 0..INPUT_DIM {
                let e = uj[i] - self.u_ref[i];
                value += self.q_u[i] * e * e;
                grad[3 * j + i] += 2.0 * self.q_u[i] * e;
                let du = uj[i] - up[i];
                value += self.q_du[i] * du * du;
                grad[3 * j + i] += 2.0 * self.q_du[i] * du;
                if j > 0 {
                    grad[3 * (j - 1) + i] -= 2.0 * self.q_du[i] * du;
                }
            }
            for (i, bound) in [(1, self.dphi_max), (2, self.dtheta_max)] {
                let du = uj[i] - up[i];
                let excess = du.abs() - bound;
                if excess > 0.0 {
                    value += 0.5 * c * excess * excess;
                    let g = c * excess * du.signum();
                    grad[3 * j + i] += g;
                    if j > 0 {
                        grad[3 * (j - 1) + i] -= g;
                    }
                }
            }
        }

        // State terms with the adjoint recursion λ_j = ∂ℓ/∂x_j + F_xᵀ λ_{j+1}.
        let mut lambda = [0.0; STATE_DIM];
        for j in (1..=n).rev() {
            let x = &states[j];
            let r = &self.x_ref[j - 1];
            let mut dl = [0.0; STATE_DIM];
            for i in 0..STATE_DIM {
                let e = x[i] - r[i];
                value += self.q_x[i] * e * e;
                dl[i] = 2.0 * self.q_x[i] * e;
            }
            let d = self.displacement(x);
            for plane in &self.planes {
                let deficit = self.d_s - plane.distance(&d);
                if deficit > 0.0 {
                    value += 0.5 * c * deficit * deficit;
                    for k in 0..3 {
                        dl[k] -= c * deficit * plane.n[k];
                    }
                }
            }
            // `lambda` still holds λ_{j+1} here.
            if j < n {
                let xp = &states[j];
                let up = Self::input(u, j);
                let back = self.state_vjp(xp, &up, &lambda);
                for i in 0..STATE_DIM {
                    dl[i] += back[i];
                }
            }
            lambda = dl;
            // Input u_{j-1} produced x_j.
            let g = self.input_vjp(&states[j - 1], &lambda);
            for i in 0..INPUT_DIM {
                grad[3 * (j - 1) + i] += g[i];
            }
        }
        value
    }

    /// `(∂x⁺/∂x)ᵀ λ` for the Euler step at `(x, u)`.
    fn state_vjp(&self, x: &[f64; STATE_DIM], u: &[f64; INPUT_DIM], l: &[f64; STATE_DIM]) -> [f64; STATE_DIM] {
        let m = &self.model;
        let ts = m.ts;
        let (sphi, cphi) = x[6].sin_cos();
        let (stheta, ctheta) = x[7].sin_cos();
        let t = u[0];
        let mut out = *l;
        // ṗ = v
        out[3] += ts * l[0];
        out[4] += ts * l[1];
        out[5] += ts * l[2];
        // Drag.
        out[3] -= ts * m.drag[0] * l[3];
        out[4] -= ts * m.drag[1] * l[4];
        out[5] -= ts * m.drag[2] * l[5];
        // Attitude coupling into the accelerations.
        out[6] += ts * t * (-stheta * sphi * l[3] - cphi * l[4] - sphi * ctheta * l[5]);
        out[7] += ts * t * (ctheta * cphi * l[3] - cphi * stheta * l[5]);
        // First-order attitude lags.
        out[6] -= ts / m.tau_phi * l[6];
        out[7] -= ts / m.tau_theta * l[7];
        out
    }

    /// `(∂x⁺/∂u)ᵀ λ` for the Euler step from `x`.
    fn input_vjp(&self, x: &[f64; STATE_DIM], l: &[f64; STATE_DIM]) -> [f64; INPUT_DIM] {
        let m = &self.model;
        let ts = m.ts;
        let (sphi, cphi) = x[6].sin_cos();
        let (stheta, ctheta) = x[7].sin_cos();
        [
            ts * (stheta * cphi * l[3] - sphi * l[4] + cphi * ctheta * l[5]),
            ts * m.k_phi / m.tau_phi * l[6],
            ts * m.k_theta / m.tau_theta * l[7],
        ]
    }

    pub fn violations(&self, u: &[f64]) -> Violations {
        let traj = self.rollout(u);
        let mut v = Violations::default();
        for (j, x) in traj.iter().enumerate() {
            let d = self.displacement(x);
            for plane in &self.planes {
                v.collision = v.collision.max(self.d_s - plane.distance(&d));
            }
            let uj = Self::input(u, j);
            let up = self.previous(u, j);
            v.rate = v
                .rate
                .max((uj[1] - up[1]).abs() - self.dphi_max)
                .max((uj[2] - up[2]).abs() - self.dtheta_max);
        }
        v.collision = v.collision.max(0.0);
        v.rate = v.rate.max(0.0);
        v
    }
}
