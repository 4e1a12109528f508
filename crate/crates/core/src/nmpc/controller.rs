use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, MavState, ModelParams, INPUT_DIM, STATE_DIM};
use crate::geometry::Plane;

use super::entropy::{entropy_weights, AdaptiveWeights, VarianceWindow, TRACKED_AXES};
use super::objective::{Objective, Violations};
use super::panoc::{panoc_minimize, BoxSet, PanocOptions};
use super::NmpcConfig;

/// Reference state with zero attitude.
pub fn reference_state(p: [f64; 3], v: [f64; 3]) -> [f64; STATE_DIM] {
    [p[0], p[1], p[2], v[0], v[1], v[2], 0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmpcSolution {
    pub u_star: Vec<ControlInput>,
    pub cost: f64,
    /// Largest collision deficit over planes and horizon steps (m).
    pub max_constraint_violation: f64,
    /// Largest per-step attitude-command change beyond its bound (rad).
    pub max_rate_violation: f64,
    pub inner_iterations: usize,
    pub penalty_rounds: usize,
    pub final_penalty: f64,
    /// Collision violation after each penalty round.
    pub violation_history: Vec<f64>,
    /// Inner solver reached tolerance and constraints are within tolerance.
    pub converged: bool,
    #[serde(skip)]
    pub solve_time: Duration,
}

impl NmpcSolution {
    pub fn first(&self) -> ControlInput {
        self.u_star[0]
    }
}

fn input_box(config: &NmpcConfig) -> BoxSet {
    let lo = config.u_min.to_array();
    let hi = config.u_max.to_array();
    let n = config.horizon;
    BoxSet::new(
        (0..n).flat_map(|_| lo).collect(),
        (0..n).flat_map(|_| hi).collect(),
    )
}

fn flatten(inputs: &[ControlInput]) -> Vec<f64> {
    inputs.iter().flat_map(|u| u.to_array()).collect()
}

/// Solves one NMPC instance with an increasing exterior-penalty schedule.
///
/// `x_ref` holds one reference state per horizon step; a single entry is
/// used for the whole horizon. `warm_start` must have `horizon` entries or
/// be `None` (hover inputs).
#[allow(clippy::too_many_arguments)]
pub fn solve(
    x_est: &MavState,
    x_ref: &[[f64; STATE_DIM]],
    u_prev: &ControlInput,
    weights: &AdaptiveWeights,
    planes: &[Plane],
    warm_start: Option<&[ControlInput]>,
    config: &NmpcConfig,
    model: &ModelParams,
) -> NmpcSolution {
    let started = Instant::now();
    let n = config.horizon;
    let mut objective = Objective::new(
        x_est.to_array(),
        x_ref,
        u_prev.to_array(),
        weights,
        planes,
        config,
        model,
        config.penalty_init,
    );
    let bounds = input_box(config);
    let mut u = match warm_start {
        Some(w) if w.len() == n => flatten(w),
        _ => flatten(&vec![ControlInput::hover(model.g); n]),
    };
    bounds.project(&mut u);

    let options = PanocOptions {
        tol: config.solver_tol,
        max_iters: config.max_inner_iters,
        lbfgs_memory: config.lbfgs_memory,
    };
    let mut penalty = config.penalty_init;
    let mut inner_iterations = 0;
    let mut history = Vec::new();
    let mut rounds = 0;
    let (violations, inner_converged) = loop {
        objective.set_penalty(penalty);
        let result = panoc_minimize(&objective, &bounds, &u, &options);
        rounds += 1;
        inner_iterations += result.iterations;
        u = result.u;
        let v = objective.violations(&u);
        history.push(v.collision);
        let satisfied = v.collision <= config.constraint_tol && v.rate <= config.rate_tol;
        if satisfied || penalty * config.penalty_factor > config.penalty_max {
            break (v, result.converged);
        }
        penalty *= config.penalty_factor;
    };
    let Violations { collision, rate } = violations;
    NmpcSolution {
        u_star: u.chunks(INPUT_DIM).map(ControlInput::from_slice).collect(),
        cost: objective.value(&u),
        max_constraint_violation: collision,
        max_rate_violation: rate,
        inner_iterations,
        penalty_rounds: rounds,
        final_penalty: penalty,
        violation_history: history,
        converged: inner_converged && collision <= config.constraint_tol && rate <= config.rate_tol,
        solve_time: started.elapsed(),
    }
}

/// How the state-tracking weights are chosen each tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Entropy of the recent variance window per axis.
    #[default]
    Adaptive,
    /// Constant `ln(n_max)` on every tracked axis.
    Fixed,
}

/// Mutable controller memory carried between ticks.
#[derive(Debug, Clone)]
pub struct ControllerState {
    pub window: VarianceWindow,
    pub u_prev: ControlInput,
    pub warm_start: Option<Vec<ControlInput>>,
    pub mode: WeightMode,
    pub weights: AdaptiveWeights,
}

impl ControllerState {
    pub fn new(config: &NmpcConfig, model: &ModelParams, mode: WeightMode) -> Self {
        Self {
            window: VarianceWindow::new(config.n_max),
            u_prev: ControlInput::hover(model.g),
            warm_start: None,
            mode,
            weights: AdaptiveWeights::fixed(config.n_max, config.q_phi, config.q_theta),
        }
    }
}

/// One 20 Hz tick: updates the variance window, recomputes weights, solves,
/// and returns the first input to hold over the next sampling period.
/// Non-converged solutions are still applied; the flag is in the solution.
pub fn control_step(
    x_est: &MavState,
    variances: [f64; TRACKED_AXES],
    x_ref: &[[f64; STATE_DIM]],
    planes: &[Plane],
    state: &mut ControllerState,
    config: &NmpcConfig,
    model: &ModelParams,
) -> (ControlInput, NmpcSolution) {
    state.window.push(variances);
    state.weights = match state.mode {
        WeightMode::Adaptive => entropy_weights(&state.window, config.q_phi, config.q_theta),
        WeightMode::Fixed => AdaptiveWeights::fixed(config.n_max, config.q_phi, config.q_theta),
    };
    let solution = solve(
        x_est,
        x_ref,
        &state.u_prev,
        &state.weights,
        planes,
        state.warm_start.as_deref(),
        config,
        model,
    );
    if !solution.converged {
        log::debug!(
            "nmpc not converged: violation {:.3} m, rate {:.4} rad, {} rounds",
            solution.max_constraint_violation,
            solution.max_rate_violation,
            solution.penalty_rounds
        );
    }
    let u = solution.first();
    let mut shifted = solution.u_star[1..].to_vec();
    shifted.push(*solution.u_star.last().expect("horizon is at least one step"));
    state.warm_start = Some(shifted);
    state.u_prev = u;
    (u, solution)
}
