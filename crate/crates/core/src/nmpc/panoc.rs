//! PANOC for smooth objectives over a box.
//!
//! Each iteration takes the forward-backward step `ū = Π(u − γ∇f(u))` and
//! blends it with an L-BFGS direction on the fixed-point residual `r = u − ū`.
//! A blend is accepted only when it decreases the forward-backward envelope
//! `φ_γ(u) = f(u) − ∇f(u)ᵀr + ‖r‖²/(2γ)`. The pure projected step always
//! satisfies that test. `γ` shrinks whenever the local Lipschitz estimate is
//! violated, so no global constant is needed.

use std::collections::VecDeque;

use super::objective::Objective;

/// Smooth function with gradient, evaluated on flat slices.
pub trait SmoothObjective {
    fn value(&self, u: &[f64]) -> f64;
    fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64;
}

impl SmoothObjective for Objective {
    fn value(&self, u: &[f64]) -> f64 {
        Objective::value(self, u)
    }

    fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        Objective::value_and_gradient(self, u, grad)
    }
}

/// Closure-backed objective, convenient for tests and small problems.
pub struct FnObjective<F, G> {
    pub f: F,
    pub grad: G,
}

impl<F, G> SmoothObjective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    fn value(&self, u: &[f64]) -> f64 {
        (self.f)(u)
    }

    fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        (self.grad)(u, grad);
        (self.f)(u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        Self { lower, upper }
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn project(&self, u: &mut [f64]) {
        for ((v, lo), hi) in u.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((v, lo), hi)| *lo <= *v && *v <= *hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanocOptions {
    /// Bound on `‖u − Π(u − γ∇f(u))‖ / γ`.
    pub tol: f64,
    pub max_iters: usize,
    pub lbfgs_memory: usize,
}

impl Default for PanocOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iters: 500,
            lbfgs_memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanocResult {
    /// Always inside the box.
    pub u: Vec<f64>,
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Forward-backward quantities at one point for a fixed `γ`.
#[derive(Debug, Clone)]
struct Point {
    u: Vec<f64>,
    f: f64,
    /// `Π(u − γ∇f(u))`.
    bar: Vec<f64>,
    f_bar: f64,
    /// `u − bar`.
    r: Vec<f64>,
    fbe: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Lbfgs {
    memory: usize,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    rho: VecDeque<f64>,
}

impl Lbfgs {
    fn new(memory: usize) -> Self {
        Self {
            memory,
            s: VecDeque::new(),
            y: VecDeque::new(),
            rho: VecDeque::new(),
        }
    }

    fn reset(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    /// Stores the pair unless it fails the cautious curvature test.
    fn update(&mut self, s: Vec<f64>, y: Vec<f64>, r_norm: f64) {
        if self.memory == 0 {
            return;
        }
        let sy = dot(&s, &y);
        let ss = dot(&s, &s);
        if !(sy > 1e-12 * ss * r_norm.max(1e-12)) || !sy.is_finite() {
            return;
        }
        if self.s.len() == self.memory {
            self.s.pop_front();
            self.y.pop_front();
            self.rho.pop_front();
        }
        self.s.push_back(s);
        self.y.push_back(y);
        self.rho.push_back(1.0 / sy);
    }

    /// Two-loop recursion: returns `H q`.
    fn apply(&self, q: &[f64]) -> Vec<f64> {
        let mut q = q.to_vec();
        let m = self.s.len();
        if m == 0 {
            return q;
        }
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            alpha[i] = self.rho[i] * dot(&self.s[i], &q);
            for (qk, yk) in q.iter_mut().zip(&self.y[i]) {
                *qk -= alpha[i] * yk;
            }
        }
        let last = m - 1;
        let h0 = dot(&self.s[last], &self.y[last]) / dot(&self.y[last], &self.y[last]);
        q.iter_mut().for_each(|v| *v *= h0);
        for i in 0..m {
            let beta = self.rho[i] * dot(&self.y[i], &q);
            for (qk, sk) in q.iter_mut().zip(&self.s[i]) {
                *qk += (alpha[i] - beta) * sk;
            }
        }
        q
    }
}

struct Solver<'a, O: SmoothObjective> {
    objective: &'a O,
    bounds: &'a BoxSet,
    gamma: f64,
    lipschitz: f64,
}

/// Safety margin between `γ` and `1/L`.
const GAMMA_FACTOR: f64 = 0.95;
/// Envelope sufficient-decrease fraction of the guaranteed projected-step decrease.
const BETA: f64 = 0.5;
const MAX_TAU_HALVINGS: usize = 12;

impl<O: SmoothObjective> Solver<'_, O> {
    /// Evaluates `u`, shrinking `γ` until the quadratic upper bound holds at
    /// the projected point. Returns whether `γ` changed.
    fn evaluate(&mut self, u: Vec<f64>) -> (Point, bool) {
        let n = u.len();
        let mut grad = vec![0.0; n];
        let f = self.objective.value_and_gradient(&u, &mut grad);
        let mut changed = false;
        loop {
            let mut bar: Vec<f64> = u.iter().zip(&grad).map(|(x, g)| x - self.gamma * g).collect();
            self.bounds.project(&mut bar);
            let r: Vec<f64> = u.iter().zip(&bar).map(|(x, b)| x - b).collect();
            let f_bar = self.objective.value(&bar);
            let rr = dot(&r, &r);
            let gr = dot(&grad, &r);
            let bound = f - gr + 0.5 * self.lipschitz * rr + 1e-12 * (1.0 + f.abs());
            if f_bar <= bound || rr == 0.0 || self.gamma < 1e-14 || !f.is_finite() {
                let fbe = f - gr + rr / (2.0 * self.gamma);
                return (
                    Point {
                        u,
                        f,
                        bar,
                        f_bar,
                        r,
                        fbe,
                    },
                    changed,
                );
            }
            self.lipschitz *= 2.0;
            self.gamma = GAMMA_FACTOR / self.lipschitz;
            changed = true;
        }
    }

    fn residual(&self, p: &Point) -> f64 {
        norm(&p.r) / self.gamma
    }
}

/// Initial Lipschitz estimate from a small finite difference of the gradient.
fn estimate_lipschitz<O: SmoothObjective>(objective: &O, u: &[f64]) -> f64 {
    let n = u.len();
    let mut g0 = vec![0.0; n];
    objective.value_and_gradient(u, &mut g0);
    let delta: Vec<f64> = u.iter().map(|v| (1e-6 * v.abs()).max(1e-6)).collect();
    let shifted: Vec<f64> = u.iter().zip(&delta).map(|(v, d)| v + d).collect();
    let mut g1 = vec![0.0; n];
    objective.value_and_gradient(&shifted, &mut g1);
    let dg: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| a - b).collect();
    let l = norm(&dg) / norm(&delta);
    if l.is_finite() && l > 1e-8 {
        l
    } else {
        1e-8
    }
}

/// Minimizes `objective` over `bounds` from `u0`. The returned point is the
/// forward-backward step of the best iterate and therefore lies in the box.
pub fn panoc_minimize<O: SmoothObjective>(
    objective: &O,
    bounds: &BoxSet,
    u0: &[f64],
    options: &PanocOptions,
) -> PanocResult {
    let mut start = u0.to_vec();
    bounds.project(&mut start);
    let lipschitz = estimate_lipschitz(objective, &start);
    let mut solver = Solver {
        objective,
        bounds,
        gamma: GAMMA_FACTOR / lipschitz,
        lipschitz,
    };
    let mut lbfgs = Lbfgs::new(options.lbfgs_memory);
    let (mut cur, _) = solver.evaluate(start);
    let mut best = (f64::INFINITY, cur.bar.clone(), cur.f_bar);

    let mut iterations = 0;
    while iterations < options.max_iters {
        iterations += 1;
        let res = solver.residual(&cur);
        if res < best.0 {
            best = (res, cur.bar.clone(), cur.f_bar);
        }
        if res <= options.tol {
            // Confirm stationarity at the feasible point that is returned.
            let (at_bar, changed) = solver.evaluate(cur.bar.clone());
            let res_bar = solver.residual(&at_bar);
            if res_bar <= options.tol {
                return PanocResult {
                    u: at_bar.u,
                    value: at_bar.f,
                    residual: res_bar,
                    iterations,
                    converged: true,
                };
            }
            if changed {
                lbfgs.reset();
            }
            cur = at_bar;
            continue;
        }

        let direction: Vec<f64> = lbfgs.apply(&cur.r).into_iter().map(|v| -v).collect();
        let sigma = BETA * (1.0 - solver.gamma * solver.lipschitz) / (2.0 * solver.gamma);
        let threshold = cur.fbe - sigma * dot(&cur.r, &cur.r);
        let gamma_before = solver.gamma;

        let mut tau = 1.0;
        let mut next = None;
        for _ in 0..=MAX_TAU_HALVINGS {
            let candidate: Vec<f64> = cur
                .u
                .iter()
                .zip(&cur.r)
                .zip(&direction)
                .map(|((u, r), d)| u - (1.0 - tau) * r + tau * d)
                .collect();
            let (p, changed) = solver.evaluate(candidate);
            if changed {
                next = Some(p);
                break;
            }
            if p.fbe <= threshold && p.fbe.is_finite() {
                next = Some(p);
                break;
            }
            tau *= 0.5;
        }
        let next = match next {
            Some(p) if solver.gamma == gamma_before => p,
            _ if solver.gamma != gamma_before => {
                // Envelope values at different step sizes are not comparable.
                lbfgs.reset();
                let (re, _) = solver.evaluate(cur.u.clone());
                cur = re;
                continue;
            }
            _ => {
                let (p, changed) = solver.evaluate(cur.bar.clone());
                if changed {
                    lbfgs.reset();
                    cur = p;
                    continue;
                }
                p
            }
        };

        let s: Vec<f64> = next.u.iter().zip(&cur.u).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.r.iter().zip(&cur.r).map(|(a, b)| a - b).collect();
        lbfgs.update(s, y, norm(&next.r));
        cur = next;
    }

    let res = solver.residual(&cur);
    if res < best.0 {
        best = (res, cur.bar.clone(), cur.f_bar);
    }
    PanocResult {
        u: best.1,
        value: best.2,
        residual: best.0,
        iterations,
        converged: false,
    }
}
