//! Per-column sparse coding against the dictionary columns.
//!
//! Each sampled point `b` is coded by solving
//! `min_c ||c||_1 + (lambda / 2) ||b - A c||^2 + (ridge / 2) ||c||^2` with accelerated proximal
//! gradient (FISTA) using backtracking and gradient-based momentum restart.
//! `A` only has four rows, so one iteration costs `O(n1)`.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use rayon::prelude::*;

use super::{CoefficientMatrix, DataMatrix, SparseColumn};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Weight of the quadratic data term.
    pub lambda: f64,
    /// Weight of the optional quadratic penalty on the code (elastic net).
    pub ridge: f64,
    pub tol: f64,
    pub max_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Proximal-gradient fixed-point residual at the returned point.
    pub residual: f64,
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn apply(dict: &[Vector4<f64>], c: &[f64]) -> Vector4<f64> {
    dict.iter()
        .zip(c)
        .filter(|(_, &ci)| ci != 0.0)
        .fold(Vector4::zeros(), |acc, (a, &ci)| acc + a * ci)
}

/// `L * ||c - prox(c - grad / L)||` with `prox` the soft threshold at `1 / L`.
fn fixed_point_residual(c: &[f64], grad: &[f64], step_l: f64) -> f64 {
    let inv = 1.0 / step_l;
    step_l
        * c.iter()
            .zip(grad)
            .map(|(&ci, &gi)| {
                let d = ci - soft_threshold(ci - gi * inv, inv);
                d * d
            })
            .sum::<f64>()
            .sqrt()
}

/// `lambda * lambda_max(A Aᵀ)`: Lipschitz constant of the data term's gradient.
pub(crate) fn lipschitz_constant(dict: &[Vector4<f64>], lambda: f64) -> f64 {
    let gram = dict
        .iter()
        .fold(Matrix4::zeros(), |acc: Matrix4<f64>, a| acc + a * a.transpose());
    let top = SymmetricEigen::new(gram).eigenvalues.max();
    (lambda * top).max(f64::MIN_POSITIVE)
}

/// Objective `||c||_1 + (lambda / 2) ||b - A c||^2 + (ridge / 2) ||c||^2`.
pub fn lasso_objective(dict: &[Vector4<f64>], target: &Vector4<f64>, opts: &LassoOptions, c: &[f64]) -> f64 {
    let r = apply(dict, c) - target;
    c.iter().map(|v| v.abs() + 0.5 * opts.ridge * v * v).sum::<f64>()
        + 0.5 * opts.lambda * r.norm_squared()
}

fn smooth_value(lambda: f64, ridge: f64, r: &Vector4<f64>, c: &[f64]) -> f64 {
    0.5 * lambda * r.norm_squared() + 0.5 * ridge * c.iter().map(|v| v * v).sum::<f64>()
}

/// Solves one column. `lipschitz` is the Lipschitz constant of the smooth
/// part's gradient; it seeds the backtracking step and scales the reported
/// residual.
///
/// With `ridge > 0` the problem is solved through its four-dimensional dual,
/// which is smooth and strongly concave; otherwise by FISTA on the primal.
pub fn solve_lasso(
    dict: &[Vector4<f64>],
    target: &Vector4<f64>,
    opts: &LassoOptions,
    lipschitz: Option<f64>,
) -> std::result::Result<LassoSolution, LassoSolution> {
    let step_l = lipschitz.unwrap_or_else(|| lipschitz_constant(dict, opts.lambda) + opts.ridge);
    if opts.ridge > 0.0 {
        solve_dual_newton(dict, target, opts, step_l)
    } else {
        solve_fista(dict, target, opts, step_l)
    }
}

/// Damped semismooth Newton ascent on the dual
/// `D(z) = bᵀz - ||z||² / (2 lambda) - Σ_i (|a_iᵀz| - 1)₊² / (2 ridge)`,
/// whose maximizer gives the primal code `c_i = soft(a_iᵀz, 1) / ridge`.
fn solve_dual_newton(
    dict: &[Vector4<f64>],
    target: &Vector4<f64>,
    opts: &LassoOptions,
    step_l: f64,
) -> std::result::Result<LassoSolution, LassoSolution> {
    let (lambda, ridge) = (opts.lambda, opts.ridge);
    let primal = |z: &Vector4<f64>| -> Vec<f64> {
        dict.iter().map(|a| soft_threshold(a.dot(z), 1.0) / ridge).collect()
    };
    let dual_value = |z: &Vector4<f64>| -> f64 {
        let excess: f64 = dict
            .iter()
            .map(|a| (a.dot(z).abs() - 1.0).max(0.0).powi(2))
            .sum();
        target.dot(z) - z.norm_squared() / (2.0 * lambda) - excess / (2.0 * ridge)
    };

    let mut z = lambda * target;
    let mut value = dual_value(&z);
    let mut c = primal(&z);
    let mut residual = f64::INFINITY;
    for iter in 1..=opts.max_iters {
        let mut grad = target - z / lambda;
        let mut hess = -Matrix4::identity() / lambda;
        for (a, &ci) in dict.iter().zip(&c) {
            if ci != 0.0 {
                grad -= a * ci;
                hess -= a * a.transpose() / ridge;
            }
        }

        let r = target - apply(dict, &c);
        let g: Vec<f64> = dict
            .iter()
            .zip(&c)
            .map(|(a, &ci)| -lambda * a.dot(&r) + ridge * ci)
            .collect();
        residual = fixed_point_residual(&c, &g, step_l);
        if residual <= opts.tol {
            return Ok(LassoSolution {
                coefficients: c,
                iterations: iter,
                residual,
            });
        }

        // The Hessian is negative definite, bounded by -I / lambda.
        let Some(direction) = (-hess).cholesky().map(|ch| ch.solve(&grad)) else {
            break;
        };
        let slope = grad.dot(&direction);
        let mut t = 1.0;
        loop {
            let trial = z + direction * t;
            let trial_value = dual_value(&trial);
            if trial_value >= value + 1e-4 * t * slope || t < 1e-12 {
                z = trial;
                value = trial_value;
                break;
            }
            t *= 0.5;
        }
        c = primal(&z);
    }
    Err(LassoSolution {
        coefficients: c,
        iterations: opts.max_iters,
        residual,
    })
}

fn solve_fista(
    dict: &[Vector4<f64>],
    target: &Vector4<f64>,
    opts: &LassoOptions,
    mut step_l: f64,
) -> std::result::Result<LassoSolution, LassoSolution> {
    let n = dict.len();
    let lambda = opts.lambda;
    let ridge = opts.ridge;

    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut t = 1.0f64;
    let mut residual = f64::INFINITY;

    let gradient = |point_residual: &Vector4<f64>, point: &[f64], out: &mut [f64]| {
        for ((g, a), &c) in out.iter_mut().zip(dict).zip(point) {
            *g = lambda * a.dot(point_residual) + ridge * c;
        }
    };

    for iter in 1..=opts.max_iters {
        let r_y = apply(dict, &y) - target;
        let f_y = smooth_value(lambda, ridge, &r_y, &y);
        gradient(&r_y, &y, &mut grad);

        let r_new = loop {
            let inv = 1.0 / step_l;
            for i in 0..n {
                x_new[i] = soft_threshold(y[i] - grad[i] * inv, inv);
            }
            let r_new = apply(dict, &x_new) - target;
            let f_new = smooth_value(lambda, ridge, &r_new, &x_new);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for i in 0..n {
                let d = x_new[i] - y[i];
                lin += grad[i] * d;
                sq += d * d;
            }
            if f_new <= f_y + lin + 0.5 * step_l * sq + 1e-14 * (1.0 + f_y.abs()) {
                break r_new;
            }
            step_l *= 2.0;
        };

        let mapping: f64 = step_l
            * y.iter()
                .zip(&x_new)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();

        // Restart momentum when it points against the proximal step.
        let mut restart_dot = 0.0;
        for i in 0..n {
            restart_dot += (y[i] - x_new[i]) * (x_new[i] - x[i]);
        }
        if restart_dot > 0.0 {
            t = 1.0;
            y.copy_from_slice(&x_new);
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            for i in 0..n {
                y[i] = x_new[i] + beta * (x_new[i] - x[i]);
            }
            t = t_next;
        }
        std::mem::swap(&mut x, &mut x_new);

        if mapping <= opts.tol || iter == opts.max_iters {
            // Confirm stationarity at the iterate itself, not the extrapolated point.
            gradient(&r_new, &x, &mut grad);
            residual = fixed_point_residual(&x, &grad, step_l);
            if residual <= opts.tol {
                return Ok(LassoSolution {
                    coefficients: x,
                    iterations: iter,
                    residual,
                });
            }
        }
    }
    Err(LassoSolution {
        coefficients: x,
        iterations: opts.max_iters,
        residual,
    })
}

/// Codes every column `j` in `i2` against the dictionary columns `i1` of `b`.
///
/// Columns are independent and solved in parallel; the result does not depend
/// on scheduling.
pub fn sparse_representation(
    b: &DataMatrix,
    i1: &[usize],
    i2: &[usize],
    opts: &LassoOptions,
) -> Result<CoefficientMatrix> {
    if i1.is_empty() || i2.is_empty() {
        return Err(Error::EmptyInput("index sets"));
    }
    if !b.0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("data matrix"));
    }
    let dict: Vec<Vector4<f64>> = i1.iter().map(|&i| b.0.column(i).into_owned()).collect();
    let lipschitz = lipschitz_constant(&dict, opts.lambda) + opts.ridge;

    let columns: Result<Vec<SparseColumn>> = i2
        .par_iter()
        .enumerate()
        .map(|(col, &j)| {
            let target: Vector4<f64> = b.0.column(j).into_owned();
            match solve_lasso(&dict, &target, opts, Some(lipschitz)) {
                Ok(sol) => Ok(SparseColumn::from_dense(&sol.coefficients)),
                Err(sol) => Err(Error::LassoNotConverged {
                    column: col,
                    iterations: sol.iterations,
                    residual: sol.residual,
                }),
            }
        })
        .collect();
    let c = CoefficientMatrix::new(i1.len(), columns?);
    let density = c.max_column_density();
    if density > 0.5 {
        log::warn!("coefficient matrix is dense: max column density {density:.2}");
    }
    Ok(c)
}
