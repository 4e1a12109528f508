//! Spectral embedding on the implicit similarity `W = C̃ᵀ C̃`.
//!
//! The top eigenvectors of `D^{-1/2} W D^{-1/2}` are the top right singular
//! vectors of `C̃ D^{-1/2}` (an `n1 x n2` matrix), so neither `W` nor any other
//! `n2 x n2` matrix is ever formed. Degrees come from `n2` scalar products
//! against `η = Σ_j c̃_j`.

use nalgebra::{DMatrix, SymmetricEigen};

use super::CoefficientMatrix;
use crate::error::{Error, Result};

/// Degrees below this value are clamped before forming `D^{-1/2}`.
pub const DEGREE_FLOOR: f64 = 1e-12;

/// Relative squared-singular-value cutoff below which a direction counts as
/// outside the numerical range of `C̃ D^{-1/2}`.
const RANK_TOL: f64 = 1e-12;

/// Row sums of `C̃ᵀ C̃` computed as `d_j = c̃_j · η`.
pub fn degree_vector(c_abs: &CoefficientMatrix) -> Vec<f64> {
    let mut eta = vec![0.0; c_abs.nrows()];
    for col in c_abs.columns() {
        for (i, v) in col.iter() {
            eta[i] += v;
        }
    }
    let degrees: Vec<f64> = c_abs
        .columns()
        .iter()
        .map(|col| col.iter().map(|(i, v)| v * eta[i]).sum())
        .collect();
    let isolated = degrees.iter().filter(|&&d| d <= 0.0).count();
    if isolated > 0 {
        log::debug!("{isolated} isolated points (zero degree)");
    }
    degrees
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    /// `n2 x k'` matrix with orthonormal columns, `k' <= K`.
    pub vectors: DMatrix<f64>,
    /// Singular values of `C̃ D^{-1/2}` matching the columns of `vectors`.
    pub singular_values: Vec<f64>,
    /// Set when fewer than `K` directions have non-negligible singular values.
    pub rank_deficient: bool,
}

/// Top-`k` right singular vectors of `C̃ D^{-1/2}`, extracting `rank` triplets.
pub fn spectral_embedding(
    c_abs: &CoefficientMatrix,
    degrees: &[f64],
    k: usize,
    rank: usize,
) -> Result<SpectralEmbedding> {
    let n2 = c_abs.ncols();
    if degrees.len() != n2 {
        return Err(Error::InvalidConfig(format!(
            "degree vector has length {} but there are {n2} columns",
            degrees.len()
        )));
    }
    if k == 0 || rank < k {
        return Err(Error::InvalidConfig(format!("need 0 < K <= rank (K={k}, rank={rank})")));
    }
    if c_abs.columns().iter().any(|c| c.values.iter().any(|&v| v < 0.0)) {
        return Err(Error::InvalidConfig("coefficient matrix must be entrywise non-negative".into()));
    }

    // Only dictionary rows that are actually used contribute to the range.
    let mut compact = vec![usize::MAX; c_abs.nrows()];
    let mut m = 0;
    for col in c_abs.columns() {
        for &i in &col.indices {
            if compact[i] == usize::MAX {
                compact[i] = m;
                m += 1;
            }
        }
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| 1.0 / d.max(DEGREE_FLOOR).sqrt()).collect();
    let (compact, inv_sqrt) = (&compact, &inv_sqrt);
    let scaled = |j: usize| {
        let col = &c_abs.columns()[j];
        col.iter().map(move |(i, v)| (compact[i], v * inv_sqrt[j]))
    };

    if m == 0 {
        return Ok(SpectralEmbedding {
            vectors: DMatrix::zeros(n2, 0),
            singular_values: Vec::new(),
            rank_deficient: true,
        });
    }

    // Small Gram matrix M Mᵀ with M = C̃ D^{-1/2} restricted to used rows.
    let mut gram = DMatrix::<f64>::zeros(m, m);
    for j in 0..n2 {
        let entries: Vec<(usize, f64)> = scaled(j).collect();
        for &(a, va) in &entries {
            for &(b, vb) in &entries {
                gram[(a, b)] += va * vb;
            }
        }
    }
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let usable: Vec<usize> = order
        .iter()
        .copied()
        .take(rank)
        .filter(|&i| top > 0.0 && eig.eigenvalues[i] > RANK_TOL * top)
        .collect();
    let r = usable.len();

    // P = Mᵀ U Σ^{-1}
    let mut p = DMatrix::<f64>::zeros(n2, r);
    for (col, &e) in usable.iter().enumerate() {
        let u = eig.eigenvectors.column(e);
        let sigma = eig.eigenvalues[e].sqrt();
        for j in 0..n2 {
            p[(j, col)] = scaled(j).map(|(i, v)| v * u[i]).sum::<f64>() / sigma;
        }
    }

    // Rayleigh-Ritz on span(P): restores orthonormality lost to rounding in
    // the small singular values without changing the subspace.
    let (vectors, singular_values) = if r > 0 {
        let q = p.qr().q();
        let mut mq = DMatrix::<f64>::zeros(m, r);
        for j in 0..n2 {
            for (i, v) in scaled(j) {
                for c in 0..r {
                    mq[(i, c)] += v * q[(j, c)];
                }
            }
        }
        let small = SymmetricEigen::new(mq.transpose() * &mq);
        let mut ritz: Vec<usize> = (0..r).collect();
        ritz.sort_by(|&a, &b| small.eigenvalues[b].total_cmp(&small.eigenvalues[a]));
        let keep = r.min(k);
        let mut rot = DMatrix::<f64>::zeros(r, keep);
        let mut sv = Vec::with_capacity(keep);
        for (c, &idx) in ritz.iter().take(keep).enumerate() {
            rot.set_column(c, &small.eigenvectors.column(idx));
            sv.push(small.eigenvalues[idx].max(0.0).sqrt());
        }
        (q * rot, sv)
    } else {
        (DMatrix::zeros(n2, 0), Vec::new())
    };

    let rank_deficient = vectors.ncols() < k;
    if rank_deficient {
        log::warn!(
            "coefficient matrix has numerical rank {} < K = {k}",
            vectors.ncols()
        );
    }
    Ok(SpectralEmbedding {
        vectors,
        singular_values,
        rank_deficient,
    })
}

/// Explicit `D^{-1/2} C̃ᵀ C̃ D^{-1/2}`; test oracle only.
#[cfg(test)]
pub(crate) fn explicit_normalized_similarity(c_abs: &DMatrix<f64>) -> DMatrix<f64> {
    let w = c_abs.transpose() * c_abs;
    let d = nalgebra::DVector::from_iterator(
        w.nrows(),
        w.row_iter().map(|r| 1.0 / r.sum().max(DEGREE_FLOOR).sqrt()),
    );
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| d[i] * w[(i, j)] * d[j])
}

/// `sin` of the largest principal angle between the column spans of two
/// matrices with orthonormal columns: `||(I - A Aᵀ) B||_2`.
pub fn max_principal_angle_sin(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let proj = b - a * (a.transpose() * b);
    proj.singular_values().max()
}
