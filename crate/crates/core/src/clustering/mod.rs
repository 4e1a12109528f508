//! Plane segmentation by scalable sparse subspace clustering.
//!
//! The cloud is lifted to homogeneous coordinates, two disjoint index sets are
//! sampled, every point of the second set is coded as a sparse combination of
//! the first (dictionary) set, and spectral clustering runs on the implicit
//! similarity `|C|ᵀ|C|` through an SVD of the small `n1 x n2` coefficient
//! matrix. Each cluster is then reduced to a plane.

mod kmeans;
mod lasso;
mod pipeline;
mod spectral;

pub use kmeans::{kmeans_rows, KMeansResult};
pub use lasso::{lasso_objective, solve_lasso, sparse_representation, LassoOptions, LassoSolution};
pub use pipeline::{
    homogeneous_embed, matched_accuracy, sample_indices, segment_planes, SegmentationStatus,
};
pub use spectral::{
    degree_vector, max_principal_angle_sin, spectral_embedding, SpectralEmbedding, DEGREE_FLOOR,
};

use nalgebra::{DMatrix, Matrix4xX};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Plane;

/// How a plane is extracted from the members of one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlaneFit {
    /// Total-least-squares fit over every member.
    Tls,
    /// Total-least-squares fit repeated on the members within three robust
    /// standard deviations of the previous fit.
    #[default]
    TrimmedTls,
    /// Plane through three members drawn at random.
    ThreePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    /// Dictionary sampling fraction.
    pub kappa1: f64,
    /// Fraction of points that receive a sparse code and a label.
    pub kappa2: f64,
    /// Sparsity weight of the lasso in the `(1/2)||b - A c||^2 + lambda ||c||_1`
    /// scaling; the solver receives the data weight `1 / lambda`.
    pub lambda: f64,
    /// Elastic-net term `(ridge / 2) ||c||^2` in the same scaling as `lambda`.
    /// Zero gives the plain lasso.
    pub ridge: f64,
    pub n_cluster: usize,
    /// Number of singular triplets extracted before truncating to `n_cluster`.
    pub rank: usize,
    pub seed: u64,
    pub kmeans_restarts: usize,
    pub kmeans_max_iters: usize,
    pub lasso_tol: f64,
    pub lasso_max_iters: usize,
    pub plane_fit: PlaneFit,
    /// Planes closer than this normal angle (degrees) and offset (m) are merged.
    pub merge_angle_deg: f64,
    pub merge_offset: f64,
    /// Clusters whose fitted plane leaves an RMS residual above this (m) are
    /// not turned into planes. `None` keeps every cluster.
    pub max_plane_rms: Option<f64>,
    /// When set, each cluster plane is refitted on every cloud point within
    /// this distance (m), which corrects planes tilted by cluster contamination.
    pub refine_band: Option<f64>,
    /// Refined planes need at least this fraction of the cloud within the band.
    pub min_support_fraction: f64,
    /// The appended homogeneous coordinate is this multiple of the RMS point
    /// norm. Larger values separate the lifted subspaces of distinct planes.
    pub homogeneous_scale: f64,
    /// Scale every embedded point to unit norm before sparse coding.
    pub normalize_columns: bool,
    /// Scale every row of the spectral embedding to unit norm before k-means.
    pub normalize_rows: bool,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            kappa1: 0.1,
            kappa2: 0.2,
            lambda: 0.15,
            ridge: 3.0,
            n_cluster: 10,
            rank: 10,
            seed: 0,
            kmeans_restarts: 5,
            kmeans_max_iters: 100,
            lasso_tol: 1e-6,
            lasso_max_iters: 500,
            plane_fit: PlaneFit::TrimmedTls,
            merge_angle_deg: 1.0,
            merge_offset: 0.05,
            max_plane_rms: Some(0.1),
            refine_band: Some(0.05),
            min_support_fraction: 0.05,
            homogeneous_scale: 4.0,
            normalize_columns: true,
            normalize_rows: true,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.kappa1 > 0.0 && self.kappa1 < self.kappa2 && self.kappa2 < 0.5) {
            return fail(format!(
                "sampling fractions must satisfy 0 < kappa1 < kappa2 < 0.5 (got {}, {})",
                self.kappa1, self.kappa2
            ));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be positive (got {})", self.lambda));
        }
        if !(self.homogeneous_scale > 0.0 && self.homogeneous_scale.is_finite()) {
            return fail(format!("homogeneous_scale must be positive (got {})", self.homogeneous_scale));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return fail(format!("ridge must be non-negative (got {})", self.ridge));
        }
        if self.n_cluster == 0 {
            return fail("n_cluster must be positive".into());
        }
        if self.rank < self.n_cluster {
            return fail(format!(
                "rank ({}) must be at least n_cluster ({})",
                self.rank, self.n_cluster
            ));
        }
        if self.kmeans_restarts == 0 || self.kmeans_max_iters == 0 || self.lasso_max_iters == 0 {
            return fail("iteration counts must be positive".into());
        }
        if !(self.lasso_tol > 0.0) {
            return fail("lasso_tol must be positive".into());
        }
        if self.merge_angle_deg < 0.0 || self.merge_offset < 0.0 {
            return fail("merge thresholds must be non-negative".into());
        }
        if let Some(band) = self.refine_band {
            if !(band > 0.0) {
                return fail("refine_band must be positive".into());
            }
        }
        if !(0.0..1.0).contains(&self.min_support_fraction) {
            return fail("min_support_fraction must lie in [0, 1)".into());
        }
        if let Some(rms) = self.max_plane_rms {
            if !(rms > 0.0) {
                return fail("max_plane_rms must be positive".into());
            }
        }
        Ok(())
    }
}

/// Homogeneous-embedded points, one `(x, y, z, 1)` column per point.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(pub Matrix4xX<f64>);

impl DataMatrix {
    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

/// One sparse column of the coefficient matrix (row indices ascending).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseColumn {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseColumn {
    pub fn from_dense(values: &[f64]) -> Self {
        let mut col = Self::default();
        for (i, &v) in values.iter().enumerate() {
            if v != 0.0 {
                col.indices.push(i);
                col.values.push(v);
            }
        }
        col
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

/// `n1 x n2` coefficient matrix stored column-wise in sparse form.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    rows: usize,
    columns: Vec<SparseColumn>,
}

impl CoefficientMatrix {
    pub fn new(rows: usize, columns: Vec<SparseColumn>) -> Self {
        debug_assert!(columns.iter().all(|c| c.indices.iter().all(|&i| i < rows)));
        Self { rows, columns }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let columns = m
            .column_iter()
            .map(|c| SparseColumn::from_dense(c.as_slice()))
            .collect();
        Self::new(m.nrows(), columns)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.columns.len());
        for (j, col) in self.columns.iter().enumerate() {
            for (i, v) in col.iter() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[SparseColumn] {
        &self.columns
    }

    /// Entrywise absolute value, i.e. `C̃ = |C|`.
    pub fn abs(&self) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| SparseColumn {
                indices: c.indices.clone(),
                values: c.values.iter().map(|v| v.abs()).collect(),
            })
            .collect();
        Self::new(self.rows, columns)
    }

    pub fn is_finite(&self) -> bool {
        self.columns
            .iter()
            .all(|c| c.values.iter().all(|v| v.is_finite()))
    }

    /// Largest per-column fraction of entries with magnitude above `1e-8`.
    pub fn max_column_density(&self) -> f64 {
        if self.rows == 0 {
            return 0.0;
        }
        self.columns
            .iter()
            .map(|c| c.values.iter().filter(|v| v.abs() > 1e-8).count() as f64 / self.rows as f64)
            .fold(0.0, f64::max)
    }
}

/// Output of [`segment_planes`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    /// Cluster index of every sampled point, aligned with `sampled_indices`.
    pub labels: Vec<usize>,
    pub planes: Vec<Plane>,
    /// Indices of the labelled points in the input cloud.
    pub sampled_indices: Vec<usize>,
    #[serde(skip)]
    pub status: SegmentationStatus,
}
