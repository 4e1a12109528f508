//! Lloyd's k-means on matrix rows with k-means++ seeding and restarts.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: DMatrix<f64>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
}

fn sq_dist(v: &DMatrix<f64>, row: usize, c: &DMatrix<f64>, k: usize) -> f64 {
    (0..v.ncols()).map(|d| (v[(row, d)] - c[(k, d)]).powi(2)).sum()
}

fn plus_plus_init(v: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (n, dim) = v.shape();
    let mut centroids = DMatrix::zeros(k, dim);
    let first = rng.random_range(0..n);
    centroids.set_row(0, &v.row(first));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(v, i, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.set_row(c, &v.row(pick));
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(v, i, &centroids, c));
        }
    }
    centroids
}

fn lloyd(v: &DMatrix<f64>, mut centroids: DMatrix<f64>, max_iters: usize) -> KMeansResult {
    let (n, dim) = v.shape();
    let k = centroids.nrows();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iters {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let best = (0..k)
                .map(|c| (c, sq_dist(v, i, &centroids, c)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(c, _)| c)
                .unwrap_or(0);
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = DMatrix::<f64>::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for d in 0..dim {
                sums[(l, d)] += v[(i, d)];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..dim {
                    centroids[(c, d)] = sums[(c, d)] / counts[c] as f64;
                }
            } else {
                // Empty cluster: move it onto the point worst served right now.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(v, a, &centroids, labels[a])
                            .total_cmp(&sq_dist(v, b, &centroids, labels[b]))
                    })
                    .unwrap_or(0);
                centroids.set_row(c, &v.row(far));
            }
        }
    }
    let inertia = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(v, i, &centroids, l))
        .sum();
    KMeansResult {
        labels,
        centroids,
        inertia,
    }
}

/// Clusters the rows of `v` into `k` groups; best of `restarts` runs by inertia.
pub fn kmeans_rows(
    v: &DMatrix<f64>,
    k: usize,
    seed: u64,
    restarts: usize,
    max_iters: usize,
) -> Result<KMeansResult> {
    let n = v.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidClusterCount { k, rows: n });
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("spectral embedding"));
    }
    if k == 1 || v.ncols() == 0 {
        return Ok(KMeansResult {
            labels: vec![0; n],
            centroids: DMatrix::zeros(k, v.ncols()),
            inertia: 0.0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let init = plus_plus_init(v, k, &mut rng);
        let run = lloyd(v, init, max_iters);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::matched_accuracy;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn recovers_well_separated_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let centers = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let k = centers.len();
        let mut truth = Vec::new();
        let mut rows = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..10 {
                truth.push(c);
                rows.extend(center.iter().map(|x| x + noise.sample(&mut rng)));
            }
        }
        let v = DMatrix::from_row_slice(truth.len(), 3, &rows);
        let res = kmeans_rows(&v, k, 99, 5, 100).unwrap();
        assert_eq!(matched_accuracy(&truth, &res.labels), 1.0);
    }

    #[test]
    fn single_cluster_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v = DMatrix::from_fn(50, 3, |_, _| rng.random_range(-1.0..1.0));
        assert!(kmeans_rows(&v, 1, 0, 5, 100).unwrap().labels.iter().all(|&l| l == 0));
        let a = kmeans_rows(&v, 4, 123, 5, 100).unwrap();
        let b = kmeans_rows(&v, 4, 123, 5, 100).unwrap();
        assert_eq!(a, b);
        assert!(a.labels.iter().all(|&l| l < 4));
    }

    #[test]
    fn too_many_clusters_is_an_error() {
        let v = DMatrix::from_element(3, 2, 1.0);
        assert!(matches!(
            kmeans_rows(&v, 4, 0, 1, 10),
            Err(Error::InvalidClusterCount { k: 4, rows: 3 })
        ));
    }
}
