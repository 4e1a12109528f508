use nalgebra::Matrix4xX;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    degree_vector, kmeans_rows, spectral_embedding, sparse_representation, ClusteringConfig,
    DataMatrix, LassoOptions, PlaneFit, SegmentationResult,
};
use crate::error::{Error, Result};
use crate::geometry::{fit_plane_three_points, fit_plane_tls, Plane, Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SegmentationStatus {
    #[default]
    Ok,
    /// The coefficient matrix had fewer than K usable singular directions.
    RankDeficient,
    /// No cluster produced a usable plane.
    NoPlanes,
}

pub fn homogeneous_embed(cloud: &PointCloud) -> Result<DataMatrix> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    let m = Matrix4xX::from_fn(cloud.len(), |r, c| {
        let p = &cloud.points[c];
        match r {
            0 => p.x,
            1 => p.y,
            2 => p.z,
            _ => 1.0,
        }
    });
    Ok(DataMatrix(m))
}

/// `scale` times the RMS distance of the points from the sensor origin, so the
/// embedding does not depend on the length unit.
fn homogeneous_constant(cloud: &PointCloud, scale: f64) -> f64 {
    let mean_sq = cloud.points.iter().map(|p| p.coords.norm_squared()).sum::<f64>() / cloud.len() as f64;
    let rms = mean_sq.sqrt();
    if rms > 0.0 {
        scale * rms
    } else {
        1.0
    }
}

fn sample_size(fraction: f64, n: usize) -> usize {
    // The small offset keeps exact products such as 0.29 * 100 from rounding down.
    (fraction * n as f64 + 1e-9).floor() as usize
}

/// Draws the dictionary set `I1` and the coded set `I2`: disjoint, uniform
/// without replacement, sizes `floor(kappa1 n)` and `floor(kappa2 n)`.
pub fn sample_indices(n: usize, config: &ClusteringConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let n1 = sample_size(config.kappa1, n);
    let n2 = sample_size(config.kappa2, n);
    if n1 < 3 {
        return Err(Error::InsufficientPoints {
            required: (3.0 / config.kappa1).ceil() as usize,
            actual: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let picked = index::sample(&mut rng, n, n1 + n2).into_vec();
    let (i1, i2) = picked.split_at(n1);
    Ok((i1.to_vec(), i2.to_vec()))
}

/// Full pipeline: embed, sample, sparse-code, spectral embedding, k-means,
/// then one plane per cluster.
pub fn segment_planes(cloud: &PointCloud, config: &ClusteringConfig) -> Result<SegmentationResult> {
    config.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    if !cloud.is_finite() {
        return Err(Error::NonFinite("point cloud"));
    }
    let mut b = homogeneous_embed(cloud)?;
    b.0.row_mut(3).fill(homogeneous_constant(cloud, config.homogeneous_scale));
    if config.normalize_columns {
        for mut col in b.0.column_iter_mut() {
            col.normalize_mut();
        }
    }
    let (i1, i2) = sample_indices(cloud.len(), config)?;
    if config.n_cluster > i2.len() {
        return Err(Error::InvalidClusterCount {
            k: config.n_cluster,
            rows: i2.len(),
        });
    }

    let opts = LassoOptions {
        lambda: 1.0 / config.lambda,
        ridge: config.ridge / config.lambda,
        tol: config.lasso_tol,
        max_iters: config.lasso_max_iters,
    };
    let c_abs = sparse_representation(&b, &i1, &i2, &opts)?.abs();
    let degrees = degree_vector(&c_abs);
    let embedding = spectral_embedding(&c_abs, &degrees, config.n_cluster, config.rank)?;
    let mut vectors = embedding.vectors;
    if config.normalize_rows {
        for mut row in vectors.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
    }
    let clusters = kmeans_rows(
        &vectors,
        config.n_cluster,
        config.seed,
        config.kmeans_restarts,
        config.kmeans_max_iters,
    )?;

    let mut members: Vec<Vec<Point3>> = vec![Vec::new(); config.n_cluster];
    for (&idx, &label) in i2.iter().zip(&clusters.labels) {
        members[label].push(cloud.points[idx]);
    }
    let planes = extract_planes(members, cloud, config);

    let status = if planes.is_empty() {
        log::warn!("segmentation produced no planes");
        SegmentationStatus::NoPlanes
    } else if embedding.rank_deficient {
        SegmentationStatus::RankDeficient
    } else {
        SegmentationStatus::Ok
    };
    Ok(SegmentationResult {
        labels: clusters.labels,
        planes,
        sampled_indices: i2,
        status,
    })
}

/// Robust TLS: least-trimmed-squares concentration steps on the closest half
/// of the points, then a refit on every point within three robust standard
/// deviations (median absolute deviation) of that plane. Returns the plane and
/// its inliers.
fn fit_trimmed_tls(points: &[Point3]) -> Option<(Plane, Vec<Point3>)> {
    const MAD_TO_STD: f64 = 1.4826;
    const MIN_BAND: f64 = 1e-6;
    const MAX_STEPS: usize = 20;
    let mut plane = fit_plane_tls(points).ok()?;
    let h = (points.len() / 2).max(3);
    let mut order: Vec<usize> = (0..points.len()).collect();
    let mut subset: Vec<usize> = Vec::new();
    for _ in 0..MAX_STEPS {
        order.sort_by(|&a, &b| plane.distance(&points[a]).total_cmp(&plane.distance(&points[b])));
        let mut next = order[..h].to_vec();
        next.sort_unstable();
        if next == subset {
            break;
        }
        let pts: Vec<Point3> = next.iter().map(|&i| points[i]).collect();
        plane = fit_plane_tls(&pts).ok()?;
        subset = next;
    }
    let mut residuals: Vec<f64> = points.iter().map(|p| plane.distance(p)).collect();
    residuals.sort_by(f64::total_cmp);
    let band = (3.0 * MAD_TO_STD * residuals[residuals.len() / 2]).max(MIN_BAND);
    let inliers: Vec<Point3> = points.iter().copied().filter(|p| plane.distance(p) <= band).collect();
    let refit = fit_plane_tls(&inliers).ok()?;
    Some((refit, inliers))
}

/// Plane for one cluster together with the members that support it.
fn fit_cluster(points: &[Point3], mode: PlaneFit, rng: &mut ChaCha8Rng) -> Option<(Plane, Vec<Point3>)> {
    match mode {
        PlaneFit::Tls => fit_plane_tls(points).ok().map(|p| (p, points.to_vec())),
        PlaneFit::TrimmedTls => fit_trimmed_tls(points),
        PlaneFit::ThreePoint => {
            if points.len() < 3 {
                return None;
            }
            let mut idx: Vec<usize> = (0..points.len()).collect();
            for _ in 0..16 {
                idx.shuffle(rng);
                if let Ok(p) = fit_plane_three_points(&points[idx[0]], &points[idx[1]], &points[idx[2]]) {
                    return Some((p, points.to_vec()));
                }
            }
            None
        }
    }
}

/// Re-estimates a cluster plane from every cloud point within `band` of it.
/// Returns `None` when fewer than `min_support` points are that close.
fn refine_on_cloud(plane: Plane, cloud: &PointCloud, band: f64, min_support: usize) -> Option<(Plane, Vec<Point3>)> {
    const STEPS: usize = 3;
    let mut current = plane;
    let mut support = Vec::new();
    for _ in 0..STEPS {
        let inliers: Vec<Point3> = cloud.points.iter().copied().filter(|p| current.distance(p) <= band).collect();
        if inliers.len() < min_support.max(3) {
            return None;
        }
        let (next, kept) = fit_trimmed_tls(&inliers)?;
        current = next;
        support = kept;
    }
    Some((current, support))
}

fn extract_planes(members: Vec<Vec<Point3>>, cloud: &PointCloud, config: &ClusteringConfig) -> Vec<Plane> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9));
    let mut fitted: Vec<(Plane, Vec<Point3>)> = members
        .into_iter()
        .filter_map(|pts| {
            let (plane, support) = fit_cluster(&pts, config.plane_fit, &mut rng)?;
            if let Some(limit) = config.max_plane_rms {
                let rms = plane.rms_residual(&support);
                if rms > limit {
                    log::debug!("dropping cluster of {} points with rms {rms:.3} m", pts.len());
                    return None;
                }
            }
            let (plane, support) = match config.refine_band {
                Some(band) => {
                    let min_support = (config.min_support_fraction * cloud.len() as f64).ceil() as usize;
                    let refined = refine_on_cloud(plane, cloud, band, min_support);
                    if refined.is_none() {
                        log::debug!("dropping plane with too little support in the cloud");
                    }
                    refined?
                }
                None => (plane, support),
            };
            Some((plane.canonical(), support))
        })
        .collect();

    let max_angle = config.merge_angle_deg.to_radians();
    'merge: loop {
        for a in 0..fitted.len() {
            for b in (a + 1)..fitted.len() {
                let (pa, pb) = (fitted[a].0, fitted[b].0);
                let pb_aligned = if pa.normal().dot(&pb.normal()) < 0.0 { pb.flipped() } else { pb };
                if pa.normal_angle(&pb) <= max_angle
                    && (pa.zeta() - pb_aligned.zeta()).abs() <= config.merge_offset
                {
                    let (_, pts_b) = fitted.remove(b);
                    let larger_is_a = fitted[a].1.len() >= pts_b.len();
                    fitted[a].1.extend(pts_b);
                    let merged = match config.plane_fit {
                        PlaneFit::Tls => fit_plane_tls(&fitted[a].1).ok(),
                        PlaneFit::TrimmedTls => fit_trimmed_tls(&fitted[a].1).map(|(p, _)| p),
                        PlaneFit::ThreePoint => Some(if larger_is_a { pa } else { pb }),
                    };
                    if let Some(p) = merged {
                        fitted[a].0 = p.canonical();
                    }
                    continue 'merge;
                }
            }
        }
        break;
    }
    let mut planes: Vec<Plane> = fitted.into_iter().map(|(p, _)| p).collect();
    if let Some(band) = config.refine_band {
        let min_support = (config.min_support_fraction * cloud.len() as f64).ceil() as usize;
        planes = drop_shadowed(planes, cloud, band, min_support);
    }
    planes
}

/// Assigns every cloud point within `band` to its nearest plane and drops
/// planes left with fewer than `min_support` points. A plane that only grazes
/// another plane's points along a thin strip loses them to that plane.
fn drop_shadowed(planes: Vec<Plane>, cloud: &PointCloud, band: f64, min_support: usize) -> Vec<Plane> {
    let mut counts = vec![0usize; planes.len()];
    for p in &cloud.points {
        let nearest = planes
            .iter()
            .enumerate()
            .map(|(i, plane)| (i, plane.distance(p)))
            .filter(|&(_, d)| d <= band)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, _)) = nearest {
            counts[i] += 1;
        }
    }
    planes
        .into_iter()
        .zip(counts)
        .filter(|&(_, n)| n >= min_support)
        .map(|(p, _)| p)
        .collect()
}

/// Fraction of points whose predicted cluster maps to their true class under
/// the best one-to-one matching of predicted labels to classes.
pub fn matched_accuracy(truth: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(truth.len(), labels.len());
    if truth.is_empty() {
        return 1.0;
    }
    let classes = truth.iter().max().unwrap() + 1;
    let clusters = labels.iter().max().unwrap() + 1;
    let mut counts = vec![vec![0usize; classes]; clusters];
    for (&t, &l) in truth.iter().zip(labels) {
        counts[l][t] += 1;
    }
    // Assignment by DP over subsets of classes; clusters and classes are small.
    assert!(classes <= 16, "too many classes for exact matching");
    let full = 1usize << classes;
    let mut best = vec![i64::MIN; full];
    best[0] = 0;
    for row in &counts {
        let mut next = best.clone();
        for mask in 0..full {
            if best[mask] == i64::MIN {
                continue;
            }
            for (c, &count) in row.iter().enumerate() {
                if mask & (1 << c) == 0 {
                    let m2 = mask | (1 << c);
                    next[m2] = next[m2].max(best[mask] + count as i64);
                }
            }
        }
        best = next;
    }
    *best.iter().max().unwrap() as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embed_examples() {
        let cloud = PointCloud::body(vec![Point3::new(1.0, 2.0, 3.0)]);
        let b = homogeneous_embed(&cloud).unwrap();
        assert_eq!(b.0.column(0).as_slice(), &[1.0, 2.0, 3.0, 1.0]);

        let pts: Vec<_> = (0..7).map(|i| Point3::new(i as f64, -(i as f64), 0.5 * i as f64)).collect();
        let b = homogeneous_embed(&PointCloud::body(pts.clone())).unwrap();
        assert_eq!(b.0.shape(), (4, 7));
        for (c, p) in pts.iter().enumerate() {
            assert_eq!(b.0.fixed_view::<3, 1>(0, c).into_owned(), p.coords);
            assert_eq!(b.0[(3, c)], 1.0);
        }
        assert!(matches!(homogeneous_embed(&PointCloud::default()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn sample_sizes_and_disjointness() {
        let cfg = ClusteringConfig::default();
        let (i1, i2) = sample_indices(1000, &cfg).unwrap();
        assert_eq!((i1.len(), i2.len()), (100, 200));
        assert!(i1.iter().all(|i| !i2.contains(i)));
        let (a, b) = sample_indices(30, &cfg).unwrap();
        assert_eq!((a.len(), b.len()), (3, 6));
        assert_eq!(sample_indices(1000, &cfg).unwrap(), (i1, i2));
        assert!(matches!(
            sample_indices(29, &cfg),
            Err(Error::InsufficientPoints { required: 30, actual: 29 })
        ));
    }

    #[test]
    fn single_plane_with_one_cluster() {
        let pts: Vec<_> = (0..400)
            .map(|i| Point3::new((i % 20) as f64 * 0.1 - 1.0, (i / 20) as f64 * 0.1 - 1.0, 0.0))
            .collect();
        let cfg = ClusteringConfig {
            n_cluster: 1,
            rank: 1,
            ..Default::default()
        };
        let res = segment_planes(&PointCloud::body(pts), &cfg).unwrap();
        assert_eq!(res.planes.len(), 1);
        let p = res.planes[0];
        assert!(p.normal().z.abs() > 1.0 - 1e-9 && p.zeta().abs() < 1e-9, "{p:?}");
        assert_eq!(res.labels.len(), res.sampled_indices.len());
    }

    #[test]
    fn accuracy_is_permutation_invariant() {
        let truth = [0, 0, 1, 1, 2, 2, 2];
        let labels = [2, 2, 0, 0, 1, 1, 0];
        let permuted: Vec<usize> = labels.iter().map(|&l| (l + 1) % 3).collect();
        let a = matched_accuracy(&truth, &labels);
        assert!((a - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(a, matched_accuracy(&truth, &permuted));
        // More clusters than classes: unmatched clusters count as errors.
        assert!((matched_accuracy(&[0, 0, 1, 1], &[0, 1, 2, 3]) - 0.5).abs() < 1e-12);
    }
}
