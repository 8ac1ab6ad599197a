//! Subcategorization: spectral clustering of a class's training samples and
//! the per-cluster model windows derived from it.

use image::imageops::{self, FilterType};
use image::RgbImage;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::WindowGeometry;
use crate::channels::{compute_acf, SHRINK};
use crate::error::{Error, Result};

pub const DEFAULT_RESTARTS: usize = 50;
pub const DEFAULT_MIN_CLUSTER_SIZE: usize = 20;
const KMEANS_MAX_ITERATIONS: usize = 300;

/// Geometric description of one annotated object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricFeature {
    pub aspect_ratio: f64,
    pub orientation: Option<f64>,
    pub truncation: Option<f64>,
    pub occlusion: Option<u8>,
}

impl GeometricFeature {
    pub fn aspect_only(aspect_ratio: f64) -> Self {
        GeometricFeature {
            aspect_ratio,
            orientation: None,
            truncation: None,
            occlusion: None,
        }
    }
}

/// Which optional geometric columns were present in every sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeometricMask {
    pub orientation: bool,
    pub truncation: bool,
    pub occlusion: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterSpace {
    Geometric,
    Visual,
    AspectOnly,
}

/// Standardizes every column to zero mean and unit population deviation;
/// constant columns become zero.
pub fn standardize_columns(rows: &mut [Vec<f64>]) {
    let Some(first) = rows.first() else { return };
    let n = rows.len() as f64;
    for c in 0..first.len() {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for r in rows.iter_mut() {
            r[c] = if sd > 1e-12 { (r[c] - mean) / sd } else { 0.0 };
        }
    }
}

/// Standardized geometric rows: aspect ratio, then `(sin, cos)` of the
/// orientation, truncation and occlusion when every sample has them.
pub fn geometric_features(samples: &[GeometricFeature]) -> Result<(Vec<Vec<f64>>, GeometricMask)> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples to describe"));
    }
    for s in samples {
        if !(s.aspect_ratio > 0.0 && s.aspect_ratio.is_finite()) {
            return Err(Error::invalid(format!(
                "aspect ratio {} must be positive",
                s.aspect_ratio
            )));
        }
        if s.truncation.is_some_and(|t| !(0.0..=1.0).contains(&t)) {
            return Err(Error::invalid("truncation outside [0, 1]"));
        }
        if s.occlusion.is_some_and(|o| o > 3) {
            return Err(Error::invalid("occlusion index outside 0..=3"));
        }
    }
    let mask = GeometricMask {
        orientation: samples.iter().all(|s| s.orientation.is_some()),
        truncation: samples.iter().all(|s| s.truncation.is_some()),
        occlusion: samples.iter().all(|s| s.occlusion.is_some()),
    };
    let mut rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let mut r = vec![s.aspect_ratio];
            if mask.orientation {
                let o = s.orientation.unwrap_or_default();
                r.push(o.sin());
                r.push(o.cos());
            }
            if mask.truncation {
                r.push(s.truncation.unwrap_or_default());
            }
            if mask.occlusion {
                r.push(f64::from(s.occlusion.unwrap_or_default()));
            }
            r
        })
        .collect();
    standardize_columns(&mut rows);
    Ok((rows, mask))
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

/// Flattened 10-channel ACF of each crop resized to `width x height`.
pub fn visual_features(crops: &[RgbImage], width: u32, height: u32) -> Result<Vec<Vec<f64>>> {
    if crops.is_empty() {
        return Err(Error::invalid("no samples to describe"));
    }
    crops
        .par_iter()
        .map(|crop| {
            let resized = imageops::resize(crop, width, height, FilterType::Triangle);
            Ok(compute_acf::<f64>(&resized)?.as_slice().to_vec())
        })
        .collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Gaussian affinity `exp(-d^2 / 2 sigma^2)` with zero diagonal; `sigma`
/// defaults to the median pairwise distance.
pub fn gaussian_affinity(points: &[Vec<f64>], sigma: Option<f64>) -> DMatrix<f64> {
    let n = points.len();
    let mut d2 = DMatrix::zeros(n, n);
    let mut dists = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = squared_distance(&points[i], &points[j]);
            d2[(i, j)] = d;
            d2[(j, i)] = d;
            dists.push(d.sqrt());
        }
    }
    let sigma = sigma.unwrap_or_else(|| {
        let m = median(&dists).unwrap_or(0.0);
        if m > 0.0 {
            m
        } else {
            // Mostly duplicates: fall back to the mean of the nonzero distances.
            let nz: Vec<f64> = dists.iter().copied().filter(|&d| d > 0.0).collect();
            if nz.is_empty() {
                1.0
            } else {
                nz.iter().sum::<f64>() / nz.len() as f64
            }
        }
    });
    let denom = 2.0 * sigma * sigma;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (-d2[(i, j)] / denom).exp()
        }
    })
}

fn inverse_sqrt_degrees(affinity: &DMatrix<f64>) -> Vec<f64> {
    affinity
        .row_iter()
        .map(|r| {
            let d: f64 = r.iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect()
}

/// `I - D^-1/2 W D^-1/2`.
pub fn normalized_laplacian(affinity: &DMatrix<f64>) -> DMatrix<f64> {
    let n = affinity.nrows();
    let s = inverse_sqrt_degrees(affinity);
    DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - s[i] * affinity[(i, j)] * s[j]
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn kmeans_once(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let n = points.len();
    // k-means++ seeding.
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
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
        centroids.push(points[idx].clone());
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(squared_distance(p, &centroids[centroids.len() - 1]));
        }
    }

    let dim = points[0].len();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERATIONS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = nearest_centroid(p, &centroids);
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| squared_distance(p, &centroids[l]))
        .sum();
    KMeansResult {
        labels,
        centroids,
        inertia,
    }
}

fn nearest_centroid(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(p, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Lloyd's k-means with k-means++ seeding; the restart with the lowest
/// inertia wins, ties going to the earliest restart.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 || k > points.len() {
        return Err(Error::invalid(format!(
            "k = {k} for {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points
        .iter()
        .any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::invalid(
            "points must be finite and of equal dimension",
        ));
    }
    let runs: Vec<KMeansResult> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            kmeans_once(points, k, &mut rng)
        })
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, r| if r.inertia < best.inertia { r } else { best })
        .expect("at least one restart"))
}

/// Normalized spectral clustering of a precomputed affinity matrix.
pub fn spectral_cluster_affinity(
    affinity: &DMatrix<f64>,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = affinity.nrows();
    if affinity.ncols() != n {
        return Err(Error::invalid("affinity matrix must be square"));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("K = {k} for {n} samples")));
    }
    if affinity.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Numeric(
            "affinity must be finite and nonnegative".into(),
        ));
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let s = inverse_sqrt_degrees(affinity);
    let m = DMatrix::from_fn(n, n, |i, j| s[i] * affinity[(i, j)] * s[j]);
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000).ok_or_else(|| {
        Error::Numeric(format!(
            "eigen-decomposition of the {n}x{n} affinity did not converge"
        ))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    // Largest eigenvalues of the normalized affinity = smallest of the Laplacian.
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let r: Vec<f64> = order[..k]
                .iter()
                .map(|&c| eig.eigenvectors[(i, c)])
                .collect();
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                r.iter().map(|v| v / norm).collect()
            } else {
                r
            }
        })
        .collect();
    Ok(canonical_labels(&kmeans(&rows, k, restarts, seed)?.labels))
}

/// Spectral clustering of feature rows with the median-distance bandwidth.
pub fn spectral_cluster(
    points: &[Vec<f64>],
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::invalid("no points to cluster"));
    }
    let dim = points[0].len();
    if points
        .iter()
        .any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::invalid(
            "points must be finite and of equal dimension",
        ));
    }
    spectral_cluster_affinity(&gaussian_affinity(points, None), k, restarts, seed)
}

/// Relabels clusters in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Adjusted Rand index between two labelings of the same samples.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let a = canonical_labels(a);
    let b = canonical_labels(b);
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(&b) {
        table[x][y] += 1;
    }
    let c2 = |n: u64| (n * n.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&n| c2(n)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(a.len() as u64);
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcatParams {
    pub k: usize,
    pub space: ClusterSpace,
    pub base_height: usize,
    /// Fixed window width; otherwise derived from the cluster's median aspect ratio.
    pub fixed_width: Option<usize>,
    pub padding: usize,
    pub min_cluster_size: usize,
    pub restarts: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subcategory {
    pub id: usize,
    pub size: usize,
    pub median_aspect: f64,
    pub window: WindowGeometry,
    /// Sample whose summed distance to its cluster mates is smallest.
    pub medoid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcategoryLayout {
    pub requested_k: usize,
    pub space: ClusterSpace,
    pub assignments: Vec<usize>,
    pub subcategories: Vec<Subcategory>,
    /// Clusters folded into a neighbour because they were too small.
    pub merged_clusters: usize,
}

impl SubcategoryLayout {
    pub fn k(&self) -> usize {
        self.subcategories.len()
    }
}

/// Width for `base_height` at `aspect`, rounded to a whole number of cells.
pub fn window_width(base_height: usize, aspect: f64) -> usize {
    let w = (base_height as f64 * aspect / SHRINK as f64).round() as usize * SHRINK;
    w.max(8)
}

fn centroid(points: &[Vec<f64>], members: &[usize]) -> Vec<f64> {
    let dim = points[0].len();
    let mut c = vec![0.0; dim];
    for &i in members {
        for (s, v) in c.iter_mut().zip(&points[i]) {
            *s += v;
        }
    }
    c.iter().map(|s| s / members.len() as f64).collect()
}

/// Folds clusters smaller than `min_size` into the cluster with the nearest
/// centroid, smallest first. Returns the number of merges.
fn merge_small_clusters(points: &[Vec<f64>], labels: &mut [usize], min_size: usize) -> usize {
    let mut merges = 0;
    loop {
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(i);
        }
        if groups.len() <= 1 {
            return merges;
        }
        let (&small, members) = groups
            .iter()
            .min_by_key(|(&l, m)| (m.len(), l))
            .expect("nonempty");
        if members.len() >= min_size {
            return merges;
        }
        let c = centroid(points, members);
        let target = groups
            .iter()
            .filter(|(&l, _)| l != small)
            .map(|(&l, m)| (l, squared_distance(&c, &centroid(points, m))))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("another cluster")
            .0;
        for &i in members {
            labels[i] = target;
        }
        merges += 1;
    }
}

/// Clusters a class's samples and derives one model window per cluster.
///
/// `visual` rows are required for [`ClusterSpace::Visual`].
pub fn subcategorize(
    samples: &[GeometricFeature],
    visual: Option<&[Vec<f64>]>,
    params: &SubcatParams,
) -> Result<SubcategoryLayout> {
    if params.k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if params.base_height < 8 {
        return Err(Error::invalid("base height must be at least 8 px"));
    }
    let (points, _) = geometric_features(samples)?;
    let points = match params.space {
        ClusterSpace::Geometric => points,
        ClusterSpace::AspectOnly => points.into_iter().map(|r| vec![r[0]]).collect(),
        ClusterSpace::Visual => {
            let v =
                visual.ok_or_else(|| Error::invalid("visual clustering needs visual features"))?;
            if v.len() != samples.len() {
                return Err(Error::invalid("visual rows do not match the samples"));
            }
            v.to_vec()
        }
    };
    let k = params.k.min(points.len());
    if k < params.k {
        log::warn!(
            "K = {} exceeds the {} samples; using K = {k}",
            params.k,
            points.len()
        );
    }
    let mut labels = spectral_cluster(&points, k, params.restarts, params.seed)?;
    let merged = merge_small_clusters(&points, &mut labels, params.min_cluster_size);
    if merged > 0 {
        log::warn!("{merged} undersized clusters merged into their nearest neighbour");
    }
    let labels = canonical_labels(&labels);
    let k_final = labels.iter().max().map_or(0, |m| m + 1);
    let mut subcategories = Vec::with_capacity(k_final);
    for id in 0..k_final {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == id).collect();
        let aspects: Vec<f64> = members.iter().map(|&i| samples[i].aspect_ratio).collect();
        let median_aspect = median(&aspects).expect("cluster is nonempty");
        let width = params
            .fixed_width
            .unwrap_or_else(|| window_width(params.base_height, median_aspect));
        let medoid = *members
            .iter()
            .min_by(|&&a, &&b| {
                let da: f64 = members
                    .iter()
                    .map(|&j| squared_distance(&points[a], &points[j]).sqrt())
                    .sum();
                let db: f64 = members
                    .iter()
                    .map(|&j| squared_distance(&points[b], &points[j]).sqrt())
                    .sum();
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .expect("cluster is nonempty");
        subcategories.push(Subcategory {
            id,
            size: members.len(),
            median_aspect,
            window: WindowGeometry::new(width, params.base_height, params.padding)?,
            medoid,
        });
    }
    Ok(SubcategoryLayout {
        requested_k: params.k,
        space: params.space,
        assignments: labels,
        subcategories,
        merged_clusters: merged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_heights() {
        assert_eq!(median(&[20.0, 30.0, 100.0]), Some(30.0));
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn orientation_wraps() {
        let a = GeometricFeature {
            aspect_ratio: 1.0,
            orientation: Some(std::f64::consts::PI),
            truncation: None,
            occlusion: None,
        };
        let b = GeometricFeature {
            orientation: Some(-std::f64::consts::PI),
            ..a
        };
        let c = GeometricFeature {
            aspect_ratio: 2.0,
            orientation: Some(0.3),
            ..a
        };
        let (rows, mask) = geometric_features(&[a, b, c]).unwrap();
        assert!(mask.orientation && !mask.truncation);
        for (x, y) in rows[0].iter().zip(&rows[1]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_deviation_columns() {
        let s: Vec<GeometricFeature> = (0..7)
            .map(|i| GeometricFeature {
                aspect_ratio: 0.5 + i as f64 * 0.37,
                orientation: Some(i as f64),
                truncation: Some(0.1),
                occlusion: Some((i % 3) as u8),
            })
            .collect();
        let (rows, _) = geometric_features(&s).unwrap();
        for c in 0..rows[0].len() {
            let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            let mean = col.iter().sum::<f64>() / 7.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 7.0;
            assert!(mean.abs() < 1e-12);
            assert!(var < 1e-24 || (var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_geometry() {
        assert!(geometric_features(&[GeometricFeature::aspect_only(0.0)]).is_err());
        assert!(geometric_features(&[]).is_err());
    }

    #[test]
    fn k_one_is_single_cluster() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        assert_eq!(spectral_cluster(&pts, 1, 5, 0).unwrap(), vec![0; 10]);
        assert!(spectral_cluster(&pts, 11, 5, 0).is_err());
    }

    #[test]
    fn ari_bounds() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.1);
    }

    #[test]
    fn window_widths() {
        assert_eq!(window_width(52, 1.0), 52);
        assert_eq!(window_width(56, 0.5), 28);
        assert_eq!(window_width(52, 1.5), 80);
        assert_eq!(window_width(20, 0.01), 8);
    }

    #[test]
    fn small_clusters_merge() {
        let mut s: Vec<GeometricFeature> = (0..30)
            .map(|i| GeometricFeature::aspect_only(1.0 + i as f64 * 1e-3))
            .collect();
        s.extend((0..3).map(|i| GeometricFeature::aspect_only(3.0 + i as f64 * 1e-3)));
        let params = SubcatParams {
            k: 2,
            space: ClusterSpace::AspectOnly,
            base_height: 40,
            fixed_width: None,
            padding: 4,
            min_cluster_size: 20,
            restarts: 10,
            seed: 1,
        };
        let layout = subcategorize(&s, None, &params).unwrap();
        assert_eq!(layout.k(), 1);
        assert_eq!(layout.merged_clusters, 1);
        assert_eq!(layout.subcategories[0].size, 33);
    }
}
