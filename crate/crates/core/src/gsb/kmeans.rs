//! k-means over normalized shapes.
//!
//! Seeding is D^2-weighted (k-means++). Small inputs refine with full-batch
//! Lloyd iterations, larger ones with mini-batch centroid updates followed by
//! a final full assignment. All reductions run in a fixed order so a given
//! seed always yields bit-identical centroids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Codebook, CodebookMeta, ShapeRecord, VqError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iterations: usize,
    /// Datasets up to this many points use full-batch updates.
    pub batch_size: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, max_iterations: 100, batch_size: 4096, seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// `k x dim`, row-major.
    pub centroids: Vec<f64>,
    pub assignments: Vec<u32>,
    pub inertia: f64,
    /// Inertia after each full-batch iteration (empty in mini-batch mode).
    pub inertia_history: Vec<f64>,
    pub iterations: u32,
    pub padded: bool,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest row; ties go to the lowest index.
#[inline]
fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn seed_centroids(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, bool) {
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(point(rng.random_range(0..n)));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(point(i), &centroids[..dim])).collect();
    let mut padded = false;
    while centroids.len() < k * dim {
        let total: f64 = dist.iter().sum();
        if total <= 0.0 {
            // every point already coincides with a centroid
            padded = true;
            let last = centroids[centroids.len() - dim..].to_vec();
            while centroids.len() < k * dim {
                centroids.extend_from_slice(&last);
            }
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = n;
        for (i, &d) in dist.iter().enumerate() {
            if d > 0.0 {
                pick = i;
                if target < d {
                    break;
                }
                target -= d;
            }
        }
        let start = centroids.len();
        centroids.extend_from_slice(point(pick));
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(point(i), &centroids[start..start + dim]));
        }
    }
    (centroids, padded)
}

fn assign_all(points: &[f64], centroids: &[f64], dim: usize, out: &mut [u32]) -> f64 {
    let mut inertia = 0.0;
    for (p, slot) in points.chunks_exact(dim).zip(out.iter_mut()) {
        let (k, d) = nearest(p, centroids, dim);
        *slot = k as u32;
        inertia += d;
    }
    inertia
}

/// Clusters `points` (row-major, `dim` columns) into `config.k` centroids.
pub fn kmeans(points: &[f64], dim: usize, config: &KMeansConfig) -> Result<KMeansResult, VqError> {
    if config.k == 0 {
        return Err(VqError::EmptyCodebook);
    }
    if dim == 0 || points.is_empty() {
        return Err(VqError::NoShapes);
    }
    if points.len() % dim != 0 {
        return Err(VqError::Dimension { expected: dim, actual: points.len() % dim });
    }
    let n = points.len() / dim;
    let k = config.k;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut centroids, padded) = seed_centroids(points, dim, k, &mut rng);
    let mut assignments = vec![0u32; n];
    let mut history = Vec::new();
    let mut iterations = 0u32;

    // padded rows duplicate a learned one, so only the learned rows are refined
    let active = if padded { distinct_rows(&centroids, dim) } else { k };

    if n <= config.batch_size {
        history.push(assign_all(points, &centroids[..active * dim], dim, &mut assignments));
        let mut sums = vec![0.0; active * dim];
        let mut counts = vec![0usize; active];
        for _ in 0..config.max_iterations {
            iterations += 1;
            sums.iter_mut().for_each(|s| *s = 0.0);
            counts.iter_mut().for_each(|c| *c = 0);
            for (p, &a) in points.chunks_exact(dim).zip(&assignments) {
                let a = a as usize;
                counts[a] += 1;
                sums[a * dim..(a + 1) * dim].iter_mut().zip(p).for_each(|(s, v)| *s += v);
            }
            for c in 0..active {
                if counts[c] > 0 {
                    let inv = 1.0 / counts[c] as f64;
                    for (dst, s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                        *dst = s * inv;
                    }
                }
            }
            reseed_empty(points, dim, &mut centroids[..active * dim], &mut assignments, &counts);
            let before = assignments.clone();
            history.push(assign_all(points, &centroids[..active * dim], dim, &mut assignments));
            if before == assignments {
                break;
            }
        }
    } else {
        let mut counts = vec![0u64; active];
        let batch = config.batch_size;
        let mut picks = vec![0usize; batch];
        let mut labels = vec![0usize; batch];
        for _ in 0..config.max_iterations {
            iterations += 1;
            picks.iter_mut().for_each(|p| *p = rng.random_range(0..n));
            for (label, &p) in labels.iter_mut().zip(&picks) {
                *label = nearest(&points[p * dim..(p + 1) * dim], &centroids[..active * dim], dim).0;
            }
            for (&label, &p) in labels.iter().zip(&picks) {
                counts[label] += 1;
                let eta = 1.0 / counts[label] as f64;
                let row = &mut centroids[label * dim..(label + 1) * dim];
                for (c, v) in row.iter_mut().zip(&points[p * dim..(p + 1) * dim]) {
                    *c += eta * (v - *c);
                }
            }
        }
        assign_all(points, &centroids[..active * dim], dim, &mut assignments);
    }

    if padded {
        let last = centroids[(active - 1) * dim..active * dim].to_vec();
        for row in centroids[active * dim..].chunks_exact_mut(dim) {
            row.copy_from_slice(&last);
        }
    }
    let inertia = assign_all(points, &centroids, dim, &mut assignments);
    Ok(KMeansResult { centroids, assignments, inertia, inertia_history: history, iterations, padded })
}

fn distinct_rows(centroids: &[f64], dim: usize) -> usize {
    let rows: Vec<&[f64]> = centroids.chunks_exact(dim).collect();
    let last = rows[rows.len() - 1];
    rows.iter().position(|r| *r == last).map_or(rows.len(), |p| p + 1)
}

/// Moves each empty centroid onto the point farthest from its own centroid.
fn reseed_empty(points: &[f64], dim: usize, centroids: &mut [f64], assignments: &mut [u32], counts: &[usize]) {
    for empty in (0..counts.len()).filter(|&c| counts[c] == 0) {
        let mut far = (usize::MAX, 0.0);
        for (i, p) in points.chunks_exact(dim).enumerate() {
            let a = assignments[i] as usize;
            let d = sq_dist(p, &centroids[a * dim..(a + 1) * dim]);
            if d > far.1 {
                far = (i, d);
            }
        }
        if far.0 == usize::MAX {
            break;
        }
        let i = far.0;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(&points[i * dim..(i + 1) * dim]);
        assignments[i] = empty as u32;
    }
}

fn flatten(shapes: &[ShapeRecord]) -> Result<(Vec<f64>, usize), VqError> {
    let dim = shapes.first().ok_or(VqError::NoShapes)?.shape.len();
    let mut flat = Vec::with_capacity(shapes.len() * dim);
    for s in shapes {
        if s.shape.len() != dim {
            return Err(VqError::Dimension { expected: dim, actual: s.shape.len() });
        }
        flat.extend_from_slice(&s.shape);
    }
    Ok((flat, dim))
}

/// Learns a `K`-row codebook from normalized shapes.
pub fn kmeans_codebook(shapes: &[ShapeRecord], config: &KMeansConfig) -> Result<Codebook, VqError> {
    let (flat, dim) = flatten(shapes)?;
    let result = kmeans(&flat, dim, config)?;
    let meta = CodebookMeta {
        iterations: result.iterations,
        inertia: result.inertia,
        seed: config.seed,
        padded: result.padded,
    };
    Codebook::from_rows(config.k, dim, &result.centroids, meta)
}

/// Nearest codebook row for every shape (squared L2, lowest index on ties).
pub fn assign_indices(shapes: &[ShapeRecord], codebook: &Codebook) -> Result<Vec<u32>, VqError> {
    let rows = codebook.rows();
    let dim = codebook.grid_size;
    shapes
        .iter()
        .map(|s| {
            if s.shape.len() != dim {
                return Err(VqError::Dimension { expected: dim, actual: s.shape.len() });
            }
            Ok(nearest(&s.shape, &rows, dim).0 as u32)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsb::EdgeId;

    fn rec(shape: &[f64]) -> ShapeRecord {
        ShapeRecord { shape: shape.to_vec(), gain: 1.0, bias: 0.0, edge_id: EdgeId::default() }
    }

    fn sorted_rows(flat: &[f64], dim: usize) -> Vec<Vec<f64>> {
        let mut rows: Vec<Vec<f64>> = flat.chunks_exact(dim).map(<[f64]>::to_vec).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows
    }

    #[test]
    fn single_centroid_is_mean() {
        let pts = [1.0, 2.0, 3.0, 6.0, -1.0, 1.0];
        let r = kmeans(&pts, 2, &KMeansConfig::new(1, 3)).unwrap();
        assert!((r.centroids[0] - 1.0).abs() < 1e-15 && (r.centroids[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn k_equal_to_distinct_count_is_exact() {
        let pts = [0.0, 1.0, 5.0, 5.0, -2.0, 3.0, 4.0, -4.0];
        for seed in 0..20 {
            let r = kmeans(&pts, 2, &KMeansConfig::new(4, seed)).unwrap();
            assert_eq!(r.inertia, 0.0);
            assert_eq!(sorted_rows(&r.centroids, 2), sorted_rows(&pts, 2));
        }
    }

    #[test]
    fn pads_when_k_exceeds_distinct() {
        let pts = [1.0, 1.0, 1.0, 1.0, 2.0, 2.0];
        let r = kmeans(&pts, 2, &KMeansConfig::new(5, 0)).unwrap();
        assert!(r.padded);
        assert_eq!(r.inertia, 0.0);
        assert_eq!(&r.centroids[6..8], &r.centroids[8..10]);
        assert_eq!(r.centroids.len(), 10);
    }

    #[test]
    fn empty_cluster_is_reseeded_to_farthest_point() {
        let pts = [0.0, 10.0, 11.0];
        let mut centroids = vec![0.0, 50.0, 10.0];
        let mut assignments = vec![0, 2, 2];
        reseed_empty(&pts, 1, &mut centroids, &mut assignments, &[1, 0, 2]);
        assert_eq!(centroids, vec![0.0, 11.0, 10.0]);
        assert_eq!(assignments, vec![0, 2, 1]);
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let cb = Codebook::from_rows(
            6,
            1,
            &[5.0, 9.0, -1.0, 7.0, 8.0, 1.0],
            CodebookMeta::default(),
        )
        .unwrap();
        assert_eq!(assign_indices(&[rec(&[0.0])], &cb).unwrap(), vec![2]);
    }

    #[test]
    fn identity_assignment() {
        let rows = [0.5, -0.5, 2.0, 1.0, -3.0, 0.0];
        let cb = Codebook::from_rows(3, 2, &rows, CodebookMeta::default()).unwrap();
        let shapes: Vec<ShapeRecord> = rows.chunks(2).map(rec).collect();
        assert_eq!(assign_indices(&shapes, &cb).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn mini_batch_path_converges_on_separated_clusters() {
        let mut pts = Vec::new();
        for i in 0..600 {
            let c = if i % 2 == 0 { -5.0 } else { 5.0 };
            pts.extend_from_slice(&[c + (i % 7) as f64 * 0.01, c]);
        }
        let cfg = KMeansConfig { k: 2, max_iterations: 50, batch_size: 64, seed: 9 };
        let r = kmeans(&pts, 2, &cfg).unwrap();
        assert!(r.inertia_history.is_empty());
        let rows = sorted_rows(&r.centroids, 2);
        assert!((rows[0][1] + 5.0).abs() < 1e-9 && (rows[1][1] - 5.0).abs() < 1e-9);
        assert_eq!(kmeans(&pts, 2, &cfg).unwrap(), r);
    }

    #[test]
    fn errors() {
        assert_eq!(kmeans(&[1.0], 1, &KMeansConfig::new(0, 0)), Err(VqError::EmptyCodebook));
        assert_eq!(kmeans(&[], 1, &KMeansConfig::new(1, 0)), Err(VqError::NoShapes));
        assert!(kmeans_codebook(&[], &KMeansConfig::new(1, 0)).is_err());
    }
}
