//! Single-codebook vector quantization: k-means++ initialization and Lloyd
//! iterations.
//!
//! This is the clustering primitive behind every RVQ layer. All randomness is
//! seeded, assignments tie-break to the lowest centroid index, and distances
//! accumulate in fixed index order so token streams reproduce across runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A set of M points of uniform dimension D, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f32>,
    dim: usize,
    count: usize,
}

impl PointSet {
    pub fn new(data: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        if data.is_empty() {
            return Err(Error::EmptyInput);
        }
        if data.len() % dim != 0 {
            return Err(Error::ShapeMismatch {
                what: "point data length",
                expected: (data.len() / dim + 1) * dim,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "point set" });
        }
        let count = data.len() / dim;
        Ok(Self { data, dim, count })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        let dim = rows[0].len();
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
        }
        Self::new(rows.concat(), dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// K centroids of dimension D; indices 0..K-1 are one layer's token alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Vec<f32>,
    size: usize,
    dim: usize,
}

impl Codebook {
    pub fn new(centroids: Vec<f32>, size: usize, dim: usize) -> Result<Self> {
        if centroids.len() != size * dim {
            return Err(Error::ShapeMismatch {
                what: "codebook data length",
                expected: size * dim,
                found: centroids.len(),
            });
        }
        if size == 0 || dim == 0 {
            return Err(Error::InvalidConfig(
                "codebook size and dimension must be positive".into(),
            ));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "codebook" });
        }
        Ok(Self { centroids, size, dim })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, j: usize) -> &[f32] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn centroids(&self) -> impl Iterator<Item = &[f32]> {
        self.centroids.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.centroids
    }
}

#[derive(Debug, Clone)]
pub struct KmeansConfig {
    pub k: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl KmeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iters: 100,
            rel_tol: 1e-6,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.max_iters == 0 || self.rel_tol < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "k={} max_iters={} rel_tol={}",
                self.k, self.max_iters, self.rel_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KmeansReport {
    /// Sum of squared distances after each Lloyd iteration; non-increasing.
    pub objective_history: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

pub(crate) fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = (*x - *y) as f64;
        acc += d * d;
    }
    acc
}

/// Index of the nearest centroid, ties broken by lowest index.
pub(crate) fn nearest(codebook: &Codebook, v: &[f32]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (j, c) in codebook.centroids().enumerate() {
        let d = squared_distance(v, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

/// k-means++ seeding: first centroid uniform, each subsequent one drawn with
/// probability proportional to squared distance to the nearest chosen centroid.
pub fn kmeans_pp_init(points: &PointSet, k: usize, seed: u64) -> Result<Codebook> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if points.count() < k {
        return Err(Error::NotEnoughPoints {
            available: points.count(),
            requested: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = points.count();
    let dim = points.dim();

    let mut chosen = Vec::with_capacity(k);
    let mut is_chosen = vec![false; m];
    let first = rng.random_range(0..m);
    chosen.push(first);
    is_chosen[first] = true;

    let mut d2: Vec<f64> = (0..m)
        .map(|i| squared_distance(points.row(i), points.row(first)))
        .collect();

    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0f64;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                acc += w;
                if r < acc {
                    pick = Some(i);
                    break;
                }
            }
            // Float roundoff can leave r just past the last bucket.
            pick.unwrap_or_else(|| {
                d2.iter().rposition(|&w| w > 0.0).expect("total > 0")
            })
        } else {
            // All remaining points coincide with chosen centroids; fall back
            // to the lowest unchosen index to keep K distinct slots.
            is_chosen
                .iter()
                .position(|&c| !c)
                .ok_or(Error::NotEnoughPoints {
                    available: m,
                    requested: k,
                })?
        };
        chosen.push(pick);
        is_chosen[pick] = true;
        for i in 0..m {
            let d = squared_distance(points.row(i), points.row(pick));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }

    let mut centroids = Vec::with_capacity(k * dim);
    for &i in &chosen {
        centroids.extend_from_slice(points.row(i));
    }
    Codebook::new(centroids, k, dim)
}

/// Map each point to its nearest centroid index.
pub fn assign(points: &PointSet, codebook: &Codebook) -> Result<Vec<usize>> {
    if points.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            found: points.dim(),
        });
    }
    Ok(points.rows().map(|v| nearest(codebook, v).0).collect())
}

/// One Lloyd step: recompute centroids as assigned-point means, repair empty
/// clusters by reseeding to the farthest point, and return the post-update
/// objective.
pub fn lloyd_iterate(points: &PointSet, codebook: &Codebook) -> Result<(Codebook, f64)> {
    let assignments = assign(points, codebook)?;
    let k = codebook.size();
    let dim = codebook.dim();

    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (i, v) in points.rows().enumerate() {
        let c = assignments[i];
        counts[c] += 1;
        let s = &mut sums[c * dim..(c + 1) * dim];
        for (acc, x) in s.iter_mut().zip(v.iter()) {
            *acc += *x as f64;
        }
    }

    let mut centroids = vec![0.0f32; k * dim];
    for j in 0..k {
        if counts[j] > 0 {
            let inv = 1.0 / counts[j] as f64;
            for d in 0..dim {
                centroids[j * dim + d] = (sums[j * dim + d] * inv) as f32;
            }
        }
    }

    // Empty-cluster repair: move each empty centroid onto the point currently
    // farthest from its own (updated) centroid. One point per repair.
    let empties: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
    if !empties.is_empty() {
        let mut taken = vec![false; points.count()];
        for j in empties {
            let mut far_i = None;
            let mut far_d = -1.0f64;
            for (i, v) in points.rows().enumerate() {
                if taken[i] {
                    continue;
                }
                let c = assignments[i];
                let d = squared_distance(v, &centroids[c * dim..(c + 1) * dim]);
                if d > far_d {
                    far_d = d;
                    far_i = Some(i);
                }
            }
            if let Some(i) = far_i {
                taken[i] = true;
                centroids[j * dim..(j + 1) * dim].copy_from_slice(points.row(i));
            }
        }
    }

    let updated = Codebook::new(centroids, k, dim)?;
    let mut objective = 0.0f64;
    for v in points.rows() {
        objective += nearest(&updated, v).1;
    }
    Ok((updated, objective))
}

/// Full k-means: k-means++ seeding, then Lloyd iterations until the relative
/// objective change drops below `rel_tol` or `max_iters` is reached.
pub fn train_kmeans(points: &PointSet, cfg: &KmeansConfig) -> Result<(Codebook, KmeansReport)> {
    cfg.validate()?;
    let mut codebook = kmeans_pp_init(points, cfg.k, cfg.seed)?;
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;
    let mut converged = false;

    for _ in 0..cfg.max_iters {
        let (next, objective) = lloyd_iterate(points, &codebook)?;
        codebook = next;
        history.push(objective);
        if prev.is_finite() && prev - objective <= cfg.rel_tol * prev {
            converged = true;
            break;
        }
        prev = objective;
    }

    let report = KmeansReport {
        iterations_run: history.len(),
        objective_history: history,
        converged,
    };
    Ok((codebook, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_points(rng: &mut ChaCha8Rng, m: usize, dim: usize) -> PointSet {
        let data: Vec<f32> = (0..m * dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        PointSet::new(data, dim).unwrap()
    }

    // Independent O(M*K) nearest-neighbor scan used as the assignment oracle.
    fn brute_force_assign(points: &PointSet, codebook: &Codebook) -> Vec<usize> {
        points
            .rows()
            .map(|v| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for j in 0..codebook.size() {
                    let c = codebook.centroid(j);
                    let d: f64 = v
                        .iter()
                        .zip(c.iter())
                        .map(|(a, b)| ((*a - *b) as f64).powi(2))
                        .sum();
                    if d < best_d {
                        best_d = d;
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    #[test]
    fn init_single_point() {
        let points = PointSet::from_rows(&[vec![3.0, -1.0]]).unwrap();
        for seed in [0u64, 7, 42] {
            let cb = kmeans_pp_init(&points, 1, seed).unwrap();
            assert_eq!(cb.centroid(0), &[3.0, -1.0]);
        }
    }

    #[test]
    fn init_two_far_points() {
        let points = PointSet::from_rows(&[vec![0.0, 0.0], vec![10.0, 10.0]]).unwrap();
        for seed in 0..10u64 {
            let cb = kmeans_pp_init(&points, 2, seed).unwrap();
            let mut got: Vec<Vec<f32>> = cb.centroids().map(|c| c.to_vec()).collect();
            got.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
            assert_eq!(got, vec![vec![0.0, 0.0], vec![10.0, 10.0]]);
        }
    }

    #[test]
    fn init_separated_clusters_one_centroid_each() {
        // 4 well-separated clusters of 25 points; each chosen centroid's
        // nearest training point must come from a distinct cluster.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let centers = [[0.0, 0.0], [100.0, 0.0], [0.0, 100.0], [100.0, 100.0]];
        let mut rows = Vec::new();
        let mut cluster_of = Vec::new();
        for (ci, c) in centers.iter().enumerate() {
            for _ in 0..25 {
                rows.push(vec![
                    c[0] + rng.random_range(-1.0..1.0),
                    c[1] + rng.random_range(-1.0..1.0),
                ]);
                cluster_of.push(ci);
            }
        }
        let points = PointSet::from_rows(&rows).unwrap();
        let cb = kmeans_pp_init(&points, 4, 7).unwrap();
        let mut seen = [false; 4];
        for c in cb.centroids() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, p) in points.rows().enumerate() {
                let d = squared_distance(c, p);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            seen[cluster_of[best]] = true;
        }
        assert!(seen.iter().all(|&s| s), "clusters covered: {seen:?}");
    }

    #[test]
    fn init_errors() {
        let points = PointSet::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(
            kmeans_pp_init(&points, 3, 0),
            Err(Error::NotEnoughPoints { available: 2, requested: 3 })
        ));
        assert!(PointSet::new(vec![], 2).is_err());
    }

    #[test]
    fn assign_exact_and_tie_break() {
        let cb = Codebook::new(
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            5,
            1,
        )
        .unwrap();
        let points = PointSet::from_rows(&[vec![3.0]]).unwrap();
        assert_eq!(assign(&points, &cb).unwrap(), vec![3]);

        // Equidistant from centroids 1 and 4 -> lowest index wins.
        let cb = Codebook::new(vec![-10.0, 2.0, -10.0, -10.0, 4.0], 5, 1).unwrap();
        let points = PointSet::from_rows(&[vec![3.0]]).unwrap();
        assert_eq!(assign(&points, &cb).unwrap(), vec![1]);
    }

    #[test]
    fn assign_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points = random_points(&mut rng, 50, 3);
        let cb_points = random_points(&mut rng, 8, 3);
        let cb = Codebook::new(cb_points.as_slice().to_vec(), 8, 3).unwrap();
        assert_eq!(assign(&points, &cb).unwrap(), brute_force_assign(&points, &cb));
    }

    #[test]
    fn assign_dimension_mismatch() {
        let cb = Codebook::new(vec![0.0, 0.0], 1, 2).unwrap();
        let points = PointSet::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(
            assign(&points, &cb),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn lloyd_fixed_point() {
        let points = PointSet::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let cb = Codebook::new(vec![0.0, 2.0], 2, 1).unwrap();
        let (next, obj) = lloyd_iterate(&points, &cb).unwrap();
        assert_eq!(next, cb);
        assert_eq!(obj, 0.0);
    }

    #[test]
    fn lloyd_hand_computed_means() {
        let points = PointSet::from_rows(&[vec![0.0], vec![1.0], vec![10.0]]).unwrap();
        let cb = Codebook::new(vec![0.0, 10.0], 2, 1).unwrap();
        let (next, obj) = lloyd_iterate(&points, &cb).unwrap();
        assert_eq!(next.centroid(0), &[0.5]);
        assert_eq!(next.centroid(1), &[10.0]);
        assert!((obj - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lloyd_repairs_empty_cluster() {
        // Centroid 1 starts so far away that nothing is assigned to it.
        let points = PointSet::from_rows(&[vec![0.0], vec![1.0], vec![100.0]]).unwrap();
        let cb = Codebook::new(vec![0.0, -1000.0], 2, 1).unwrap();
        let (next, _) = lloyd_iterate(&points, &cb).unwrap();
        // Farthest point from its centroid is 100.0; it reseeds the empty slot.
        assert_eq!(next.centroid(1), &[100.0]);
    }

    #[test]
    fn train_exact_pairs() {
        let points =
            PointSet::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![5.0, 5.0], vec![5.0, 5.0]])
                .unwrap();
        let (cb, report) = train_kmeans(&points, &KmeansConfig::new(2, 3)).unwrap();
        let mut got: Vec<Vec<f32>> = cb.centroids().map(|c| c.to_vec()).collect();
        got.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert_eq!(got, vec![vec![1.0, 1.0], vec![5.0, 5.0]]);
        assert_eq!(*report.objective_history.last().unwrap(), 0.0);
    }

    #[test]
    fn train_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points = random_points(&mut rng, 60, 4);
        let cfg = KmeansConfig::new(6, 123);
        let (a, _) = train_kmeans(&points, &cfg).unwrap();
        let (b, _) = train_kmeans(&points, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn train_k_equals_count_zero_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let points = random_points(&mut rng, 12, 2);
        let cfg = KmeansConfig::new(12, 4);
        let (_, report) = train_kmeans(&points, &cfg).unwrap();
        assert_eq!(*report.objective_history.last().unwrap(), 0.0);
    }

    #[test]
    fn objective_history_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..20u64 {
            let points = random_points(&mut rng, 80, 3);
            let (_, report) = train_kmeans(&points, &KmeansConfig::new(5, trial)).unwrap();
            for w in report.objective_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0].abs(), "history {:?}", report.objective_history);
            }
        }
    }

    #[test]
    fn converged_codebook_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let points = random_points(&mut rng, 100, 2);
        let cfg = KmeansConfig { k: 4, max_iters: 200, rel_tol: 0.0, seed: 2 };
        let (cb, report) = train_kmeans(&points, &cfg).unwrap();
        assert!(report.converged);
        let (next, _) = lloyd_iterate(&points, &cb).unwrap();
        assert_eq!(next, cb);
    }
}
