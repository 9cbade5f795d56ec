//! Ingestion-side numerics: PCA reduction, exact k-nearest-neighbor search,
//! and the per-point scale used by the input-space similarity kernel.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::dataset::Dataset;
use crate::error::{Result, TrimapError};
use crate::par::indexed_map;

/// Floor applied to per-point scales so exact duplicate clusters cannot
/// divide by zero downstream.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Sorted nearest neighbors per point plus, once computed, the per-point
/// scale `sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    /// `N x K` neighbor indices, each row sorted by ascending distance and
    /// never containing the row's own point. Ties break on the smaller index.
    pub neighbor_indices: Array2<u32>,
    /// `N x K` Euclidean distances matching `neighbor_indices`.
    pub neighbor_distances: Array2<f64>,
    /// Per-point scale; empty until [`compute_sigma`] fills it.
    pub sigma: Vec<f64>,
}

impl NeighborGraph {
    pub fn n_points(&self) -> usize {
        self.neighbor_indices.nrows()
    }

    pub fn k(&self) -> usize {
        self.neighbor_indices.ncols()
    }

    pub(crate) fn require_sigma(&self) -> Result<&[f64]> {
        if self.sigma.len() != self.n_points() {
            return Err(TrimapError::MalformedGraph(
                "per-point scales missing; run compute_sigma first".into(),
            ));
        }
        Ok(&self.sigma)
    }
}

/// A fitted principal-component basis: the column means, the top components
/// (one per column, unit length, descending eigenvalue), and the matching
/// covariance eigenvalues.
#[derive(Clone, Debug)]
pub struct Pca {
    pub mean: Array1<f64>,
    /// `D x k`, column `c` is the c-th principal axis.
    pub components: Array2<f64>,
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    /// Fits by eigendecomposition of the sample covariance (the only regime
    /// in scope is D up to a couple thousand). Component signs are fixed by
    /// making each column's largest-magnitude entry positive, first index
    /// winning ties, so the basis is deterministic.
    pub fn fit(points: ArrayView2<'_, f64>, k: usize) -> Result<Self> {
        let n = points.nrows();
        let d = points.ncols();
        if n < 2 {
            return Err(TrimapError::TooFewPoints(format!(
                "PCA needs at least 2 points, got {n}"
            )));
        }
        if k == 0 || k > d {
            return Err(TrimapError::Parameter(format!(
                "PCA target dimension must be in 1..={d}, got {k}"
            )));
        }

        let mean = points
            .mean_axis(ndarray::Axis(0))
            .expect("n >= 2 rows present");
        let centered = &points - &mean.view().insert_axis(ndarray::Axis(0));

        let mut cov = DMatrix::<f64>::zeros(d, d);
        let denom = (n - 1) as f64;
        for a in 0..d {
            for b in a..d {
                let mut acc = 0.0;
                for row in 0..n {
                    acc += centered[[row, a]] * centered[[row, b]];
                }
                let v = acc / denom;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }

        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .expect("covariance eigenvalues are finite")
                .then(a.cmp(&b))
        });

        let mut components = Array2::zeros((d, k));
        let mut eigenvalues = Vec::with_capacity(k);
        for (c, &src) in order.iter().take(k).enumerate() {
            let col = eig.eigenvectors.column(src);
            let mut max_abs = 0.0;
            let mut max_idx = 0;
            for (i, &v) in col.iter().enumerate() {
                if v.abs() > max_abs {
                    max_abs = v.abs();
                    max_idx = i;
                }
            }
            let flip = if col[max_idx] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..d {
                components[[i, c]] = flip * col[i];
            }
            eigenvalues.push(eig.eigenvalues[src]);
        }

        Ok(Self { mean, components, eigenvalues })
    }

    /// Projects points onto the fitted basis: `(X - mean) . components`.
    pub fn transform(&self, points: ArrayView2<'_, f64>) -> Array2<f64> {
        let centered = &points - &self.mean.view().insert_axis(ndarray::Axis(0));
        centered.dot(&self.components)
    }

    /// Maps scores back into the original space.
    pub fn inverse_transform(&self, scores: ArrayView2<'_, f64>) -> Array2<f64> {
        scores.dot(&self.components.t()) + self.mean.view().insert_axis(ndarray::Axis(0))
    }
}

/// Projects the dataset onto its top `target_dim` principal components,
/// mean-centering first. Data already at or below the target dimension is
/// returned unchanged. Labels and ids are preserved.
pub fn pca_reduce(data: &Dataset, target_dim: usize) -> Result<Dataset> {
    if target_dim == 0 {
        return Err(TrimapError::Parameter(
            "PCA target dimension must be >= 1".into(),
        ));
    }
    if data.dim() <= target_dim {
        return Ok(data.clone());
    }
    let pca = Pca::fit(data.points(), target_dim)?;
    let scores = pca.transform(data.points());
    Dataset::from_parts(
        scores,
        data.labels().map(|l| l.to_vec()),
        Some(data.ids().to_vec()),
    )
}

/// Sorted k nearest neighbors of every point under Euclidean distance,
/// self excluded, ties broken by ascending point index. Rows are computed
/// independently, so parallel and sequential runs agree bit for bit.
pub fn exact_knn(data: &Dataset, k: usize) -> Result<NeighborGraph> {
    let n = data.n_points();
    if k == 0 || k >= n {
        return Err(TrimapError::Parameter(format!(
            "k must be in 1..={} for {} points, got {k}",
            n - 1,
            n
        )));
    }
    let rows = indexed_map(n, |i| {
        let anchor = data.point(i);
        let mut candidates: Vec<(f64, u32)> = Vec::with_capacity(n - 1);
        for j in 0..n {
            if j == i {
                continue;
            }
            let d2 = crate::math::squared_distance(anchor, data.point(j));
            candidates.push((d2, j as u32));
        }
        candidates.sort_unstable_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("distances are finite")
                .then(a.1.cmp(&b.1))
        });
        candidates.truncate(k);
        candidates
    });

    let mut neighbor_indices = Array2::zeros((n, k));
    let mut neighbor_distances = Array2::zeros((n, k));
    for (i, row) in rows.iter().enumerate() {
        for (rank, &(d2, j)) in row.iter().enumerate() {
            neighbor_indices[[i, rank]] = j;
            neighbor_distances[[i, rank]] = d2.sqrt();
        }
    }
    Ok(NeighborGraph {
        neighbor_indices,
        neighbor_distances,
        sigma: Vec::new(),
    })
}

/// Fills the per-point scale: the mean distance to neighbors of rank 10
/// through 20 (1-indexed, 11 values). Rows with fewer than 20 neighbors use
/// all available ranks from `min(10, K)` up. Scales are floored at
/// [`SIGMA_FLOOR`] so duplicate clusters stay usable.
pub fn compute_sigma(graph: NeighborGraph) -> Result<NeighborGraph> {
    let k = graph.k();
    if k == 0 {
        return Err(TrimapError::MalformedGraph(
            "neighbor rows are empty".into(),
        ));
    }
    let lo = 10.min(k); // 1-indexed rank
    let hi = 20.min(k);
    let mut graph = graph;
    graph.sigma = graph
        .neighbor_distances
        .rows()
        .into_iter()
        .map(|row| {
            let mut acc = 0.0;
            for rank in lo..=hi {
                acc += row[rank - 1];
            }
            (acc / (hi - lo + 1) as f64).max(SIGMA_FLOOR)
        })
        .collect();
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        Dataset::new(points).unwrap()
    }

    /// Brute-force neighbor oracle: full all-pairs distance sort.
    fn brute_force_knn(data: &Dataset, k: usize) -> Vec<Vec<u32>> {
        let n = data.n_points();
        (0..n)
            .map(|i| {
                let mut all: Vec<(f64, u32)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let d2 =
                            crate::math::squared_distance(data.point(i), data.point(j));
                        (d2, j as u32)
                    })
                    .collect();
                all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                all.into_iter().take(k).map(|(_, j)| j).collect()
            })
            .collect()
    }

    /// Cyclic Jacobi eigendecomposition, used as an implementation-independent
    /// oracle for the nalgebra-backed PCA.
    #[allow(clippy::needless_range_loop)]
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let d = a.len();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..d {
                for q in (p + 1)..d {
                    off += a[p][q] * a[p][q];
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for r in 0..d {
                        let (arp, arq) = (a[r][p], a[r][q]);
                        a[r][p] = c * arp - s * arq;
                        a[r][q] = s * arp + c * arq;
                    }
                    for r in 0..d {
                        let (apr, aqr) = (a[p][r], a[q][r]);
                        a[p][r] = c * apr - s * aqr;
                        a[q][r] = s * apr + c * aqr;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..d).map(|i| a[i][i]).collect();
        eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
        eig
    }

    #[test]
    fn pca_identity_when_already_small() {
        let ds = random_dataset(20, 10, 1);
        let out = pca_reduce(&ds, 50).unwrap();
        assert_eq!(out, ds);
    }

    #[test]
    fn pca_rank_two_reconstructs_exactly() {
        // Mean-zero rank-2 data in 5 dimensions.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scores = Array2::from_shape_fn((40, 2), |_| rng.random_range(-1.0..1.0));
        let basis = array![
            [1.0, 0.0, 0.5, -0.3, 0.2],
            [0.0, 1.0, -0.2, 0.4, 0.7],
        ];
        let mut data = scores.dot(&basis);
        let mean = data.mean_axis(ndarray::Axis(0)).unwrap();
        data -= &mean.view().insert_axis(ndarray::Axis(0));

        let pca = Pca::fit(data.view(), 2).unwrap();
        let projected = pca.transform(data.view());
        let back = pca.inverse_transform(projected.view());
        for (a, b) in data.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn pca_variance_matches_jacobi_oracle() {
        let ds = random_dataset(100, 80, 11);
        let reduced = pca_reduce(&ds, 50).unwrap();
        assert_eq!(reduced.dim(), 50);

        // Projected variance (sample convention) per column.
        let n = reduced.n_points() as f64;
        let mut projected_var = 0.0;
        for c in 0..50 {
            let col = reduced.points().column(c).to_owned();
            let mean = col.mean().unwrap();
            projected_var += col.mapv(|v| (v - mean) * (v - mean)).sum() / (n - 1.0);
        }

        // Oracle: Jacobi eigendecomposition of the sample covariance.
        let d = ds.dim();
        let mean = ds.points().mean_axis(ndarray::Axis(0)).unwrap();
        let mut cov = vec![vec![0.0; d]; d];
        for a in 0..d {
            for b in 0..d {
                let mut acc = 0.0;
                for r in 0..ds.n_points() {
                    acc += (ds.points()[[r, a]] - mean[a]) * (ds.points()[[r, b]] - mean[b]);
                }
                cov[a][b] = acc / (n - 1.0);
            }
        }
        let eig = jacobi_eigenvalues(cov);
        let top50: f64 = eig.iter().take(50).sum();
        assert_relative_eq!(projected_var, top50, max_relative = 1e-6);
    }

    #[test]
    fn pca_scores_have_diagonal_covariance() {
        let ds = random_dataset(120, 30, 5);
        let reduced = pca_reduce(&ds, 10).unwrap();
        let pts = reduced.points();
        let n = pts.nrows() as f64;
        let mean = pts.mean_axis(ndarray::Axis(0)).unwrap();
        for a in 0..10 {
            for b in 0..10 {
                if a == b {
                    continue;
                }
                let mut acc = 0.0;
                for r in 0..pts.nrows() {
                    acc += (pts[[r, a]] - mean[a]) * (pts[[r, b]] - mean[b]);
                }
                assert!(
                    (acc / (n - 1.0)).abs() < 1e-8,
                    "off-diagonal covariance ({a},{b}) = {}",
                    acc / (n - 1.0)
                );
            }
        }
    }

    #[test]
    fn knn_three_collinear_points() {
        let ds = Dataset::new(array![[0.0], [1.0], [3.0]]).unwrap();
        let g = exact_knn(&ds, 1).unwrap();
        assert_eq!(g.neighbor_indices, array![[1], [0], [1]]);
        assert_eq!(g.neighbor_distances, array![[1.0], [1.0], [2.0]]);
    }

    #[test]
    fn knn_duplicate_pair_is_mutual_at_distance_zero() {
        let ds = Dataset::new(array![[2.0, 2.0], [2.0, 2.0], [9.0, 9.0]]).unwrap();
        let g = exact_knn(&ds, 1).unwrap();
        assert_eq!(g.neighbor_indices[[0, 0]], 1);
        assert_eq!(g.neighbor_indices[[1, 0]], 0);
        assert_eq!(g.neighbor_distances[[0, 0]], 0.0);
        assert_eq!(g.neighbor_distances[[1, 0]], 0.0);
    }

    #[test]
    fn knn_matches_brute_force_on_random_data() {
        let ds = random_dataset(200, 10, 42);
        let g = exact_knn(&ds, 20).unwrap();
        let oracle = brute_force_knn(&ds, 20);
        for (i, expected) in oracle.iter().enumerate() {
            let got: Vec<u32> = g.neighbor_indices.row(i).to_vec();
            assert_eq!(&got, expected, "row {i}");
        }
    }

    #[test]
    fn knn_rejects_k_out_of_range() {
        let ds = random_dataset(5, 2, 0);
        assert!(matches!(exact_knn(&ds, 5), Err(TrimapError::Parameter(_))));
        assert!(exact_knn(&ds, 0).is_err());
    }

    #[test]
    fn sigma_constant_distances() {
        let ds = random_dataset(30, 3, 9);
        let mut g = exact_knn(&ds, 25).unwrap();
        g.neighbor_distances.fill(2.0);
        let g = compute_sigma(g).unwrap();
        for &s in &g.sigma {
            assert_eq!(s, 2.0);
        }
    }

    #[test]
    fn sigma_is_mean_of_ranks_ten_to_twenty() {
        let ds = random_dataset(30, 3, 9);
        let mut g = exact_knn(&ds, 25).unwrap();
        // Distances 1..=25 by rank: ranks 10..=20 hold 10..=20, mean 15.
        for i in 0..30 {
            for rank in 0..25 {
                g.neighbor_distances[[i, rank]] = (rank + 1) as f64;
            }
        }
        let g = compute_sigma(g).unwrap();
        for &s in &g.sigma {
            assert_eq!(s, 15.0);
        }

        // With exactly the specified window values 1..=11 at ranks 10..=20.
        let ds2 = random_dataset(25, 2, 10);
        let mut g2 = exact_knn(&ds2, 20).unwrap();
        for i in 0..25 {
            for rank in 0..20 {
                g2.neighbor_distances[[i, rank]] = if rank >= 9 {
                    (rank - 8) as f64 // ranks 10..=20 -> 1..=11
                } else {
                    0.5
                };
            }
        }
        let g2 = compute_sigma(g2).unwrap();
        for &s in &g2.sigma {
            assert_eq!(s, 6.0);
        }
    }

    #[test]
    fn sigma_duplicate_cluster_hits_floor() {
        let points = Array2::zeros((25, 4));
        let ds = Dataset::new(points).unwrap();
        let g = compute_sigma(exact_knn(&ds, 24).unwrap()).unwrap();
        for &s in &g.sigma {
            assert_eq!(s, SIGMA_FLOOR);
        }
    }

    #[test]
    fn sigma_short_rows_use_available_ranks() {
        // K = 5 < 10: the window degenerates to rank 5 alone.
        let ds = random_dataset(6, 2, 1);
        let mut g = exact_knn(&ds, 5).unwrap();
        for i in 0..6 {
            for rank in 0..5 {
                g.neighbor_distances[[i, rank]] = (rank + 1) as f64;
            }
        }
        let g = compute_sigma(g).unwrap();
        for &s in &g.sigma {
            assert_eq!(s, 5.0);
        }
    }

    #[test]
    fn sigma_is_permutation_equivariant() {
        let ds = random_dataset(50, 4, 77);
        let g = compute_sigma(exact_knn(&ds, 25).unwrap()).unwrap();

        // Reverse the rows and recompute.
        let n = ds.n_points();
        let mut flipped = Array2::zeros((n, 4));
        for i in 0..n {
            for d in 0..4 {
                flipped[[n - 1 - i, d]] = ds.points()[[i, d]];
            }
        }
        let ds2 = Dataset::new(flipped).unwrap();
        let g2 = compute_sigma(exact_knn(&ds2, 25).unwrap()).unwrap();
        for i in 0..n {
            assert_relative_eq!(g.sigma[i], g2.sigma[n - 1 - i], max_relative = 1e-12);
        }
    }
}
