//! Embedding quality: mean precision-recall curves over growing
//! low-dimensional neighborhoods against a fixed high-dimensional relevant
//! set, and the area under the mean curve.

use ndarray::ArrayView2;

use crate::dataset::Dataset;
use crate::error::{Result, TrimapError};
use crate::math::squared_distance;
use crate::par::indexed_map;

/// Neighborhood size defining the high-dimensional "relevant points".
pub const DEFAULT_RELEVANT_K: usize = 20;
/// Largest low-dimensional neighborhood scanned.
pub const DEFAULT_K_MAX: usize = 100;

/// The averaged curve plus its area.
#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    /// Retrieved-set sizes `1..=k_max`.
    pub ks: Vec<usize>,
    pub mean_precision: Vec<f64>,
    pub mean_recall: Vec<f64>,
    /// Trapezoidal area of mean precision against mean recall, ordered by k.
    pub auc: f64,
    pub relevant_k: usize,
}

impl PrCurve {
    /// The JSON document emitted by the CLI:
    /// `{"relevant_k", "k_max", "curve": [[k, precision, recall], ...], "auc"}`.
    pub fn to_json(&self) -> serde_json::Value {
        let curve: Vec<serde_json::Value> = self
            .ks
            .iter()
            .zip(self.mean_precision.iter().zip(&self.mean_recall))
            .map(|(&k, (&p, &r))| serde_json::json!([k, p, r]))
            .collect();
        serde_json::json!({
            "relevant_k": self.relevant_k,
            "k_max": self.ks.len(),
            "curve": curve,
            "auc": self.auc,
        })
    }
}

/// Sorted neighbor lists (up to `k`) under Euclidean distance, self
/// excluded, ties broken by ascending index — the same convention as the
/// preprocessing k-NN.
fn neighbor_lists(points: ArrayView2<'_, f64>, k: usize) -> Vec<Vec<u32>> {
    let n = points.nrows();
    let rows: Vec<&[f64]> = (0..n)
        .map(|i| points.row(i).to_slice().expect("contiguous rows"))
        .collect();
    indexed_map(n, |i| {
        let mut candidates: Vec<(f64, u32)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (squared_distance(rows[i], rows[j]), j as u32))
            .collect();
        candidates.sort_unstable_by(|a, b| {
            a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1))
        });
        candidates.truncate(k);
        candidates.into_iter().map(|(_, j)| j).collect()
    })
}

/// Scores a low-dimensional embedding of `high`.
///
/// Per point, the relevant set is its `relevant_k` exact nearest neighbors
/// in the high-dimensional space; for each k in `1..=k_max`, precision is
/// the fraction of the k low-dimensional neighbors that are relevant and
/// recall the fraction of the relevant set retrieved. The curves are
/// averaged over points in index order and the AUC is the trapezoid rule
/// applied to the mean curve.
pub fn precision_recall(
    high: &Dataset,
    low: ArrayView2<'_, f64>,
    relevant_k: usize,
    k_max: usize,
) -> Result<PrCurve> {
    let n = high.n_points();
    if low.nrows() != n {
        return Err(TrimapError::Shape(format!(
            "high has {n} points but the embedding has {}",
            low.nrows()
        )));
    }
    if relevant_k == 0 || relevant_k >= n {
        return Err(TrimapError::Parameter(format!(
            "relevant_k must be in 1..={}, got {relevant_k}",
            n - 1
        )));
    }
    if k_max == 0 || k_max >= n {
        return Err(TrimapError::Parameter(format!(
            "k_max must be in 1..={}, got {k_max}",
            n - 1
        )));
    }
    for (i, row) in low.rows().into_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(TrimapError::NonFinite(format!(
                "embedding point {i} has a non-finite coordinate"
            )));
        }
    }

    let relevant = neighbor_lists(high.points(), relevant_k);
    let retrieved = neighbor_lists(low, k_max);

    let mut mean_precision = vec![0.0; k_max];
    let mut mean_recall = vec![0.0; k_max];
    let per_point = indexed_map(n, |i| {
        let mut is_relevant = vec![false; n];
        for &j in &relevant[i] {
            is_relevant[j as usize] = true;
        }
        let mut hits = 0usize;
        let mut curve = Vec::with_capacity(k_max);
        for (rank, &j) in retrieved[i].iter().enumerate() {
            if is_relevant[j as usize] {
                hits += 1;
            }
            curve.push((
                hits as f64 / (rank + 1) as f64,
                hits as f64 / relevant_k as f64,
            ));
        }
        curve
    });
    for curve in &per_point {
        for (k, &(p, r)) in curve.iter().enumerate() {
            mean_precision[k] += p;
            mean_recall[k] += r;
        }
    }
    for k in 0..k_max {
        mean_precision[k] /= n as f64;
        mean_recall[k] /= n as f64;
    }

    let mut auc = 0.0;
    for k in 1..k_max {
        auc += (mean_recall[k] - mean_recall[k - 1])
            * (mean_precision[k] + mean_precision[k - 1])
            / 2.0;
    }

    Ok(PrCurve {
        ks: (1..=k_max).collect(),
        mean_precision,
        mean_recall,
        auc,
        relevant_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new(Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn identity_embedding_is_perfect_retrieval() {
        let ds = random_dataset(150, 4, 3);
        let curve =
            precision_recall(&ds, ds.points(), DEFAULT_RELEVANT_K, 120).unwrap();
        for k in 0..DEFAULT_RELEVANT_K {
            assert_relative_eq!(curve.mean_precision[k], 1.0, max_relative = 1e-12);
        }
        assert_relative_eq!(curve.mean_recall[DEFAULT_RELEVANT_K - 1], 1.0, max_relative = 1e-12);

        // With perfect retrieval the area reduces to the recall span covered
        // at precision 1: exactly 1 - 1/relevant_k.
        assert_relative_eq!(curve.auc, 0.95, max_relative = 1e-12);
    }

    #[test]
    fn identity_beats_every_random_permutation() {
        let ds = random_dataset(120, 5, 14);
        let identity_auc = precision_recall(&ds, ds.points(), 15, 80).unwrap().auc;
        for seed in 0..10u64 {
            let mut order: Vec<usize> = (0..120).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..120).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let mut shuffled = Array2::zeros((120, 5));
            for (dst, &src) in order.iter().enumerate() {
                shuffled.row_mut(dst).assign(&ds.points().row(src));
            }
            let auc = precision_recall(&ds, shuffled.view(), 15, 80).unwrap().auc;
            assert!(
                identity_auc >= auc,
                "permutation {seed} scored {auc} above identity {identity_auc}"
            );
        }
    }

    #[test]
    fn recall_is_monotone_in_k() {
        let ds = random_dataset(80, 6, 9);
        let emb = random_dataset(80, 2, 10);
        let curve = precision_recall(&ds, emb.points(), 10, 60).unwrap();
        for w in curve.mean_recall.windows(2) {
            assert!(w[1] >= w[0] - 1e-15);
        }
    }

    #[test]
    fn curve_is_scale_invariant() {
        let ds = random_dataset(60, 5, 21);
        let emb = random_dataset(60, 2, 22);
        let reference = precision_recall(&ds, emb.points(), 10, 40).unwrap();
        let scaled = emb.points().mapv(|v| v * 137.0);
        let rescored = precision_recall(&ds, scaled.view(), 10, 40).unwrap();
        assert_eq!(reference, rescored);
    }

    #[test]
    fn shape_and_parameter_errors() {
        let ds = random_dataset(30, 3, 1);
        let emb = random_dataset(29, 2, 2);
        assert!(matches!(
            precision_recall(&ds, emb.points(), 5, 10),
            Err(TrimapError::Shape(_))
        ));
        assert!(matches!(
            precision_recall(&ds, ds.points(), 30, 10),
            Err(TrimapError::Parameter(_))
        ));
        assert!(matches!(
            precision_recall(&ds, ds.points(), 5, 30),
            Err(TrimapError::Parameter(_))
        ));
    }

    #[test]
    fn json_shape_matches_interface() {
        let ds = random_dataset(40, 3, 5);
        let curve = precision_recall(&ds, ds.points(), 5, 10).unwrap();
        let json = curve.to_json();
        assert_eq!(json["relevant_k"], 5);
        assert_eq!(json["k_max"], 10);
        assert_eq!(json["curve"].as_array().unwrap().len(), 10);
        assert!(json["auc"].as_f64().unwrap() > 0.0);
        let first = json["curve"][0].as_array().unwrap();
        assert_eq!(first[0], 1);
    }
}
