//! Quantitative instruments for judging embeddings: seeded k-means, cluster
//! vs label agreement, and Procrustes alignment of point constellations.

use nalgebra::DMatrix;
use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TrimapError};
use crate::math::squared_distance;

const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITERS: usize = 100;

/// Lloyd's algorithm with k-means++ seeding, 10 seeded restarts, lowest
/// inertia wins. Fully deterministic for a given seed.
pub fn kmeans(points: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(TrimapError::Parameter(format!(
            "k must be in 1..={n}, got {k}"
        )));
    }
    let rows: Vec<&[f64]> = (0..n)
        .map(|i| points.row(i).to_slice().expect("contiguous rows"))
        .collect();

    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let (inertia, assignment) = lloyd(&rows, points.ncols(), k, &mut rng);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, assignment));
        }
    }
    Ok(best.expect("at least one restart").1)
}

fn lloyd(rows: &[&[f64]], d: usize, k: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<usize>) {
    let n = rows.len();

    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(rows[rng.random_range(0..n)].to_vec());
    let mut d2: Vec<f64> = rows
        .iter()
        .map(|r| squared_distance(r, &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        };
        centers.push(rows[next].to_vec());
        for (i, r) in rows.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(r, centers.last().unwrap()));
        }
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, r) in rows.iter().enumerate() {
            let mut best = (f64::INFINITY, 0usize);
            for (c, center) in centers.iter().enumerate() {
                let dist = squared_distance(r, center);
                if dist < best.0 {
                    best = (dist, c);
                }
            }
            if assignment[i] != best.1 {
                assignment[i] = best.1;
                changed = true;
            }
        }

        let mut sums = vec![vec![0.0; d]; k];
        let mut sizes = vec![0usize; k];
        for (i, r) in rows.iter().enumerate() {
            sizes[assignment[i]] += 1;
            for (s, v) in sums[assignment[i]].iter_mut().zip(*r) {
                *s += v;
            }
        }
        for c in 0..k {
            if sizes[c] == 0 {
                // Re-seed an empty cluster on the point farthest from its
                // center; first index wins ties for determinism.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = squared_distance(rows[a], &centers[assignment[a]]);
                        let db = squared_distance(rows[b], &centers[assignment[b]]);
                        da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                    })
                    .unwrap();
                centers[c] = rows[far].to_vec();
                assignment[far] = c;
                changed = true;
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centers[c][j] = s / sizes[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let inertia = rows
        .iter()
        .enumerate()
        .map(|(i, r)| squared_distance(r, &centers[assignment[i]]))
        .sum();
    (inertia, assignment)
}

/// Fraction of points whose label matches the majority label of their
/// cluster (ties on the smaller label). 1.0 means the clustering reproduces
/// the labels exactly up to renaming.
pub fn label_agreement(assignment: &[usize], labels: &[i64]) -> Result<f64> {
    if assignment.len() != labels.len() {
        return Err(TrimapError::Shape(format!(
            "{} assignments vs {} labels",
            assignment.len(),
            labels.len()
        )));
    }
    if assignment.is_empty() {
        return Err(TrimapError::EmptyInput("no points to score".into()));
    }
    let k = assignment.iter().max().unwrap() + 1;
    let mut majority = vec![std::collections::BTreeMap::<i64, usize>::new(); k];
    for (&c, &l) in assignment.iter().zip(labels) {
        *majority[c].entry(l).or_insert(0) += 1;
    }
    let majority: Vec<Option<i64>> = majority
        .into_iter()
        .map(|counts| {
            counts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(l, _)| l)
        })
        .collect();
    let hits = assignment
        .iter()
        .zip(labels)
        .filter(|&(&c, &l)| majority[c] == Some(l))
        .count();
    Ok(hits as f64 / assignment.len() as f64)
}

/// Normalized misfit between two point constellations after centering and
/// the best scale and orthogonal map (rotations and reflections both
/// allowed, since embeddings have no preferred handedness):
/// `||A - s B Q||_F / ||A||_F` on the centered matrices.
pub fn procrustes_residual(
    reference: ArrayView2<'_, f64>,
    other: ArrayView2<'_, f64>,
) -> Result<f64> {
    if reference.dim() != other.dim() {
        return Err(TrimapError::Shape(format!(
            "constellations have shapes {:?} and {:?}",
            reference.dim(),
            other.dim()
        )));
    }
    let (n, d) = reference.dim();
    if n == 0 {
        return Err(TrimapError::EmptyInput("empty constellation".into()));
    }

    let center = |m: ArrayView2<'_, f64>| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n, d);
        let mean: Vec<f64> = (0..d).map(|c| m.column(c).sum() / n as f64).collect();
        for r in 0..n {
            for c in 0..d {
                out[(r, c)] = m[[r, c]] - mean[c];
            }
        }
        out
    };
    let a = center(reference);
    let b = center(other);

    let a_norm2 = a.iter().map(|v| v * v).sum::<f64>();
    let b_norm2 = b.iter().map(|v| v * v).sum::<f64>();
    if a_norm2 <= 0.0 {
        // Nothing to misfit against: all reference points coincide.
        return Ok(0.0);
    }
    if b_norm2 <= 0.0 {
        return Ok(1.0);
    }

    let m = b.transpose() * &a;
    let svd = m.svd(true, true);
    let q = svd.u.as_ref().unwrap() * svd.v_t.as_ref().unwrap();
    let scale = svd.singular_values.iter().sum::<f64>() / b_norm2;

    let aligned = b * q * scale;
    let residual2 = (&a - aligned).iter().map(|v| v * v).sum::<f64>();
    Ok((residual2 / a_norm2).sqrt())
}
