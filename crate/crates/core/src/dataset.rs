//! The input-side data container: an N x D coordinate matrix with optional
//! integer class labels and stable per-point identifiers.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, TrimapError};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    points: Array2<f64>,
    labels: Option<Vec<i64>>,
    ids: Vec<u64>,
}

impl Dataset {
    /// Wraps a coordinate matrix, assigning ids `0..N`. Requires at least two
    /// points and fully finite coordinates.
    pub fn new(points: Array2<f64>) -> Result<Self> {
        Self::from_parts(points, None, None)
    }

    /// Like [`Dataset::new`] with per-point class labels attached.
    pub fn with_labels(points: Array2<f64>, labels: Vec<i64>) -> Result<Self> {
        Self::from_parts(points, Some(labels), None)
    }

    pub(crate) fn from_parts(
        points: Array2<f64>,
        labels: Option<Vec<i64>>,
        ids: Option<Vec<u64>>,
    ) -> Result<Self> {
        let n = points.nrows();
        if n < 2 {
            return Err(TrimapError::TooFewPoints(format!(
                "a dataset needs at least 2 points, got {n}"
            )));
        }
        if points.ncols() == 0 {
            return Err(TrimapError::Shape("dataset has zero columns".into()));
        }
        for (row, point) in points.rows().into_iter().enumerate() {
            if point.iter().any(|v| !v.is_finite()) {
                return Err(TrimapError::NonFinite(format!(
                    "dataset point {row} has a non-finite coordinate"
                )));
            }
        }
        if let Some(ref labels) = labels {
            if labels.len() != n {
                return Err(TrimapError::Shape(format!(
                    "{} labels for {} points",
                    labels.len(),
                    n
                )));
            }
        }
        let ids = match ids {
            Some(ids) => {
                if ids.len() != n {
                    return Err(TrimapError::Shape(format!(
                        "{} ids for {} points",
                        ids.len(),
                        n
                    )));
                }
                ids
            }
            None => (0..n as u64).collect(),
        };
        Ok(Self { points, labels, ids })
    }

    pub fn n_points(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// Row `i` as a contiguous slice.
    pub(crate) fn point(&self, i: usize) -> &[f64] {
        self.points
            .row(i)
            .to_slice()
            .expect("dataset rows are contiguous")
    }

    /// Rescales every coordinate into `[0, 1]` using the global minimum and
    /// maximum over all entries, the way raw pixel intensities are usually
    /// brought into range.
    pub fn normalize_minmax(&self) -> Result<Dataset> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in self.points.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo <= 0.0 {
            return Err(TrimapError::Parameter(
                "cannot min-max normalize constant data".into(),
            ));
        }
        let scale = 1.0 / (hi - lo);
        let points = self.points.mapv(|v| (v - lo) * scale);
        Dataset::from_parts(points, self.labels.clone(), Some(self.ids.clone()))
    }

    /// Synthetic benchmark data: `n_blobs` isotropic unit-variance Gaussian
    /// clusters of `per_blob` points each, centered so every pair of centers
    /// is exactly `separation` apart. Labels are the blob indices.
    pub fn gaussian_blobs(
        n_blobs: usize,
        per_blob: usize,
        dim: usize,
        separation: f64,
        seed: u64,
    ) -> Result<Dataset> {
        if n_blobs == 0 || per_blob == 0 {
            return Err(TrimapError::Parameter(
                "gaussian_blobs needs at least one blob and one point per blob".into(),
            ));
        }
        if dim < n_blobs {
            return Err(TrimapError::Parameter(format!(
                "gaussian_blobs places centers on distinct axes: dim {dim} < n_blobs {n_blobs}"
            )));
        }
        if separation < 0.0 || !separation.is_finite() {
            return Err(TrimapError::Parameter(format!(
                "separation must be finite and >= 0, got {separation}"
            )));
        }
        let n = n_blobs * per_blob;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = StandardNormal;
        let mut points = Array2::zeros((n, dim));
        let mut labels = Vec::with_capacity(n);
        // Centers separation/sqrt(2) along axis b are pairwise `separation`
        // apart for every pair of blobs.
        let offset = separation / std::f64::consts::SQRT_2;
        for blob in 0..n_blobs {
            for p in 0..per_blob {
                let row = blob * per_blob + p;
                for d in 0..dim {
                    let noise: f64 = normal.sample(&mut rng);
                    points[[row, d]] = noise + if d == blob { offset } else { 0.0 };
                }
                labels.push(blob as i64);
            }
        }
        Dataset::with_labels(points, labels)
    }
}
