//! Dataset transformations probing global-structure preservation, and a
//! runner that embeds before/after each transformation and scores both.
//!
//! The transformations mirror what happens to real datasets: seeing only a
//! sample (random subset), caring about a subpopulation (class subset),
//! measurement errors (injected outlier), and structure at several scales
//! (the dataset duplicated and shifted far away). Shift magnitudes are
//! expressed as multiples of a diameter estimate so the tests are unit-free.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{kmeans, label_agreement, procrustes_residual};
use crate::dataset::Dataset;
use crate::error::{Result, TrimapError};
use crate::eval::{precision_recall, PrCurve, DEFAULT_K_MAX, DEFAULT_RELEVANT_K};
use crate::math::squared_distance;
use crate::optimizer::{embed, EmbedConfig, Embedding};

/// The four stress transformations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum StressTest {
    SubsetRandom,
    SubsetClasses,
    Outlier,
    MultipleScales,
}

impl StressTest {
    pub const ALL: [StressTest; 4] = [
        StressTest::SubsetRandom,
        StressTest::SubsetClasses,
        StressTest::Outlier,
        StressTest::MultipleScales,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StressTest::SubsetRandom => "subset_random",
            StressTest::SubsetClasses => "subset_classes",
            StressTest::Outlier => "outlier",
            StressTest::MultipleScales => "multiple_scales",
        }
    }
}

impl std::str::FromStr for StressTest {
    type Err = TrimapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subset_random" => Ok(StressTest::SubsetRandom),
            "subset_classes" => Ok(StressTest::SubsetClasses),
            "outlier" => Ok(StressTest::Outlier),
            "multiple_scales" => Ok(StressTest::MultipleScales),
            other => Err(TrimapError::Parameter(format!(
                "unknown stress test '{other}' (expected subset_random, subset_classes, \
                 outlier or multiple_scales)"
            ))),
        }
    }
}

/// Knobs of the transformations themselves (the embedding knobs live in
/// [`EmbedConfig`]).
#[derive(Clone, Debug)]
pub struct StressOptions {
    /// Fraction kept by the random-subset test.
    pub subset_fraction: f64,
    /// Classes kept by the class-subset test; `None` keeps the even labels.
    pub keep_labels: Option<BTreeSet<i64>>,
    /// Which point the outlier test shifts.
    pub outlier_index: usize,
    /// Outlier shift in diameter units.
    pub outlier_factor: f64,
    /// Duplicate-copy shift in diameter units.
    pub duplicate_factor: f64,
    /// Seed for the transformations (independent of the embedding seed).
    pub transform_seed: u64,
}

impl Default for StressOptions {
    fn default() -> Self {
        Self {
            subset_fraction: 0.1,
            keep_labels: None,
            outlier_index: 0,
            outlier_factor: 5.0,
            duplicate_factor: 3.0,
            transform_seed: 0,
        }
    }
}

/// Before/after result of one stress test.
#[derive(Clone, Debug)]
pub struct StressReport {
    pub test: StressTest,
    pub baseline: (Embedding, PrCurve),
    pub transformed: (Embedding, PrCurve),
    /// Test-specific numbers; see [`run_stress_suite`].
    pub verdict_metrics: BTreeMap<String, f64>,
}

/// Twice the largest distance from the centroid; never smaller than any
/// pairwise distance in the data.
pub fn diameter_estimate(points: ArrayView2<'_, f64>) -> f64 {
    let n = points.nrows();
    let d = points.ncols();
    let mut centroid = vec![0.0; d];
    for row in points.rows() {
        for (c, v) in centroid.iter_mut().zip(row) {
            *c += v;
        }
    }
    for c in centroid.iter_mut() {
        *c /= n as f64;
    }
    let max_d2 = points
        .rows()
        .into_iter()
        .map(|row| {
            let mut acc = 0.0;
            for (v, c) in row.iter().zip(&centroid) {
                acc += (v - c) * (v - c);
            }
            acc
        })
        .fold(0.0f64, f64::max);
    2.0 * max_d2.sqrt()
}

fn unit_direction(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `ceil(fraction * n)`, snapping near-integer products first so binary
/// fractions like 0.1 * 70000 yield 7000 rather than 7001.
fn ceil_count(fraction: f64, n: usize) -> usize {
    let raw = fraction * n as f64;
    if (raw - raw.round()).abs() < 1e-9 {
        raw.round() as usize
    } else {
        raw.ceil() as usize
    }
}

pub(crate) fn subset_indices(n: usize, keep: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..keep.min(n) {
        let j = rng.random_range(i..n);
        order.swap(i, j);
    }
    let mut kept: Vec<usize> = order.into_iter().take(keep).collect();
    kept.sort_unstable();
    kept
}

fn take_rows(data: &Dataset, rows: &[usize]) -> Result<Dataset> {
    let mut points = Array2::zeros((rows.len(), data.dim()));
    for (out, &src) in rows.iter().enumerate() {
        points.row_mut(out).assign(&data.points().row(src));
    }
    let labels = data
        .labels()
        .map(|l| rows.iter().map(|&i| l[i]).collect::<Vec<_>>());
    let ids = rows.iter().map(|&i| data.ids()[i]).collect();
    Dataset::from_parts(points, labels, Some(ids))
}

/// Keeps `ceil(fraction * N)` points drawn uniformly without replacement,
/// in their original order. Deterministic per seed.
pub fn subset_random(data: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if fraction <= 0.0 || fraction >= 1.0 || fraction.is_nan() {
        return Err(TrimapError::Parameter(format!(
            "fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = data.n_points();
    let keep = ceil_count(fraction, n);
    if keep < 3 {
        return Err(TrimapError::TooFewPoints(format!(
            "fraction {fraction} of {n} points leaves only {keep}"
        )));
    }
    take_rows(data, &subset_indices(n, keep, seed))
}

/// Retains exactly the points whose label is in `keep`, original order
/// preserved.
pub fn subset_classes(data: &Dataset, keep: &BTreeSet<i64>) -> Result<Dataset> {
    let labels = data.labels().ok_or(TrimapError::MissingLabels)?;
    if keep.is_empty() {
        return Err(TrimapError::Parameter("keep_labels is empty".into()));
    }
    let present: BTreeSet<i64> = labels.iter().copied().collect();
    for label in keep {
        if !present.contains(label) {
            return Err(TrimapError::Parameter(format!(
                "label {label} does not occur in the dataset"
            )));
        }
    }
    let rows: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| keep.contains(l))
        .map(|(i, _)| i)
        .collect();
    take_rows(data, &rows)
}

/// Shifts one point far away in a seeded random direction, by
/// `magnitude_factor` diameter estimates. Everything else is untouched.
pub fn inject_outlier(
    data: &Dataset,
    point_index: usize,
    magnitude_factor: f64,
    seed: u64,
) -> Result<Dataset> {
    if point_index >= data.n_points() {
        return Err(TrimapError::Parameter(format!(
            "point index {point_index} out of bounds for {} points",
            data.n_points()
        )));
    }
    if magnitude_factor < 0.0 || !magnitude_factor.is_finite() {
        return Err(TrimapError::Parameter(format!(
            "magnitude factor must be finite and >= 0, got {magnitude_factor}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction = unit_direction(data.dim(), &mut rng);
    let r = magnitude_factor * diameter_estimate(data.points());
    let mut points = data.points().to_owned();
    for (c, dir) in direction.iter().enumerate() {
        points[[point_index, c]] += r * dir;
    }
    Dataset::from_parts(
        points,
        data.labels().map(|l| l.to_vec()),
        Some(data.ids().to_vec()),
    )
}

/// Appends a copy of every point shifted by one fixed random vector of
/// length `magnitude_factor` diameter estimates, so the output holds two
/// far-apart copies of the same structure. Labels are duplicated; copied
/// points get ids offset by the original point count, so `id < N` marks
/// copy 0 for default ids. The first `N` rows are the original dataset,
/// untouched.
pub fn duplicate_shift(data: &Dataset, magnitude_factor: f64, seed: u64) -> Result<Dataset> {
    if magnitude_factor < 0.0 || !magnitude_factor.is_finite() {
        return Err(TrimapError::Parameter(format!(
            "magnitude factor must be finite and >= 0, got {magnitude_factor}"
        )));
    }
    let n = data.n_points();
    let d = data.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction = unit_direction(d, &mut rng);
    let r = magnitude_factor * diameter_estimate(data.points());

    let mut points = Array2::zeros((2 * n, d));
    for i in 0..n {
        for c in 0..d {
            points[[i, c]] = data.points()[[i, c]];
            points[[n + i, c]] = data.points()[[i, c]] + r * direction[c];
        }
    }
    let labels = data.labels().map(|l| {
        let mut out = l.to_vec();
        out.extend_from_slice(l);
        out
    });
    let mut ids = data.ids().to_vec();
    ids.extend(data.ids().iter().map(|&id| id + n as u64));
    Dataset::from_parts(points, labels, Some(ids))
}

fn pr_for(source: &Dataset, coords: ArrayView2<'_, f64>) -> Result<PrCurve> {
    let n = source.n_points();
    let relevant_k = DEFAULT_RELEVANT_K.min(n - 1);
    let k_max = DEFAULT_K_MAX.min(n - 1);
    precision_recall(source, coords, relevant_k, k_max)
}

fn class_centroids(
    coords: ArrayView2<'_, f64>,
    labels: &[i64],
    classes: &BTreeSet<i64>,
) -> Array2<f64> {
    let d = coords.ncols();
    let mut out = Array2::zeros((classes.len(), d));
    for (row, class) in classes.iter().enumerate() {
        let members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| *l == class)
            .map(|(i, _)| i)
            .collect();
        for &m in &members {
            for c in 0..d {
                out[[row, c]] += coords[[m, c]] / members.len() as f64;
            }
        }
    }
    out
}

/// Procrustes residual between the centroid constellations of the classes
/// shared by the two embeddings. Ground-truth labels when present, else
/// two-means pseudo-labels computed on the baseline embedding and carried
/// to the subset by index.
fn subset_constellation_residual(
    baseline: &Embedding,
    baseline_labels: Option<&[i64]>,
    transformed: &Embedding,
    kept_rows: &[usize],
    seed: u64,
) -> Result<f64> {
    let owned_pseudo;
    let labels: &[i64] = match baseline_labels {
        Some(l) => l,
        None => {
            owned_pseudo = kmeans(baseline.coords.view(), 2, seed)?
                .into_iter()
                .map(|c| c as i64)
                .collect::<Vec<_>>();
            &owned_pseudo
        }
    };
    let subset_labels: Vec<i64> = kept_rows.iter().map(|&i| labels[i]).collect();
    let shared: BTreeSet<i64> = subset_labels.iter().copied().collect();
    if shared.is_empty() {
        return Err(TrimapError::EmptyInput("no shared classes".into()));
    }
    let base = class_centroids(baseline.coords.view(), labels, &shared);
    let trans = class_centroids(transformed.coords.view(), &subset_labels, &shared);
    procrustes_residual(base.view(), trans.view())
}

fn nn_distances(coords: ArrayView2<'_, f64>) -> Vec<f64> {
    let n = coords.nrows();
    let rows: Vec<&[f64]> = (0..n)
        .map(|i| coords.row(i).to_slice().expect("contiguous rows"))
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| squared_distance(rows[i], rows[j]))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Embeds the dataset and each requested transformation of it with the same
/// configuration, scores both embeddings, and computes per-test verdict
/// metrics:
///
/// * subset tests: `procrustes_residual` of the shared-class centroid
///   constellations (0 = layout fully preserved);
/// * `outlier`: `nn_distance_ratio`, the shifted point's embedded
///   nearest-neighbor distance over the median of all embedded
///   nearest-neighbor distances;
/// * `multiple_scales`: `copy_agreement`, two-means agreement with the copy
///   channel, plus per-copy label agreements when labels exist.
pub fn run_stress_suite(
    data: &Dataset,
    config: &EmbedConfig,
    tests: &[StressTest],
    options: &StressOptions,
) -> Result<Vec<StressReport>> {
    let baseline_emb = embed(data, config)?;
    let baseline_pr = pr_for(data, baseline_emb.coords.view())?;

    let mut reports = Vec::with_capacity(tests.len());
    for &test in tests {
        let transformed_data = match test {
            StressTest::SubsetRandom => {
                subset_random(data, options.subset_fraction, options.transform_seed)?
            }
            StressTest::SubsetClasses => {
                let keep = match &options.keep_labels {
                    Some(keep) => keep.clone(),
                    None => {
                        let labels = data.labels().ok_or(TrimapError::MissingLabels)?;
                        let evens: BTreeSet<i64> =
                            labels.iter().copied().filter(|l| l % 2 == 0).collect();
                        if evens.is_empty() {
                            return Err(TrimapError::Parameter(
                                "no even labels to keep; pass keep_labels explicitly".into(),
                            ));
                        }
                        evens
                    }
                };
                subset_classes(data, &keep)?
            }
            StressTest::Outlier => inject_outlier(
                data,
                options.outlier_index,
                options.outlier_factor,
                options.transform_seed,
            )?,
            StressTest::MultipleScales => {
                duplicate_shift(data, options.duplicate_factor, options.transform_seed)?
            }
        };

        let transformed_emb = embed(&transformed_data, config)?;
        let transformed_pr = pr_for(&transformed_data, transformed_emb.coords.view())?;

        let mut verdict_metrics = BTreeMap::new();
        match test {
            StressTest::SubsetRandom => {
                let n = data.n_points();
                let keep = ceil_count(options.subset_fraction, n);
                let kept = subset_indices(n, keep, options.transform_seed);
                let residual = subset_constellation_residual(
                    &baseline_emb,
                    data.labels(),
                    &transformed_emb,
                    &kept,
                    config.seed,
                )?;
                verdict_metrics.insert("procrustes_residual".into(), residual);
            }
            StressTest::SubsetClasses => {
                let labels = data.labels().ok_or(TrimapError::MissingLabels)?;
                let kept: Vec<usize> = {
                    let sub_labels: BTreeSet<i64> = transformed_data
                        .labels()
                        .expect("class subset keeps labels")
                        .iter()
                        .copied()
                        .collect();
                    labels
                        .iter()
                        .enumerate()
                        .filter(|(_, l)| sub_labels.contains(l))
                        .map(|(i, _)| i)
                        .collect()
                };
                let residual = subset_constellation_residual(
                    &baseline_emb,
                    data.labels(),
                    &transformed_emb,
                    &kept,
                    config.seed,
                )?;
                verdict_metrics.insert("procrustes_residual".into(), residual);
            }
            StressTest::Outlier => {
                let dists = nn_distances(transformed_emb.coords.view());
                let ratio = dists[options.outlier_index] / median(dists.clone()).max(1e-300);
                verdict_metrics.insert("nn_distance_ratio".into(), ratio);
            }
            StressTest::MultipleScales => {
                let n = data.n_points();
                let assignment = kmeans(transformed_emb.coords.view(), 2, config.seed)?;
                let copy_labels: Vec<i64> =
                    (0..2 * n).map(|i| (i >= n) as i64).collect();
                let agreement = label_agreement(&assignment, &copy_labels)?;
                verdict_metrics.insert("copy_agreement".into(), agreement);

                if let Some(labels) = data.labels() {
                    let classes: BTreeSet<i64> = labels.iter().copied().collect();
                    for copy in 0..2usize {
                        let range = copy * n..(copy + 1) * n;
                        let half = transformed_emb
                            .coords
                            .view()
                            .slice_move(ndarray::s![range, ..]);
                        let half_assignment = kmeans(half, classes.len(), config.seed)?;
                        let agreement = label_agreement(&half_assignment, labels)?;
                        verdict_metrics
                            .insert(format!("within_copy_{copy}_agreement"), agreement);
                    }
                }
            }
        }

        reports.push(StressReport {
            test,
            baseline: (baseline_emb.clone(), baseline_pr.clone()),
            transformed: (transformed_emb, transformed_pr),
            verdict_metrics,
        });
    }
    Ok(reports)
}

/// The JSON document emitted by the CLI: one object per test with both AUCs
/// and the verdict metrics.
pub fn reports_to_json(reports: &[StressReport]) -> serde_json::Value {
    let entries: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            serde_json::json!({
                "test": r.test.name(),
                "baseline_auc": r.baseline.1.auc,
                "transformed_auc": r.transformed.1.auc,
                "verdict_metrics": r.verdict_metrics,
            })
        })
        .collect();
    serde_json::Value::Array(entries)
}
