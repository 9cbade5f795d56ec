//! The triplet objective, its analytic gradient, embedding initialization,
//! and full-batch gradient descent with an adaptive, monotone step size.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Result, TrimapError};
use crate::math::{self, KernelParams};
use crate::par::chunked_map;
use crate::preprocess::{compute_sigma, exact_knn, pca_reduce, NeighborGraph, Pca};
use crate::triplets::{sample_triplets, TripletCounts, Triplet, TripletSet};

/// How the low-dimensional coordinates are seeded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[cfg_attr(feature = "cli", derive(clap::ValueEnum))]
pub enum InitMethod {
    /// Top principal-component scores, rescaled to a small spread.
    Pca,
    /// Seeded isotropic Gaussian noise with the same small spread.
    Random,
}

/// Every tunable of the embedding pipeline. The defaults are the method's
/// standard operating point: `t = t' = 2`, `m = 50`, `m' = 10`, `s = 5`,
/// `gamma = 0.001`, PCA preprocessing to 50 dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    /// Output dimensionality.
    pub out_dims: usize,
    /// Loss-transformation parameter; larger values damp violated triplets
    /// harder (each triplet contributes at most `1/(t-1)` for `t > 1`).
    pub t: f64,
    /// Tail-heaviness of the embedded-space similarity kernel.
    pub t_prime: f64,
    /// Nearest neighbors per anchor contributing near points.
    pub m: usize,
    /// Far points sampled per (anchor, near) pair.
    pub m_prime: usize,
    /// Random triplets per anchor.
    pub s: usize,
    /// Positive bias added to normalized triplet weights.
    pub gamma: f64,
    /// Descent iterations.
    pub iterations: usize,
    /// Seed for every random choice in the pipeline.
    pub seed: u64,
    pub init: InitMethod,
    /// Initial learning rate of the adaptive schedule.
    pub lr_initial: f64,
    /// Input data above this dimensionality is PCA-reduced first.
    pub pca_dim: usize,
    /// Accumulate the gradient with an unordered parallel reduction instead
    /// of the bit-deterministic in-order fold. Off by default; when on, runs
    /// agree with the deterministic mode to about 1e-6 relative.
    pub relaxed_accumulation: bool,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            out_dims: 2,
            t: 2.0,
            t_prime: 2.0,
            m: 50,
            m_prime: 10,
            s: 5,
            gamma: 0.001,
            iterations: 400,
            seed: 42,
            init: InitMethod::Pca,
            lr_initial: 1.0,
            pca_dim: 50,
            relaxed_accumulation: false,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        KernelParams::new(self.t, self.t_prime)?;
        if self.out_dims == 0 {
            return Err(TrimapError::Parameter("out_dims must be >= 1".into()));
        }
        if self.m == 0 || self.m_prime == 0 || self.s == 0 {
            return Err(TrimapError::Parameter(
                "m, m_prime and s must be >= 1".into(),
            ));
        }
        if self.gamma <= 0.0 || !self.gamma.is_finite() {
            return Err(TrimapError::Parameter(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        if self.iterations == 0 {
            return Err(TrimapError::Parameter("iterations must be >= 1".into()));
        }
        if self.lr_initial <= 0.0 || !self.lr_initial.is_finite() {
            return Err(TrimapError::Parameter(format!(
                "lr_initial must be positive and finite, got {}",
                self.lr_initial
            )));
        }
        if self.pca_dim == 0 {
            return Err(TrimapError::Parameter("pca_dim must be >= 1".into()));
        }
        Ok(())
    }
}

/// The result of a run: final coordinates plus everything needed to audit it.
#[derive(Clone, Debug)]
pub struct Embedding {
    /// `N x out_dims` low-dimensional coordinates.
    pub coords: Array2<f64>,
    /// Total loss per iteration, entry 0 being the initial loss. Never
    /// increases: rejected steps re-record the retained loss.
    pub loss_trace: Vec<f64>,
    /// Learning rate in effect after each recorded iteration.
    pub lr_trace: Vec<f64>,
    /// Snapshot of the configuration that produced this embedding.
    pub config: EmbedConfig,
    /// How many triplets of each kind were used.
    pub counts: TripletCounts,
}

impl Embedding {
    /// Trace CSV: `iteration,loss,learning_rate` per recorded iteration.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,loss,learning_rate\n");
        for (i, (loss, lr)) in self.loss_trace.iter().zip(&self.lr_trace).enumerate() {
            out.push_str(&format!("{i},{loss:.17e},{lr:.17e}\n"));
        }
        out
    }
}

const CHUNK: usize = 4096;

/// Per-triplet loss and the derivatives of the loss with respect to the two
/// squared distances. Uses `d exp_t(x)/dx = exp_t(x)^t` and
/// `d log_t(1+r)/dr = (1+r)^(-t)`; the near similarity is floored whenever it
/// lands in a denominator.
#[inline]
fn triplet_terms(w: f64, d2_near: f64, d2_far: f64, t: f64, t_prime: f64) -> (f64, f64, f64) {
    let q_near = math::exp_t_raw(-d2_near, t_prime);
    let q_far = math::exp_t_raw(-d2_far, t_prime);
    let q_near_f = q_near.max(math::SIMILARITY_FLOOR);
    let ratio = q_far / q_near_f;
    let loss = w * math::log_t_raw(1.0 + ratio, t);

    let one_plus = 1.0 + ratio;
    let damp = if (t - 1.0).abs() < math::T_ONE_TOL {
        w / one_plus
    } else if t == 2.0 {
        w / (one_plus * one_plus)
    } else if t == 0.0 {
        w
    } else {
        w * one_plus.powf(-t)
    };

    // d(ratio)/d(d2_near) = q_far * q_near^(t'-2),
    // d(ratio)/d(d2_far)  = -q_far^t' / q_near.
    let (near_term, far_term) = if t_prime == 2.0 {
        (q_far, q_far * q_far / q_near_f)
    } else if (t_prime - 1.0).abs() < math::T_ONE_TOL {
        (ratio, ratio)
    } else {
        (
            q_far * q_near_f.powf(t_prime - 2.0),
            q_far.powf(t_prime) / q_near_f,
        )
    };
    (loss, damp * near_term, -(damp * far_term))
}

fn chunk_loss(coords: &[f64], d: usize, chunk: &[Triplet], t: f64, t_prime: f64) -> f64 {
    let mut acc = 0.0;
    for tr in chunk {
        let i = tr.anchor as usize * d;
        let j = tr.near as usize * d;
        let k = tr.far as usize * d;
        let d2_near = math::squared_distance(&coords[i..i + d], &coords[j..j + d]);
        let d2_far = math::squared_distance(&coords[i..i + d], &coords[k..k + d]);
        acc += triplet_terms(tr.weight, d2_near, d2_far, t, t_prime).0;
    }
    acc
}

fn chunk_loss_grad(
    coords: &[f64],
    n: usize,
    d: usize,
    chunk: &[Triplet],
    t: f64,
    t_prime: f64,
) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = vec![0.0; n * d];
    for tr in chunk {
        let i = tr.anchor as usize * d;
        let j = tr.near as usize * d;
        let k = tr.far as usize * d;
        let d2_near = math::squared_distance(&coords[i..i + d], &coords[j..j + d]);
        let d2_far = math::squared_distance(&coords[i..i + d], &coords[k..k + d]);
        let (l, g_near, g_far) = triplet_terms(tr.weight, d2_near, d2_far, t, t_prime);
        loss += l;
        for c in 0..d {
            let pull = 2.0 * g_near * (coords[i + c] - coords[j + c]);
            let push = 2.0 * g_far * (coords[i + c] - coords[k + c]);
            grad[i + c] += pull + push;
            grad[j + c] -= pull;
            grad[k + c] -= push;
        }
    }
    (loss, grad)
}

fn check_coords(coords: ArrayView2<'_, f64>) -> Result<()> {
    for (i, row) in coords.rows().into_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(TrimapError::NonFinite(format!(
                "embedding point {i} has a non-finite coordinate"
            )));
        }
    }
    Ok(())
}

fn check_indices(coords: ArrayView2<'_, f64>, set: &TripletSet) -> Result<()> {
    let n = coords.nrows() as u32;
    for tr in &set.triplets {
        if tr.anchor >= n || tr.near >= n || tr.far >= n {
            return Err(TrimapError::Shape(format!(
                "triplet ({}, {}, {}) indexes outside the {n}-point embedding",
                tr.anchor, tr.near, tr.far
            )));
        }
    }
    Ok(())
}

/// Total weighted triplet loss of the coordinates. Deterministic: chunk
/// partial sums are folded in chunk order regardless of thread count.
pub fn total_loss(
    coords: ArrayView2<'_, f64>,
    set: &TripletSet,
    params: &KernelParams,
) -> Result<f64> {
    check_coords(coords)?;
    check_indices(coords, set)?;
    let d = coords.ncols();
    let flat = coords.to_owned().into_raw_vec_and_offset().0;
    let partials = chunked_map(&set.triplets, CHUNK, |chunk| {
        chunk_loss(&flat, d, chunk, params.t, params.t_prime)
    });
    Ok(partials.into_iter().sum())
}

/// Analytic gradient of [`total_loss`] with the same deterministic
/// accumulation order.
pub fn loss_gradient(
    coords: ArrayView2<'_, f64>,
    set: &TripletSet,
    params: &KernelParams,
) -> Result<Array2<f64>> {
    Ok(loss_and_gradient(coords, set, params)?.1)
}

/// Loss and gradient in one pass.
pub fn loss_and_gradient(
    coords: ArrayView2<'_, f64>,
    set: &TripletSet,
    params: &KernelParams,
) -> Result<(f64, Array2<f64>)> {
    check_coords(coords)?;
    check_indices(coords, set)?;
    let (n, d) = (coords.nrows(), coords.ncols());
    let flat = coords.to_owned().into_raw_vec_and_offset().0;
    let (loss, grad) = accumulate_in_order(&flat, n, d, set, params);
    Ok((
        loss,
        Array2::from_shape_vec((n, d), grad).expect("gradient has n*d entries"),
    ))
}

fn accumulate_in_order(
    flat: &[f64],
    n: usize,
    d: usize,
    set: &TripletSet,
    params: &KernelParams,
) -> (f64, Vec<f64>) {
    let partials = chunked_map(&set.triplets, CHUNK, |chunk| {
        chunk_loss_grad(flat, n, d, chunk, params.t, params.t_prime)
    });
    let mut loss = 0.0;
    let mut grad = vec![0.0; n * d];
    for (partial_loss, partial_grad) in partials {
        loss += partial_loss;
        for (g, p) in grad.iter_mut().zip(&partial_grad) {
            *g += p;
        }
    }
    (loss, grad)
}

/// Gradient with an unordered parallel reduction. Faster joins, but the
/// floating-point accumulation order depends on scheduling; agreement with
/// [`loss_gradient`] is about 1e-6 relative. Falls back to the deterministic
/// path when the `parallel` feature is off.
pub fn loss_gradient_relaxed(
    coords: ArrayView2<'_, f64>,
    set: &TripletSet,
    params: &KernelParams,
) -> Result<Array2<f64>> {
    check_coords(coords)?;
    check_indices(coords, set)?;
    let (n, d) = (coords.nrows(), coords.ncols());
    let flat = coords.to_owned().into_raw_vec_and_offset().0;

    #[cfg(feature = "parallel")]
    let grad = {
        use rayon::prelude::*;
        set.triplets
            .par_chunks(CHUNK)
            .map(|chunk| chunk_loss_grad(&flat, n, d, chunk, params.t, params.t_prime).1)
            .reduce(
                || vec![0.0; n * d],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        *x += y;
                    }
                    a
                },
            )
    };
    #[cfg(not(feature = "parallel"))]
    let grad = accumulate_in_order(&flat, n, d, set, params).1;

    Ok(Array2::from_shape_vec((n, d), grad).expect("gradient has n*d entries"))
}

/// Spread of the initial coordinates along each output axis.
const INIT_SCALE: f64 = 1e-2;

/// Seeds the embedding: PCA scores of the (already reduced) data with each
/// column rescaled to standard deviation `1e-2`, or seeded Gaussian noise of
/// that same spread.
pub fn init_embedding(
    data: &Dataset,
    out_dims: usize,
    init: InitMethod,
    seed: u64,
) -> Result<Array2<f64>> {
    if out_dims == 0 {
        return Err(TrimapError::Parameter("out_dims must be >= 1".into()));
    }
    let n = data.n_points();
    match init {
        InitMethod::Pca => {
            if out_dims > data.dim() {
                return Err(TrimapError::Parameter(format!(
                    "pca init needs out_dims <= data dimension ({} > {})",
                    out_dims,
                    data.dim()
                )));
            }
            let pca = Pca::fit(data.points(), out_dims)?;
            let mut scores = pca.transform(data.points());
            for mut col in scores.columns_mut() {
                let mean = col.sum() / n as f64;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (n - 1) as f64;
                let std = var.sqrt();
                if std > 1e-15 {
                    let k = INIT_SCALE / std;
                    col.mapv_inplace(|v| v * k);
                }
            }
            Ok(scores)
        }
        InitMethod::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, INIT_SCALE).expect("valid std");
            let mut values = Vec::with_capacity(n * out_dims);
            for _ in 0..n * out_dims {
                values.push(normal.sample(&mut rng));
            }
            Ok(Array2::from_shape_vec((n, out_dims), values).expect("n*d values"))
        }
    }
}

/// The sampling half of the pipeline: optional PCA reduction, k-NN with
/// per-point scales, then the weighted triplet set. `embed` runs this first;
/// the CLI reuses it for triplet dumps so the dump matches the run exactly.
pub fn prepare_triplets(
    data: &Dataset,
    config: &EmbedConfig,
) -> Result<(Dataset, NeighborGraph, TripletSet)> {
    config.validate()?;
    let n = data.n_points();
    if n < 3 {
        return Err(TrimapError::TooFewPoints(format!(
            "embedding needs at least 3 points, got {n}"
        )));
    }
    let working = if data.dim() > config.pca_dim {
        pca_reduce(data, config.pca_dim)?
    } else {
        data.clone()
    };
    let m_eff = config.m.min(n - 2).max(1);
    // Neighbor lists serve both the sampler (m) and the scale window (20).
    let k = m_eff.max(20).min(n - 1);
    let graph = compute_sigma(exact_knn(&working, k)?)?;
    let set = sample_triplets(
        &working,
        &graph,
        config.m,
        config.m_prime,
        config.s,
        config.gamma,
        config.seed,
    )?;
    Ok((working, graph, set))
}

const LR_GROWTH: f64 = 1.05;
const LR_SHRINK: f64 = 0.5;
const LR_MAX_FACTOR: f64 = 50.0;
const EARLY_STOP_REL: f64 = 1e-7;
const EARLY_STOP_PATIENCE: usize = 20;
const DIVERGENCE_FACTOR: f64 = 1e3;

/// Runs the full pipeline and the descent loop.
///
/// The schedule is full-batch gradient descent with a global step: a step
/// that lowers the loss is kept and the step size grows by 5% (capped at 50x
/// the initial value); a step that raises it is reverted and the step size
/// halves. The recorded loss therefore never increases. Stops early once 20
/// consecutive accepted steps each improve the loss by less than 1e-7
/// relative.
pub fn embed(data: &Dataset, config: &EmbedConfig) -> Result<Embedding> {
    let (working, _graph, set) = prepare_triplets(data, config)?;
    let params = KernelParams::new(config.t, config.t_prime)?;
    let coords = init_embedding(&working, config.out_dims, config.init, config.seed)?;
    descend(coords, &set, &params, config)
}

fn descend(
    coords: Array2<f64>,
    set: &TripletSet,
    params: &KernelParams,
    config: &EmbedConfig,
) -> Result<Embedding> {
    let (n, d) = (coords.nrows(), coords.ncols());
    check_indices(coords.view(), set)?;
    let mut flat = coords.into_raw_vec_and_offset().0;

    let eval = |flat: &[f64]| -> (f64, Vec<f64>) {
        if config.relaxed_accumulation {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                return set
                    .triplets
                    .par_chunks(CHUNK)
                    .map(|c| chunk_loss_grad(flat, n, d, c, params.t, params.t_prime))
                    .reduce(
                        || (0.0, vec![0.0; n * d]),
                        |(la, mut ga), (lb, gb)| {
                            for (x, y) in ga.iter_mut().zip(&gb) {
                                *x += y;
                            }
                            (la + lb, ga)
                        },
                    );
            }
        }
        accumulate_in_order(flat, n, d, set, params)
    };

    let (mut loss, mut grad) = eval(&flat);
    if !loss.is_finite() {
        return Err(TrimapError::NonFinite("initial loss".into()));
    }
    let initial_loss = loss;
    let lr0 = config.lr_initial;
    let mut lr = lr0;
    let mut loss_trace = Vec::with_capacity(config.iterations + 1);
    let mut lr_trace = Vec::with_capacity(config.iterations + 1);
    loss_trace.push(loss);
    lr_trace.push(lr);
    let mut patience = 0usize;
    let mut proposal = vec![0.0; n * d];

    for iteration in 1..=config.iterations {
        let mut finite = true;
        for ((p, x), g) in proposal.iter_mut().zip(&flat).zip(&grad) {
            *p = x - lr * g;
            finite &= p.is_finite();
        }

        let mut accepted = false;
        if finite {
            let (new_loss, new_grad) = eval(&proposal);
            if new_loss.is_finite() && new_loss <= loss {
                let rel = (loss - new_loss) / loss.max(f64::MIN_POSITIVE);
                std::mem::swap(&mut flat, &mut proposal);
                if new_loss < loss {
                    lr = (lr * LR_GROWTH).min(lr0 * LR_MAX_FACTOR);
                }
                loss = new_loss;
                grad = new_grad;
                accepted = true;
                patience = if rel < EARLY_STOP_REL { patience + 1 } else { 0 };
            }
        }
        if !accepted {
            lr *= LR_SHRINK;
        }

        if flat.iter().any(|v| !v.is_finite()) {
            return Err(TrimapError::NonFinite(format!(
                "coordinates at iteration {iteration}"
            )));
        }
        if loss > DIVERGENCE_FACTOR * initial_loss.max(f64::MIN_POSITIVE) {
            loss_trace.push(loss);
            return Err(TrimapError::Diverged {
                iteration,
                loss,
                initial: initial_loss,
                trace: loss_trace,
            });
        }

        loss_trace.push(loss);
        lr_trace.push(lr);
        if patience >= EARLY_STOP_PATIENCE {
            break;
        }
    }

    Ok(Embedding {
        coords: Array2::from_shape_vec((n, d), flat).expect("n*d coordinates"),
        loss_trace,
        lr_trace,
        config: config.clone(),
        counts: set.counts,
    })
}
