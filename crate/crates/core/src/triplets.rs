//! Linear-size triplet sampling and weighting.
//!
//! Two kinds of constraints are drawn per anchor point: nearest-neighbor
//! triplets (near point from the anchor's m nearest neighbors, far points
//! uniform among everything farther away) and uniformly random triplets that
//! carry global structure. Raw weights are the ratio of input-space
//! similarities, computed in log space because they underflow at high
//! dimension, then normalized by the maximum over the whole sampled set and
//! offset by a small positive bias.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Result, TrimapError};
use crate::math::squared_distance;
use crate::par::indexed_map;
use crate::preprocess::NeighborGraph;

/// An ordered constraint: the anchor is closer to `near` than to `far`.
/// Samplers emit unit weights; [`assign_weights`] sets the real ones.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triplet {
    pub anchor: u32,
    pub near: u32,
    pub far: u32,
    pub weight: f64,
}

/// How many triplets of each kind actually got sampled. Falls short of the
/// nominal `N*m*m'` / `N*s` only when an anchor runs out of qualifying
/// partners (for instance when its near point is already its farthest).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TripletCounts {
    pub nearest: usize,
    pub random: usize,
}

impl TripletCounts {
    pub fn total(&self) -> usize {
        self.nearest + self.random
    }
}

/// The full sampled constraint set with final weights.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
    pub seed: u64,
    pub counts: TripletCounts,
}

impl TripletSet {
    /// Diagnostic CSV dump, one `i,j,k,weight` row per triplet.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.triplets.len() * 24 + 16);
        out.push_str("i,j,k,weight\n");
        for t in &self.triplets {
            out.push_str(&format!("{},{},{},{:.17e}\n", t.anchor, t.near, t.far, t.weight));
        }
        out
    }
}

/// Independent, reproducible RNG stream per anchor so that parallel and
/// sequential sampling orders produce identical output.
fn anchor_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const REJECTION_CAP: usize = 100;

/// For each point and each of its `m` nearest neighbors `j`, samples
/// `m_prime` distinct far points uniformly among the points strictly farther
/// from the anchor than `j`. Rejection sampling up to a fixed attempt cap,
/// then an explicit enumeration of the qualifying set keeps the draw uniform
/// even on adversarial data.
pub fn sample_nn_triplets(
    data: &Dataset,
    graph: &NeighborGraph,
    m: usize,
    m_prime: usize,
    seed: u64,
) -> Result<Vec<Triplet>> {
    let n = data.n_points();
    if graph.n_points() != n {
        return Err(TrimapError::Shape(format!(
            "graph covers {} points, dataset has {n}",
            graph.n_points()
        )));
    }
    if m == 0 || m_prime == 0 {
        return Err(TrimapError::Parameter(
            "m and m_prime must be >= 1".into(),
        ));
    }
    if m > graph.k() {
        return Err(TrimapError::Parameter(format!(
            "m = {m} exceeds the {} neighbors available per point",
            graph.k()
        )));
    }

    let per_anchor = indexed_map(n, |i| {
        let mut rng = anchor_rng(seed, 2 * i as u64);
        let anchor = data.point(i);
        let mut local = Vec::with_capacity(m * m_prime);
        for rank in 0..m {
            let j = graph.neighbor_indices[[i, rank]] as usize;
            let d2_near = squared_distance(anchor, data.point(j));
            let mut chosen: Vec<u32> = Vec::with_capacity(m_prime);
            'draws: for _ in 0..m_prime {
                for _ in 0..REJECTION_CAP {
                    let k = rng.random_range(0..n);
                    if k == i || k == j || chosen.contains(&(k as u32)) {
                        continue;
                    }
                    if squared_distance(anchor, data.point(k)) > d2_near {
                        chosen.push(k as u32);
                        continue 'draws;
                    }
                }
                // Dense ties or tiny qualifying sets: enumerate what is left.
                let qualifying: Vec<u32> = (0..n)
                    .filter(|&k| {
                        k != i
                            && k != j
                            && !chosen.contains(&(k as u32))
                            && squared_distance(anchor, data.point(k)) > d2_near
                    })
                    .map(|k| k as u32)
                    .collect();
                if qualifying.is_empty() {
                    break 'draws; // shortfall for this (i, j) pair
                }
                chosen.push(qualifying[rng.random_range(0..qualifying.len())]);
            }
            for k in chosen {
                local.push(Triplet {
                    anchor: i as u32,
                    near: j as u32,
                    far: k,
                    weight: 1.0,
                });
            }
        }
        local
    });

    Ok(per_anchor.into_iter().flatten().collect())
}

/// For each point, `s` triplets whose two partners are drawn uniformly among
/// the other points, ordered so the near one really is nearer. Exact-tie
/// pairs are redrawn; anchors whose neighbors are all mutually equidistant
/// contribute a shortfall instead of spinning forever.
pub fn sample_random_triplets(data: &Dataset, s: usize, seed: u64) -> Result<Vec<Triplet>> {
    let n = data.n_points();
    if n < 3 {
        return Err(TrimapError::TooFewPoints(format!(
            "random triplets need at least 3 points, got {n}"
        )));
    }
    if s == 0 {
        return Err(TrimapError::Parameter("s must be >= 1".into()));
    }

    const REDRAW_CAP: usize = 1000;
    let per_anchor = indexed_map(n, |i| {
        let mut rng = anchor_rng(seed, 2 * i as u64 + 1);
        let anchor = data.point(i);
        let mut local = Vec::with_capacity(s);
        'draws: for _ in 0..s {
            for _ in 0..REDRAW_CAP {
                // Uniform j != i via index skipping, then k != i, j.
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                let k = loop {
                    let c = rng.random_range(0..n);
                    if c != i && c != j {
                        break c;
                    }
                };
                let d2_j = squared_distance(anchor, data.point(j));
                let d2_k = squared_distance(anchor, data.point(k));
                if d2_j == d2_k {
                    continue; // exact tie, redraw the pair
                }
                let (near, far) = if d2_j < d2_k { (j, k) } else { (k, j) };
                local.push(Triplet {
                    anchor: i as u32,
                    near: near as u32,
                    far: far as u32,
                    weight: 1.0,
                });
                continue 'draws;
            }
            // Everything the cap saw was equidistant. If any strictly ordered
            // pair exists at all, take the extremes; otherwise record a
            // shortfall for this anchor.
            let mut min = (f64::INFINITY, 0usize);
            let mut max = (f64::NEG_INFINITY, 0usize);
            for c in (0..n).filter(|&c| c != i) {
                let d2 = squared_distance(anchor, data.point(c));
                if d2 < min.0 {
                    min = (d2, c);
                }
                if d2 > max.0 {
                    max = (d2, c);
                }
            }
            if min.0 == max.0 {
                break 'draws;
            }
            local.push(Triplet {
                anchor: i as u32,
                near: min.1 as u32,
                far: max.1 as u32,
                weight: 1.0,
            });
        }
        local
    });

    Ok(per_anchor.into_iter().flatten().collect())
}

/// Computes the final weight of every triplet: the ratio of input-space
/// similarities `p(anchor, near) / p(anchor, far)`, evaluated in log space,
/// normalized once by the maximum over the union of both triplet kinds, plus
/// the bias `gamma`. Every weight lands in `(gamma, 1 + gamma]`.
pub fn assign_weights(
    nn_triplets: Vec<Triplet>,
    random_triplets: Vec<Triplet>,
    data: &Dataset,
    graph: &NeighborGraph,
    gamma: f64,
    seed: u64,
) -> Result<TripletSet> {
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(TrimapError::Parameter(format!(
            "gamma must be positive and finite, got {gamma}"
        )));
    }
    let sigma = graph.require_sigma()?;
    let counts = TripletCounts {
        nearest: nn_triplets.len(),
        random: random_triplets.len(),
    };
    let mut triplets = nn_triplets;
    triplets.extend(random_triplets);
    if triplets.is_empty() {
        return Err(TrimapError::EmptyInput("no triplets to weight".into()));
    }

    let n = data.n_points();
    // log(p_ij / p_ik) = d_ik^2/(sigma_i sigma_k) - d_ij^2/(sigma_i sigma_j);
    // this difference of quadratics stays finite where the raw similarities
    // underflow.
    let mut log_ratios = Vec::with_capacity(triplets.len());
    let mut max_log = f64::NEG_INFINITY;
    for t in &triplets {
        let (i, j, k) = (t.anchor as usize, t.near as usize, t.far as usize);
        if i >= n || j >= n || k >= n {
            return Err(TrimapError::Shape(format!(
                "triplet ({i}, {j}, {k}) indexes outside the {n}-point dataset"
            )));
        }
        let d2_near = squared_distance(data.point(i), data.point(j));
        let d2_far = squared_distance(data.point(i), data.point(k));
        let log_ratio = d2_far / (sigma[i] * sigma[k]) - d2_near / (sigma[i] * sigma[j]);
        if !log_ratio.is_finite() {
            return Err(TrimapError::NonFinite(format!(
                "weight ratio for triplet ({i}, {j}, {k})"
            )));
        }
        max_log = max_log.max(log_ratio);
        log_ratios.push(log_ratio);
    }

    for (t, log_ratio) in triplets.iter_mut().zip(&log_ratios) {
        t.weight = (log_ratio - max_log).exp() + gamma;
    }

    Ok(TripletSet { triplets, seed, counts })
}

/// Runs the whole sampling stage the way the optimizer consumes it: both
/// samplers with `m` capped for small datasets, weighted over the union.
pub fn sample_triplets(
    data: &Dataset,
    graph: &NeighborGraph,
    m: usize,
    m_prime: usize,
    s: usize,
    gamma: f64,
    seed: u64,
) -> Result<TripletSet> {
    let m_eff = m.min(data.n_points().saturating_sub(2)).max(1);
    let nn = sample_nn_triplets(data, graph, m_eff, m_prime, seed)?;
    let random = sample_random_triplets(data, s, seed)?;
    assign_weights(nn, random, data, graph, gamma, seed)
}
