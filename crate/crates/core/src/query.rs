//! Choosing which pair of weight samples to turn into the next query.
//!
//! Both selectors work on the posterior samples in the free coordinates
//! `(alpha, beta)`, so distances and densities are two-dimensional.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::PosteriorSamples;
use crate::weights::RewardWeights;

pub const DEFAULT_MU: f64 = 500.0;
pub const DEFAULT_K: usize = 50;
/// Floor on the per-axis KDE bandwidth.
pub const MIN_BANDWIDTH: f64 = 1e-3;
/// Samples closer than this to a separating line count toward neither side.
pub const SIDE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum QueryMethod {
    Multiobjective { mu: f64 },
    ProbabilisticQEval { k: usize },
}

impl QueryMethod {
    pub fn name(&self) -> &'static str {
        match self {
            QueryMethod::Multiobjective { .. } => "multiobjective",
            QueryMethod::ProbabilisticQEval { .. } => "qeval",
        }
    }
}

impl Default for QueryMethod {
    fn default() -> Self {
        QueryMethod::Multiobjective { mu: DEFAULT_MU }
    }
}

/// Two sample indices and the weights they carry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryPair {
    pub first: usize,
    pub second: usize,
    pub w_first: RewardWeights,
    pub w_second: RewardWeights,
    pub method: QueryMethod,
    /// Selector objective at this pair.
    pub score: f64,
}

/// Product Gaussian kernel density estimate in `(alpha, beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    points: Vec<[f64; 2]>,
    bandwidth: [f64; 2],
}

impl Kde {
    /// Scott's rule per axis: `sigma_d * n^(-1/6)` in two dimensions.
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::TooFewSamples {
                required: 1,
                actual: 0,
            });
        }
        let n = points.len() as f64;
        let factor = libm::pow(n, -1.0 / 6.0);
        let mut bandwidth = [0.0; 2];
        for (d, bw) in bandwidth.iter_mut().enumerate() {
            let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
            let ss: f64 = points.iter().map(|p| (p[d] - mean) * (p[d] - mean)).sum();
            let var = ss / (n - 1.0).max(1.0);
            *bw = (libm::sqrt(var) * factor).max(MIN_BANDWIDTH);
        }
        Ok(Self { points, bandwidth })
    }

    pub fn from_samples(samples: &PosteriorSamples) -> Result<Self> {
        Self::new(samples.free_points())
    }

    pub fn bandwidth(&self) -> [f64; 2] {
        self.bandwidth
    }

    pub fn density(&self, at: [f64; 2]) -> f64 {
        let [h0, h1] = self.bandwidth;
        let norm = 1.0 / (2.0 * core::f64::consts::PI * h0 * h1 * self.points.len() as f64);
        let sum: f64 = self
            .points
            .iter()
            .map(|p| {
                let u = (at[0] - p[0]) / h0;
                let v = (at[1] - p[1]) / h1;
                libm::exp(-0.5 * (u * u + v * v))
            })
            .sum();
        norm * sum
    }
}

/// Density of the posterior samples at `point`.
pub fn kde_density(samples: &PosteriorSamples, point: &RewardWeights) -> Result<f64> {
    Ok(Kde::from_samples(samples)?.density(point.free()))
}

fn pair(
    samples: &PosteriorSamples,
    method: QueryMethod,
    i: usize,
    j: usize,
    score: f64,
) -> QueryPair {
    QueryPair {
        first: i,
        second: j,
        w_first: samples.samples[i],
        w_second: samples.samples[j],
        method,
        score,
    }
}

/// Maximizes `p(w_i) p(w_j) + mu * |w_i - w_j|` over all unordered pairs with
/// distinct weights. Ties keep the lexicographically first `(i, j)`.
pub fn multiobjective_select(samples: &PosteriorSamples, mu: f64) -> Result<QueryPair> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!(
            "mu must be a non-negative number, got {mu}"
        )));
    }
    let points = samples.free_points();
    let kde = Kde::new(points.clone())?;
    let density: Vec<f64> = points.iter().map(|&p| kde.density(p)).collect();

    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if points[i] == points[j] {
                continue;
            }
            let dist = libm::hypot(points[i][0] - points[j][0], points[i][1] - points[j][1]);
            let score = density[i] * density[j] + mu * dist;
            if best.is_none_or(|(_, _, b)| score > b) {
                best = Some((i, j, score));
            }
        }
    }
    let (i, j, score) = best.ok_or(Error::NoDistinctPair)?;
    Ok(pair(samples, QueryMethod::Multiobjective { mu }, i, j, score))
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    distance: f64,
    i: usize,
    j: usize,
}

fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.i.cmp(&b.i))
        .then(a.j.cmp(&b.j))
}

/// Among the `k` pairs whose perpendicular bisector passes closest to the
/// sample centroid, picks the one splitting the samples most evenly
/// (`min(side) / max(side)`). Equal ratios go to the smaller bisector
/// distance, then to the lexicographically first `(i, j)`.
pub fn probabilistic_qeval_select(samples: &PosteriorSamples, k: usize) -> Result<QueryPair> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let points = samples.free_points();
    if points.len() < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            actual: points.len(),
        });
    }
    let n = points.len() as f64;
    let centroid = [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];

    let mut candidates = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let normal = [points[i][0] - points[j][0], points[i][1] - points[j][1]];
            let len = libm::hypot(normal[0], normal[1]);
            if len == 0.0 {
                continue;
            }
            let mid = midpoint(points[i], points[j]);
            let distance =
                ((centroid[0] - mid[0]) * normal[0] + (centroid[1] - mid[1]) * normal[1]).abs()
                    / len;
            candidates.push(Candidate { distance, i, j });
        }
    }
    if candidates.is_empty() {
        return Err(Error::NoDistinctPair);
    }
    let keep = k.min(candidates.len());
    if keep < candidates.len() {
        candidates.select_nth_unstable_by(keep - 1, candidate_order);
        candidates.truncate(keep);
    }
    candidates.sort_by(|a, b| a.i.cmp(&b.i).then(a.j.cmp(&b.j)));

    let mut best: Option<(Candidate, f64)> = None;
    for c in &candidates {
        let ratio = balance(&points, c.i, c.j);
        let better = best.is_none_or(|(b, r)| {
            ratio > r || (ratio == r && c.distance < b.distance)
        });
        if better {
            best = Some((*c, ratio));
        }
    }
    let (Candidate { i, j, .. }, score) = best.expect("at least one candidate");
    Ok(pair(samples, QueryMethod::ProbabilisticQEval { k }, i, j, score))
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// `min / max` of the sample counts strictly on each side of the bisector of
/// `points[i]` and `points[j]`.
fn balance(points: &[[f64; 2]], i: usize, j: usize) -> f64 {
    let normal = [points[i][0] - points[j][0], points[i][1] - points[j][1]];
    let len = libm::hypot(normal[0], normal[1]);
    let mid = midpoint(points[i], points[j]);
    let (mut pos, mut neg) = (0usize, 0usize);
    for p in points {
        let s = ((p[0] - mid[0]) * normal[0] + (p[1] - mid[1]) * normal[1]) / len;
        if s > SIDE_TOLERANCE {
            pos += 1;
        } else if s < -SIDE_TOLERANCE {
            neg += 1;
        }
    }
    let hi = pos.max(neg);
    if hi == 0 {
        0.0
    } else {
        pos.min(neg) as f64 / hi as f64
    }
}

pub fn select_query(samples: &PosteriorSamples, method: &QueryMethod) -> Result<QueryPair> {
    match *method {
        QueryMethod::Multiobjective { mu } => multiobjective_select(samples, mu),
        QueryMethod::ProbabilisticQEval { k } => probabilistic_qeval_select(samples, k),
    }
}
