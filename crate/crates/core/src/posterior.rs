//! Bayesian posterior over reward weights.
//!
//! Each answered query contributes a sigmoid likelihood in the reward gap
//! between the two trajectory sets. The prior is uniform over the part of
//! the simplex where every weight is at least `min_component`. Sampling runs
//! an adaptive Metropolis chain in the free coordinates `(alpha, beta)`.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landing::{LandingModel, TrajectorySet};
use crate::math::{dot3, log_sigmoid, sigmoid};
use crate::weights::RewardWeights;

pub const DEFAULT_MIN_COMPONENT: f64 = 1e-4;

/// Default multiplier on the reward gap inside the sigmoid.
pub const DEFAULT_RESPONSE_PRECISION: f64 = 200.0;

/// Which set the expert preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Response {
    /// `I = +1`
    A,
    /// `I = -1`
    B,
}

impl Response {
    pub fn sign(self) -> f64 {
        match self {
            Response::A => 1.0,
            Response::B => -1.0,
        }
    }

    pub fn from_sign(sign: i32) -> Result<Self> {
        match sign {
            1 => Ok(Response::A),
            -1 => Ok(Response::B),
            other => Err(Error::InvalidArgument(alloc::format!(
                "response must be +1 or -1, got {other}"
            ))),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Response::A => Response::B,
            Response::B => Response::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub tau_a: TrajectorySet,
    pub tau_b: TrajectorySet,
    pub response: Response,
}

impl PreferenceRecord {
    /// Both sets must be non-empty and start from the same initial states.
    pub fn new(tau_a: TrajectorySet, tau_b: TrajectorySet, response: Response) -> Result<Self> {
        if tau_a.is_empty() || tau_b.is_empty() {
            return Err(Error::EmptyTrajectorySet);
        }
        if !tau_a.initial_states().eq(tau_b.initial_states()) {
            return Err(Error::InvalidArgument(
                "trajectory sets start from different initial states".into(),
            ));
        }
        Ok(Self {
            tau_a,
            tau_b,
            response,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodModel {
    /// Multiplier on the reward gap. `1.0` is the bare logistic.
    pub precision: f64,
}

impl Default for LikelihoodModel {
    fn default() -> Self {
        Self {
            precision: DEFAULT_RESPONSE_PRECISION,
        }
    }
}

/// A record reduced to what the likelihood needs: `I * (phi(tau_a) - phi(tau_b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub feature_gap: [f64; 3],
}

impl Comparison {
    pub fn from_record(model: &LandingModel, record: &PreferenceRecord) -> Result<Self> {
        let fa = model.mean_features(&record.tau_a)?;
        let fb = model.mean_features(&record.tau_b)?;
        let s = record.response.sign();
        Ok(Self {
            feature_gap: [s * (fa[0] - fb[0]), s * (fa[1] - fb[1]), s * (fa[2] - fb[2])],
        })
    }

    /// Signed reward gap `I * (R_w(tau_a) - R_w(tau_b))`.
    pub fn reward_gap(&self, weights: &[f64; 3]) -> f64 {
        dot3(weights, &self.feature_gap)
    }

    pub fn log_likelihood(&self, weights: &[f64; 3], precision: f64) -> f64 {
        log_sigmoid(precision * self.reward_gap(weights))
    }
}

/// `p(I | w)` for one record.
pub fn likelihood(
    model: &LandingModel,
    record: &PreferenceRecord,
    weights: &RewardWeights,
    lik: &LikelihoodModel,
) -> Result<f64> {
    let c = Comparison::from_record(model, record)?;
    Ok(sigmoid(lik.precision * c.reward_gap(&weights.as_array())))
}

/// Unnormalized-likelihood posterior with a normalized uniform prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    comparisons: Vec<Comparison>,
    precision: f64,
    min_component: f64,
    log_prior: f64,
}

impl Posterior {
    pub fn new(comparisons: Vec<Comparison>, lik: &LikelihoodModel, min_component: f64) -> Self {
        // Area of {alpha, beta, 1 - alpha - beta >= m} in the (alpha, beta) plane.
        let side = 1.0 - 3.0 * min_component;
        let area = 0.5 * side * side;
        Self {
            comparisons,
            precision: lik.precision,
            min_component,
            log_prior: -libm::log(area),
        }
    }

    pub fn from_records(
        model: &LandingModel,
        records: &[PreferenceRecord],
        lik: &LikelihoodModel,
        min_component: f64,
    ) -> Result<Self> {
        let comparisons = records
            .iter()
            .map(|r| Comparison::from_record(model, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(comparisons, lik, min_component))
    }

    pub fn comparisons(&self) -> &[Comparison] {
        &self.comparisons
    }

    pub fn min_component(&self) -> f64 {
        self.min_component
    }

    pub fn in_support(&self, free: [f64; 2]) -> bool {
        let gamma = 1.0 - free[0] - free[1];
        free[0] >= self.min_component && free[1] >= self.min_component && gamma >= self.min_component
    }

    /// Log density at free coordinates; `-inf` outside the support.
    pub fn log_density_free(&self, free: [f64; 2]) -> f64 {
        if !self.in_support(free) {
            return f64::NEG_INFINITY;
        }
        let w = [free[0], free[1], 1.0 - free[0] - free[1]];
        self.log_prior
            + self
                .comparisons
                .iter()
                .map(|c| c.log_likelihood(&w, self.precision))
                .sum::<f64>()
    }

    pub fn log_density(&self, weights: &RewardWeights) -> f64 {
        self.log_density_free(weights.free())
    }
}

/// `log p(w | records)` up to the evidence constant.
pub fn log_posterior(
    model: &LandingModel,
    weights: &RewardWeights,
    records: &[PreferenceRecord],
    lik: &LikelihoodModel,
) -> Result<f64> {
    let post = Posterior::from_records(model, records, lik, DEFAULT_MIN_COMPONENT)?;
    Ok(post.log_density(weights))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub sample_count: usize,
    pub burn_in: usize,
    pub thinning: usize,
    /// Steps run with the fixed initial proposal before adapting.
    pub warm_up: usize,
    /// Standard deviation of the initial isotropic proposal.
    pub initial_step: f64,
    pub regularization: f64,
    pub min_component: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            sample_count: 1000,
            burn_in: 1000,
            thinning: 5,
            warm_up: 200,
            initial_step: 0.05,
            regularization: 1e-6,
            min_component: DEFAULT_MIN_COMPONENT,
        }
    }
}

impl SamplerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.sample_count < 100 {
            return Err(Error::TooFewSamples {
                required: 100,
                actual: self.sample_count,
            });
        }
        if self.thinning == 0 {
            return Err(Error::InvalidArgument("thinning must be at least 1".into()));
        }
        if !(self.initial_step > 0.0) || !(self.regularization >= 0.0) {
            return Err(Error::InvalidArgument(
                "proposal scale must be positive".into(),
            ));
        }
        if !(self.min_component > 0.0 && self.min_component < 1.0 / 3.0) {
            return Err(Error::InvalidArgument(
                "min_component must lie in (0, 1/3)".into(),
            ));
        }
        Ok(())
    }
}

pub const ACCEPTANCE_WARN_LOW: f64 = 0.05;
pub const ACCEPTANCE_WARN_HIGH: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub samples: Vec<RewardWeights>,
    pub acceptance_rate: f64,
}

impl PosteriorSamples {
    pub fn new(samples: Vec<RewardWeights>, acceptance_rate: f64) -> Self {
        Self {
            samples,
            acceptance_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn free_points(&self) -> Vec<[f64; 2]> {
        self.samples.iter().map(|w| w.free()).collect()
    }

    pub fn mean(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for w in &self.samples {
            let a = w.as_array();
            for k in 0..3 {
                m[k] += a[k];
            }
        }
        let n = self.samples.len().max(1) as f64;
        m.map(|x| x / n)
    }

    /// Per-coordinate sample standard deviation (`n - 1` denominator).
    pub fn std_dev(&self) -> [f64; 3] {
        let m = self.mean();
        let mut v = [0.0; 3];
        for w in &self.samples {
            let a = w.as_array();
            for k in 0..3 {
                v[k] += (a[k] - m[k]) * (a[k] - m[k]);
            }
        }
        let denom = (self.samples.len().max(2) - 1) as f64;
        v.map(|x| libm::sqrt(x / denom))
    }

    pub fn acceptance_in_range(&self) -> bool {
        (ACCEPTANCE_WARN_LOW..=ACCEPTANCE_WARN_HIGH).contains(&self.acceptance_rate)
    }
}

/// Independent uniform draws from the prior support.
pub fn sample_prior<R: Rng + ?Sized>(
    count: usize,
    min_component: f64,
    rng: &mut R,
) -> PosteriorSamples {
    let mut samples = Vec::with_capacity(count);
    while samples.len() < count {
        // Sorted-uniform spacings are Dirichlet(1, 1, 1).
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        let free = [lo, hi - lo];
        let gamma = 1.0 - free[0] - free[1];
        if free[0] >= min_component && free[1] >= min_component && gamma >= min_component {
            if let Ok(w) = RewardWeights::from_free(free[0], free[1]) {
                samples.push(w);
            }
        }
    }
    PosteriorSamples::new(samples, 1.0)
}

/// Running mean and covariance of the chain in two dimensions.
#[derive(Debug, Clone, Copy, Default)]
struct RunningMoments {
    n: f64,
    mean: [f64; 2],
    /// Sum of outer products of deviations.
    m2: [[f64; 2]; 2],
}

impl RunningMoments {
    fn push(&mut self, x: [f64; 2]) {
        self.n += 1.0;
        let d0 = x[0] - self.mean[0];
        let d1 = x[1] - self.mean[1];
        self.mean[0] += d0 / self.n;
        self.mean[1] += d1 / self.n;
        let e0 = x[0] - self.mean[0];
        let e1 = x[1] - self.mean[1];
        self.m2[0][0] += d0 * e0;
        self.m2[0][1] += d0 * e1;
        self.m2[1][1] += d1 * e1;
        self.m2[1][0] = self.m2[0][1];
    }

    fn covariance(&self) -> [[f64; 2]; 2] {
        let denom = (self.n - 1.0).max(1.0);
        [
            [self.m2[0][0] / denom, self.m2[0][1] / denom],
            [self.m2[1][0] / denom, self.m2[1][1] / denom],
        ]
    }
}

/// Lower Cholesky factor of a 2x2 SPD matrix.
fn cholesky2(c: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    if !(c[0][0] > 0.0) {
        return None;
    }
    let l00 = libm::sqrt(c[0][0]);
    let l10 = c[1][0] / l00;
    let rest = c[1][1] - l10 * l10;
    if !(rest > 0.0) {
        return None;
    }
    Some([[l00, 0.0], [l10, libm::sqrt(rest)]])
}

/// Adaptive Metropolis (Haario-style) on the free coordinates.
///
/// The first `warm_up` proposals use an isotropic Gaussian; after that the
/// proposal covariance is `2.38^2 / 2 * (Cov(history) + regularization * I)`.
/// The first `burn_in` states are dropped and every `thinning`-th state after
/// that is kept until `sample_count` samples are collected.
pub fn adaptive_metropolis<R: Rng + ?Sized>(
    posterior: &Posterior,
    start: &RewardWeights,
    settings: &SamplerSettings,
    rng: &mut R,
) -> Result<PosteriorSamples> {
    settings.validate()?;
    const DIM: f64 = 2.0;
    let scale = 2.38 * 2.38 / DIM;

    let mut x = start.free();
    let mut lp = posterior.log_density_free(x);
    if !lp.is_finite() {
        x = RewardWeights::centroid().free();
        lp = posterior.log_density_free(x);
    }

    let total = settings.burn_in + settings.sample_count * settings.thinning;
    let initial_var = settings.initial_step * settings.initial_step;
    let fixed_factor = [[settings.initial_step, 0.0], [0.0, settings.initial_step]];
    let mut moments = RunningMoments::default();
    moments.push(x);

    let mut samples = Vec::with_capacity(settings.sample_count);
    let mut accepted = 0usize;
    let mut kept_steps = 0usize;

    for t in 0..total {
        let factor = if t < settings.warm_up {
            fixed_factor
        } else {
            let cov = moments.covariance();
            let reg = settings.regularization;
            let c = [
                [scale * (cov[0][0] + reg), scale * cov[0][1]],
                [scale * cov[1][0], scale * (cov[1][1] + reg)],
            ];
            cholesky2(c).unwrap_or([
                [libm::sqrt(initial_var), 0.0],
                [0.0, libm::sqrt(initial_var)],
            ])
        };
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        let y = [
            x[0] + factor[0][0] * z0,
            x[1] + factor[1][0] * z0 + factor[1][1] * z1,
        ];
        let lp_y = posterior.log_density_free(y);
        let log_u = libm::log(rng.random::<f64>());
        let accept = lp_y.is_finite() && log_u < lp_y - lp;
        if accept {
            x = y;
            lp = lp_y;
        }
        moments.push(x);

        if t >= settings.burn_in {
            kept_steps += 1;
            if accept {
                accepted += 1;
            }
            if (t - settings.burn_in) % settings.thinning == settings.thinning - 1 {
                samples.push(RewardWeights::from_free(x[0], x[1])?);
            }
        }
    }

    let acceptance_rate = accepted as f64 / kept_steps.max(1) as f64;
    let out = PosteriorSamples::new(samples, acceptance_rate);
    if !out.acceptance_in_range() {
        log::warn!(
            "adaptive Metropolis acceptance rate {acceptance_rate:.3} outside [{ACCEPTANCE_WARN_LOW}, {ACCEPTANCE_WARN_HIGH}]"
        );
    }
    Ok(out)
}

/// Component-wise sample mean, renormalized onto the simplex.
pub fn estimate_weights(samples: &PosteriorSamples) -> Result<RewardWeights> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples {
            required: 1,
            actual: 0,
        });
    }
    RewardWeights::normalized(samples.mean())
}
