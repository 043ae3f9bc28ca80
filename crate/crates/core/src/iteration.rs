//! The reward iteration loop.
//!
//! A session starts from prior samples and repeats: pick a pair of weight
//! samples, solve the landing problem under each, roll both greedy policies
//! out from shared initial states, collect a preference, and resample the
//! posterior from every record so far.
//!
//! All randomness comes from ChaCha8 streams derived from the session seed,
//! the iteration number and a purpose tag, so a session rebuilt from its
//! stored records continues exactly as an uninterrupted one would.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landing::{LandingModel, LandingState, TrajectorySet};
use crate::math::cosine;
use crate::mdp::{QTable, Trajectory};
use crate::posterior::{
    adaptive_metropolis, estimate_weights, sample_prior, Comparison, LikelihoodModel, Posterior,
    PosteriorSamples, PreferenceRecord, Response, SamplerSettings,
};
use crate::query::{select_query, QueryMethod, QueryPair};
use crate::weights::RewardWeights;

pub const DEFAULT_INITIAL_STATES: usize = 10;

/// What a derived random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Prior = 0,
    InitialStates = 1,
    Mcmc = 2,
    Expert = 3,
    Rollout = 4,
}

/// Independent stream for `(seed, iteration, purpose)`.
pub fn stream_rng(seed: u64, iteration: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((iteration as u64) << 8 | purpose as u64);
    rng
}

pub fn sample_initial_states<R: Rng + ?Sized>(
    model: &LandingModel,
    count: usize,
    rng: &mut R,
) -> Result<Vec<LandingState>> {
    if count == 0 {
        return Err(Error::InvalidArgument(
            "at least one initial state is required".into(),
        ));
    }
    let band = model.approach_band();
    Ok((0..count).map(|_| model.decode(band.sample(rng))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBundle {
    pub pair: QueryPair,
    pub rollouts_a: TrajectorySet,
    pub rollouts_b: TrajectorySet,
    pub initial_states: Vec<LandingState>,
    pub iteration: usize,
}

fn greedy_set(
    model: &LandingModel,
    q: &QTable,
    starts: &[usize],
    weights: &RewardWeights,
) -> Result<TrajectorySet> {
    let mut out = Vec::with_capacity(starts.len());
    for &s in starts {
        let traj = model.greedy_rollout(q, s);
        if !traj.landed {
            return Err(Error::RolloutDidNotLand {
                initial_state: s,
                weights: weights.as_array(),
            });
        }
        out.push(traj);
    }
    Ok(TrajectorySet::new(out))
}

/// Solves once per weight vector and rolls both greedy policies out from
/// every initial state.
pub fn generate_query(
    model: &LandingModel,
    pair: &QueryPair,
    initial_states: &[LandingState],
    iteration: usize,
) -> Result<QueryBundle> {
    let starts = initial_states
        .iter()
        .map(|s| {
            model.encode(s).ok_or_else(|| {
                Error::InvalidArgument(alloc::format!("initial state {s:?} is off the grid"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let q_a = model.solve(&pair.w_first)?;
    let rollouts_a = greedy_set(model, &q_a, &starts, &pair.w_first)?;
    let rollouts_b = if pair.w_second == pair.w_first {
        rollouts_a.clone()
    } else {
        let q_b = model.solve(&pair.w_second)?;
        greedy_set(model, &q_b, &starts, &pair.w_second)?
    };
    Ok(QueryBundle {
        pair: *pair,
        rollouts_a,
        rollouts_b,
        initial_states: initial_states.to_vec(),
        iteration,
    })
}

/// Answers by the true reward, flipping with probability `error_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedExpert {
    pub w_true: RewardWeights,
    pub error_rate: f64,
    pub seed: u64,
}

impl SimulatedExpert {
    pub fn new(w_true: RewardWeights, error_rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&error_rate) {
            return Err(Error::InvalidArgument(alloc::format!(
                "error rate must lie in [0, 1), got {error_rate}"
            )));
        }
        Ok(Self {
            w_true,
            error_rate,
            seed,
        })
    }

    /// The answer a noiseless expert gives; ties prefer `A`.
    pub fn correct_response(
        &self,
        model: &LandingModel,
        tau_a: &TrajectorySet,
        tau_b: &TrajectorySet,
    ) -> Result<Response> {
        let ra = model.trajectory_set_reward(tau_a, &self.w_true)?;
        let rb = model.trajectory_set_reward(tau_b, &self.w_true)?;
        Ok(if ra >= rb { Response::A } else { Response::B })
    }

    pub fn respond_with<R: Rng + ?Sized>(
        &self,
        model: &LandingModel,
        tau_a: &TrajectorySet,
        tau_b: &TrajectorySet,
        rng: &mut R,
    ) -> Result<Response> {
        let correct = self.correct_response(model, tau_a, tau_b)?;
        let flip = self.error_rate > 0.0 && rng.random::<f64>() < self.error_rate;
        Ok(if flip { correct.flipped() } else { correct })
    }
}

/// Where preferences come from.
pub trait PreferenceSource {
    fn respond(&mut self, model: &LandingModel, bundle: &QueryBundle) -> Result<Response>;
}

impl PreferenceSource for SimulatedExpert {
    fn respond(&mut self, model: &LandingModel, bundle: &QueryBundle) -> Result<Response> {
        let mut rng = stream_rng(self.seed, bundle.iteration, Purpose::Expert);
        self.respond_with(model, &bundle.rollouts_a, &bundle.rollouts_b, &mut rng)
    }
}

pub fn simulated_response(
    expert: &SimulatedExpert,
    model: &LandingModel,
    bundle: &QueryBundle,
) -> Result<PreferenceRecord> {
    let response = expert.clone().respond(model, bundle)?;
    PreferenceRecord::new(bundle.rollouts_a.clone(), bundle.rollouts_b.clone(), response)
}

/// Mean cosine between each sample and `w_true`.
pub fn cosine_similarity(samples: &PosteriorSamples, w_true: &RewardWeights) -> f64 {
    cosine_similarity_raw(
        samples.samples.iter().map(|w| w.as_array()),
        &w_true.as_array(),
    )
}

/// Same as [`cosine_similarity`] for arbitrary vectors.
pub fn cosine_similarity_raw(samples: impl IntoIterator<Item = [f64; 3]>, w_true: &[f64; 3]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for w in samples {
        total += cosine(&w, w_true);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationSettings {
    pub method: QueryMethod,
    pub sampler: SamplerSettings,
    pub likelihood: LikelihoodModel,
    pub initial_states: usize,
}

impl Default for IterationSettings {
    fn default() -> Self {
        Self {
            method: QueryMethod::default(),
            sampler: SamplerSettings::default(),
            likelihood: LikelihoodModel::default(),
            initial_states: DEFAULT_INITIAL_STATES,
        }
    }
}

/// One row of session history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub pair: QueryPair,
    pub response: Response,
    pub acceptance_rate: f64,
    pub estimate: RewardWeights,
    /// Per-coordinate sample standard deviation.
    pub std_dev: [f64; 3],
    /// Absent when the true weights are unknown.
    pub cosine_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub records: Vec<PreferenceRecord>,
    pub samples: PosteriorSamples,
    pub history: Vec<IterationMetrics>,
}

impl SessionState {
    pub fn completed(&self) -> usize {
        self.records.len()
    }

    pub fn estimate(&self) -> Result<RewardWeights> {
        estimate_weights(&self.samples)
    }
}

/// A record together with the query that produced it; enough to rebuild a
/// session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsweredQuery {
    pub iteration: usize,
    pub pair: QueryPair,
    pub record: PreferenceRecord,
}

/// Step-wise driver for one session.
#[derive(Debug, Clone)]
pub struct RewardIteration<'m> {
    model: &'m LandingModel,
    settings: IterationSettings,
    seed: u64,
    w_true: Option<RewardWeights>,
    state: SessionState,
    comparisons: Vec<Comparison>,
    prior_cosine: Option<f64>,
}

impl<'m> RewardIteration<'m> {
    pub fn new(
        model: &'m LandingModel,
        settings: IterationSettings,
        seed: u64,
        w_true: Option<RewardWeights>,
    ) -> Result<Self> {
        settings.sampler.validate()?;
        if settings.initial_states == 0 {
            return Err(Error::InvalidArgument(
                "at least one initial state per query is required".into(),
            ));
        }
        let mut rng = stream_rng(seed, 0, Purpose::Prior);
        let samples = sample_prior(
            settings.sampler.sample_count,
            settings.sampler.min_component,
            &mut rng,
        );
        let prior_cosine = w_true.map(|w| cosine_similarity(&samples, &w));
        Ok(Self {
            model,
            settings,
            seed,
            w_true,
            state: SessionState {
                records: Vec::new(),
                samples,
                history: Vec::new(),
            },
            comparisons: Vec::new(),
            prior_cosine,
        })
    }

    /// Rebuilds a session by replaying stored answers in order.
    pub fn replay(
        model: &'m LandingModel,
        settings: IterationSettings,
        seed: u64,
        w_true: Option<RewardWeights>,
        answered: &[AnsweredQuery],
    ) -> Result<Self> {
        let mut session = Self::new(model, settings, seed, w_true)?;
        for a in answered {
            if a.iteration != session.next_iteration() {
                return Err(Error::InvalidArgument(alloc::format!(
                    "stored iteration {} out of order, expected {}",
                    a.iteration,
                    session.next_iteration()
                )));
            }
            session.submit_record(a.pair, a.record.clone())?;
        }
        Ok(session)
    }

    pub fn model(&self) -> &'m LandingModel {
        self.model
    }

    pub fn settings(&self) -> &IterationSettings {
        &self.settings
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn w_true(&self) -> Option<RewardWeights> {
        self.w_true
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn into_state(self) -> SessionState {
        self.state
    }

    /// Cosine similarity of the prior samples, if `w_true` is known.
    pub fn prior_cosine(&self) -> Option<f64> {
        self.prior_cosine
    }

    /// 1-based number of the query that would be asked next.
    pub fn next_iteration(&self) -> usize {
        self.state.records.len() + 1
    }

    /// Selects the next pair and builds its query bundle.
    pub fn propose(&self) -> Result<QueryBundle> {
        let iteration = self.next_iteration();
        let pair = select_query(&self.state.samples, &self.settings.method)?;
        let mut rng = stream_rng(self.seed, iteration, Purpose::InitialStates);
        let starts = sample_initial_states(self.model, self.settings.initial_states, &mut rng)?;
        generate_query(self.model, &pair, &starts, iteration)
    }

    /// Records the answer to `bundle` and resamples the posterior.
    pub fn submit(&mut self, bundle: &QueryBundle, response: Response) -> Result<&IterationMetrics> {
        if bundle.iteration != self.next_iteration() {
            return Err(Error::InvalidArgument(alloc::format!(
                "bundle is for iteration {}, session is at {}",
                bundle.iteration,
                self.next_iteration()
            )));
        }
        let record =
            PreferenceRecord::new(bundle.rollouts_a.clone(), bundle.rollouts_b.clone(), response)?;
        self.submit_record(bundle.pair, record)
    }

    fn submit_record(&mut self, pair: QueryPair, record: PreferenceRecord) -> Result<&IterationMetrics> {
        let iteration = self.next_iteration();
        let comparison = Comparison::from_record(self.model, &record)?;
        let start = estimate_weights(&self.state.samples)?;
        let mut comparisons = self.comparisons.clone();
        comparisons.push(comparison);
        let posterior = Posterior::new(
            comparisons,
            &self.settings.likelihood,
            self.settings.sampler.min_component,
        );
        let mut rng = stream_rng(self.seed, iteration, Purpose::Mcmc);
        let samples = adaptive_metropolis(&posterior, &start, &self.settings.sampler, &mut rng)?;
        let estimate = estimate_weights(&samples)?;
        let metrics = IterationMetrics {
            iteration,
            pair,
            response: record.response,
            acceptance_rate: samples.acceptance_rate,
            estimate,
            std_dev: samples.std_dev(),
            cosine_similarity: self.w_true.map(|w| cosine_similarity(&samples, &w)),
        };
        self.comparisons.push(comparison);
        self.state.records.push(record);
        self.state.samples = samples;
        self.state.history.push(metrics);
        Ok(self.state.history.last().expect("just pushed"))
    }

    /// Proposes, asks `source`, and submits.
    pub fn step(&mut self, source: &mut impl PreferenceSource) -> Result<&IterationMetrics> {
        let bundle = self.propose()?;
        let response = source.respond(self.model, &bundle)?;
        self.submit(&bundle, response)
    }

    pub fn last_answered(&self) -> Option<AnsweredQuery> {
        let m = self.state.history.last()?;
        Some(AnsweredQuery {
            iteration: m.iteration,
            pair: m.pair,
            record: self.state.records.last()?.clone(),
        })
    }

    pub fn answered(&self) -> Vec<AnsweredQuery> {
        self.state
            .history
            .iter()
            .zip(&self.state.records)
            .map(|(m, r)| AnsweredQuery {
                iteration: m.iteration,
                pair: m.pair,
                record: r.clone(),
            })
            .collect()
    }
}

/// Runs `max_iter` iterations against `source`.
pub fn reward_iteration(
    model: &LandingModel,
    settings: IterationSettings,
    max_iter: usize,
    seed: u64,
    source: &mut impl PreferenceSource,
    w_true: Option<RewardWeights>,
) -> Result<SessionState> {
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let mut session = RewardIteration::new(model, settings, seed, w_true)?;
    for _ in 0..max_iter {
        session.step(source)?;
    }
    Ok(session.into_state())
}

/// Softmax rollouts of the policy for `weights`, `count` from each initial
/// state.
pub fn final_stochastic_model<R: Rng + ?Sized>(
    model: &LandingModel,
    weights: &RewardWeights,
    precision: f64,
    initial_states: &[LandingState],
    count: usize,
    rng: &mut R,
) -> Result<Vec<Trajectory>> {
    if !(precision >= 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "precision must be non-negative, got {precision}"
        )));
    }
    let q = model.solve(weights)?;
    let mut out = Vec::with_capacity(initial_states.len() * count);
    for s in initial_states {
        let start = model.encode(s).ok_or_else(|| {
            Error::InvalidArgument(alloc::format!("initial state {s:?} is off the grid"))
        })?;
        for _ in 0..count {
            out.push(model.softmax_rollout(&q, precision, start, rng));
        }
    }
    Ok(out)
}

/// Mean pairwise distance between altitude profiles. Shorter profiles are
/// padded with their final altitude.
pub fn altitude_dispersion(model: &LandingModel, trajectories: &[Trajectory]) -> f64 {
    let profiles: Vec<Vec<f64>> = trajectories
        .iter()
        .map(|t| t.steps.iter().map(|s| model.decode(s.state).h).collect())
        .collect();
    let len = profiles.iter().map(Vec::len).max().unwrap_or(0);
    let at = |p: &Vec<f64>, i: usize| p.get(i).or(p.last()).copied().unwrap_or(0.0);
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..profiles.len() {
        for j in i + 1..profiles.len() {
            let sq: f64 = (0..len)
                .map(|t| {
                    let d = at(&profiles[i], t) - at(&profiles[j], t);
                    d * d
                })
                .sum();
            total += libm::sqrt(sq);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ_by_purpose_and_iteration() {
        let a: u64 = stream_rng(1, 3, Purpose::Mcmc).random();
        let b: u64 = stream_rng(1, 3, Purpose::Expert).random();
        let c: u64 = stream_rng(1, 4, Purpose::Mcmc).random();
        let d: u64 = stream_rng(1, 3, Purpose::Mcmc).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, d);
    }

    #[test]
    fn cosine_of_hand_computed_pair() {
        let t = [0.1, 0.8, 0.1];
        let a = [0.2, 0.6, 0.2];
        // a . t = 0.52, |a| = sqrt(0.44), |t| = sqrt(0.66)
        let ca = 0.52 / (0.44f64.sqrt() * 0.66f64.sqrt());
        let got = cosine_similarity_raw([a, t], &t);
        assert!((got - 0.5 * (ca + 1.0)).abs() < 1e-12);
        assert_eq!(cosine_similarity_raw([[1.0, 0.0, 0.0]], &[0.0, 1.0, 0.0]), 0.0);
    }

    #[test]
    fn expert_rejects_certain_error() {
        let w = RewardWeights::centroid();
        assert!(SimulatedExpert::new(w, 1.0, 0).is_err());
        assert!(SimulatedExpert::new(w, -0.1, 0).is_err());
        assert!(SimulatedExpert::new(w, 0.3, 0).is_ok());
    }
}
