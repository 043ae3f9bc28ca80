//! Finite MDPs with deterministic transitions.
//!
//! Terminal states are absorbing and carry zero value: an episode ends when
//! it reaches one, so whatever reward an application wants for arriving
//! there must be paid on the transition into it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DISCOUNT: f64 = 0.99;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;
pub const DEFAULT_MAX_STEPS: usize = 600;

#[derive(Debug, Clone)]
pub struct FiniteMdp {
    state_count: usize,
    action_count: usize,
    successors: Vec<u32>,
    terminal: Vec<bool>,
    discount: f64,
}

impl FiniteMdp {
    /// `successors` is laid out row-major as `state * action_count + action`.
    pub fn new(
        state_count: usize,
        action_count: usize,
        successors: Vec<u32>,
        terminal: Vec<bool>,
        discount: f64,
    ) -> Result<Self> {
        if state_count == 0 || action_count == 0 {
            return Err(Error::InvalidMdp(
                "state and action counts must be positive".into(),
            ));
        }
        if successors.len() != state_count * action_count {
            return Err(Error::InvalidMdp(format!(
                "successor table has {} entries, expected {}",
                successors.len(),
                state_count * action_count
            )));
        }
        if terminal.len() != state_count {
            return Err(Error::InvalidMdp(format!(
                "terminal mask has {} entries, expected {state_count}",
                terminal.len()
            )));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::InvalidMdp(format!(
                "discount {discount} outside (0, 1)"
            )));
        }
        for (idx, &next) in successors.iter().enumerate() {
            let state = idx / action_count;
            if next as usize >= state_count {
                return Err(Error::InvalidMdp(format!(
                    "pair ({state}, {}) maps to out-of-range state {next}",
                    idx % action_count
                )));
            }
            if terminal[state] && next as usize != state {
                return Err(Error::InvalidMdp(format!(
                    "terminal state {state} is not absorbing"
                )));
            }
        }
        Ok(Self {
            state_count,
            action_count,
            successors,
            terminal,
            discount,
        })
    }

    pub fn from_fn(
        state_count: usize,
        action_count: usize,
        transition: impl Fn(usize, usize) -> usize,
        terminal: impl Fn(usize) -> bool,
        discount: f64,
    ) -> Result<Self> {
        let mut successors = Vec::with_capacity(state_count * action_count);
        for s in 0..state_count {
            for a in 0..action_count {
                let next = transition(s, a);
                let next = u32::try_from(next)
                    .map_err(|_| Error::InvalidMdp(format!("state index {next} too large")))?;
                successors.push(next);
            }
        }
        let terminal = (0..state_count).map(terminal).collect();
        Self::new(state_count, action_count, successors, terminal, discount)
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    #[inline]
    pub fn successor(&self, state: usize, action: usize) -> usize {
        self.successors[state * self.action_count + action] as usize
    }

    #[inline]
    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }
}

/// Optimal action values, row-major by state.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    action_count: usize,
    values: Vec<f64>,
    sweeps: usize,
}

impl QTable {
    pub fn from_values(action_count: usize, values: Vec<f64>) -> Result<Self> {
        if action_count == 0 || values.len() % action_count != 0 {
            return Err(Error::InvalidArgument(
                "Q values must form whole rows".into(),
            ));
        }
        Ok(Self {
            action_count,
            values,
            sweeps: 0,
        })
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn state_count(&self) -> usize {
        self.values.len() / self.action_count
    }

    /// Number of full sweeps value iteration needed.
    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[f64] {
        let start = state * self.action_count;
        &self.values[start..start + self.action_count]
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.action_count + action]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn greedy_action(&self, state: usize) -> usize {
        argmax(self.row(state))
    }

    pub fn softmax_probabilities(&self, state: usize, precision: f64) -> Vec<f64> {
        softmax(self.row(state), precision)
    }

    /// Largest Bellman residual over non-terminal pairs for the given reward table.
    pub fn bellman_residual(&self, mdp: &FiniteMdp, rewards: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for s in 0..mdp.state_count() {
            if mdp.is_terminal(s) {
                continue;
            }
            for a in 0..mdp.action_count() {
                let next = mdp.successor(s, a);
                let target = rewards[s * self.action_count + a]
                    + mdp.discount() * max_of(self.row(next));
                worst = worst.max((self.get(s, a) - target).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

/// Value iteration with the reward given as a function of `(state, action)`.
pub fn value_iteration(
    mdp: &FiniteMdp,
    reward: impl Fn(usize, usize) -> f64,
    settings: &SolverSettings,
) -> Result<QTable> {
    let na = mdp.action_count();
    let mut table = Vec::with_capacity(mdp.state_count() * na);
    for s in 0..mdp.state_count() {
        for a in 0..na {
            table.push(reward(s, a));
        }
    }
    value_iteration_table(mdp, &table, settings)
}

/// Synchronous value iteration over a precomputed row-major reward table.
///
/// Stops once a sweep changes no entry by more than `settings.tolerance`.
pub fn value_iteration_table(
    mdp: &FiniteMdp,
    rewards: &[f64],
    settings: &SolverSettings,
) -> Result<QTable> {
    let ns = mdp.state_count();
    let na = mdp.action_count();
    if rewards.len() != ns * na {
        return Err(Error::InvalidArgument(format!(
            "reward table has {} entries, expected {}",
            rewards.len(),
            ns * na
        )));
    }
    if !(settings.tolerance > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if let Some(bad) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "reward for pair ({}, {}) is not finite",
            bad / na,
            bad % na
        )));
    }

    let discount = mdp.discount();
    let mut q = vec![0.0; ns * na];
    let mut v = vec![0.0; ns];
    let mut delta = f64::INFINITY;

    for sweep in 1..=settings.max_sweeps {
        delta = 0.0;
        for s in 0..ns {
            if mdp.is_terminal(s) {
                continue;
            }
            let base = s * na;
            for a in 0..na {
                let updated = rewards[base + a] + discount * v[mdp.successor(s, a)];
                delta = delta.max((updated - q[base + a]).abs());
                q[base + a] = updated;
            }
        }
        for (s, value) in v.iter_mut().enumerate() {
            *value = max_of(&q[s * na..(s + 1) * na]);
        }
        if delta <= settings.tolerance {
            return Ok(QTable {
                action_count: na,
                values: q,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NotConverged {
        sweeps: settings.max_sweeps,
        delta,
    })
}

fn max_of(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Boltzmann distribution `exp(precision * q) / sum`, max-subtracted.
pub fn softmax(row: &[f64], precision: f64) -> Vec<f64> {
    let peak = max_of(row);
    let mut probs: Vec<f64> = row
        .iter()
        .map(|&x| libm::exp(precision * (x - peak)))
        .collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// Draws an index from a discrete distribution.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave `acc` a hair under 1.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub trait Policy {
    fn action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize;
}

#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy<'a> {
    pub q: &'a QTable,
}

impl Policy for GreedyPolicy<'_> {
    fn action<R: Rng + ?Sized>(&self, state: usize, _rng: &mut R) -> usize {
        self.q.greedy_action(state)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SoftmaxPolicy<'a> {
    pub q: &'a QTable,
    pub precision: f64,
}

impl Policy for SoftmaxPolicy<'_> {
    fn action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let probs = self.q.softmax_probabilities(state, self.precision);
        sample_index(&probs, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    /// `None` on the last visited state, where no decision was taken.
    pub action: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub landed: bool,
}

impl Trajectory {
    /// Steps at which an action was taken.
    pub fn decisions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.steps
            .iter()
            .filter_map(|s| s.action.map(|a| (s.state, a)))
    }

    pub fn final_state(&self) -> usize {
        self.steps.last().map(|s| s.state).unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Follows `policy` from `initial_state` until a terminal state or until
/// `max_steps` actions have been taken.
pub fn rollout<P: Policy, R: Rng + ?Sized>(
    mdp: &FiniteMdp,
    policy: &P,
    initial_state: usize,
    max_steps: usize,
    rng: &mut R,
) -> Trajectory {
    let mut steps = Vec::new();
    let mut state = initial_state;
    for _ in 0..max_steps {
        if mdp.is_terminal(state) {
            break;
        }
        let action = policy.action(state, rng);
        steps.push(Step {
            state,
            action: Some(action),
        });
        state = mdp.successor(state, action);
    }
    steps.push(Step {
        state,
        action: None,
    });
    Trajectory {
        steps,
        landed: mdp.is_terminal(state),
    }
}
