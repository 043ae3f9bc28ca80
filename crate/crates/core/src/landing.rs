//! The landing MDP.
//!
//! A state is `(h, h_dot, x_dot, a_prev)`: altitude, vertical rate and ground
//! speed on fixed grids, plus the index of the previous joint action so jerk
//! can be penalized. An action is a joint `(vertical, horizontal)`
//! acceleration command. Transitions integrate constant-acceleration
//! kinematics over one time step and snap the result back onto the grids.
//! The lowest altitude value is the ground; every state there is terminal.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::dot3;
use crate::mdp::{
    self, FiniteMdp, GreedyPolicy, Policy, QTable, SoftmaxPolicy, SolverSettings, Trajectory,
};
use crate::weights::RewardWeights;

pub const ALTITUDE_COUNT: usize = 50;
pub const VERTICAL_RATE_COUNT: usize = 4;
pub const GROUND_SPEED_COUNT: usize = 15;
pub const ACCEL_COUNT: usize = 4;
pub const ACTION_COUNT: usize = ACCEL_COUNT * ACCEL_COUNT;
pub const STATE_COUNT: usize =
    ALTITUDE_COUNT * VERTICAL_RATE_COUNT * GROUND_SPEED_COUNT * ACTION_COUNT;

/// Cap on `|[h_dot, x_dot]| / h` before normalization.
pub const NEAR_GROUND_RATIO_CAP: f64 = 1000.0;

pub const DEFAULT_TIME_STEP: f64 = 1.0;

/// Discretization of states and actions. Units are feet and seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandingGrids {
    pub altitude: Vec<f64>,
    pub vertical_rate: Vec<f64>,
    pub ground_speed: Vec<f64>,
    pub vertical_accel: Vec<f64>,
    pub horizontal_accel: Vec<f64>,
}

impl Default for LandingGrids {
    fn default() -> Self {
        Self {
            altitude: (0..ALTITUDE_COUNT).map(|i| 10.0 * i as f64).collect(),
            vertical_rate: alloc::vec![-16.0, -8.0, 0.0, 8.0],
            ground_speed: (0..GROUND_SPEED_COUNT)
                .map(|i| -5.0 + 5.0 * i as f64)
                .collect(),
            vertical_accel: alloc::vec![-8.0, 0.0, 8.0, 16.0],
            horizontal_accel: alloc::vec![-10.0, -5.0, 0.0, 5.0],
        }
    }
}

impl LandingGrids {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, &[f64], usize); 5] = [
            ("altitude", &self.altitude, ALTITUDE_COUNT),
            ("vertical_rate", &self.vertical_rate, VERTICAL_RATE_COUNT),
            ("ground_speed", &self.ground_speed, GROUND_SPEED_COUNT),
            ("vertical_accel", &self.vertical_accel, ACCEL_COUNT),
            ("horizontal_accel", &self.horizontal_accel, ACCEL_COUNT),
        ];
        for (name, values, count) in checks {
            if values.len() != count {
                return Err(Error::InvalidGrid(format!(
                    "{name} has {} values, expected {count}",
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidGrid(format!("{name} has non-finite values")));
            }
            if values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidGrid(format!(
                    "{name} must be strictly increasing"
                )));
            }
        }
        for (name, values) in [
            ("vertical_accel", &self.vertical_accel),
            ("horizontal_accel", &self.horizontal_accel),
        ] {
            if !values.contains(&0.0) {
                return Err(Error::InvalidGrid(format!("{name} must contain 0")));
            }
        }
        if self.altitude[0] < 0.0 {
            return Err(Error::InvalidGrid("altitude grid starts below ground".into()));
        }
        Ok(())
    }

    pub fn action(&self, index: usize) -> JointAction {
        JointAction {
            vertical_accel: self.vertical_accel[index / ACCEL_COUNT],
            horizontal_accel: self.horizontal_accel[index % ACCEL_COUNT],
        }
    }

    pub fn action_index(&self, vertical: usize, horizontal: usize) -> usize {
        vertical * ACCEL_COUNT + horizontal
    }

    /// The joint action with both components zero.
    pub fn zero_action(&self) -> usize {
        let v = self.vertical_accel.iter().position(|&a| a == 0.0).unwrap_or(0);
        let h = self
            .horizontal_accel
            .iter()
            .position(|&a| a == 0.0)
            .unwrap_or(0);
        self.action_index(v, h)
    }

    pub fn ground(&self) -> f64 {
        self.altitude[0]
    }

    /// Constant-acceleration step followed by snapping each coordinate to
    /// its grid (nearest value, ties toward the lower one, clamped).
    pub fn transition(&self, state: &LandingState, action: usize, time_step: f64) -> LandingState {
        if state.h <= self.ground() {
            return *state;
        }
        let a = self.action(action);
        let dt = time_step;
        let h_dot = clamp_to(&self.vertical_rate, state.h_dot + a.vertical_accel * dt);
        let x_dot = state.x_dot + a.horizontal_accel * dt;
        // Trapezoidal in the clamped rate: identical to constant-acceleration
        // kinematics unless the rate saturates at a grid end.
        let h = state.h + 0.5 * (state.h_dot + h_dot) * dt;
        LandingState {
            h: self.altitude[snap(&self.altitude, h)],
            h_dot: self.vertical_rate[snap(&self.vertical_rate, h_dot)],
            x_dot: self.ground_speed[snap(&self.ground_speed, x_dot)],
            a_prev: action,
        }
    }

    /// Flat index of an on-grid state.
    pub fn encode(&self, state: &LandingState) -> Option<usize> {
        let hi = exact(&self.altitude, state.h)?;
        let vi = exact(&self.vertical_rate, state.h_dot)?;
        let xi = exact(&self.ground_speed, state.x_dot)?;
        if state.a_prev >= ACTION_COUNT {
            return None;
        }
        Some(encode_indices(hi, vi, xi, state.a_prev))
    }

    pub fn decode(&self, index: usize) -> LandingState {
        let (hi, vi, xi, a_prev) = decode_indices(index);
        LandingState {
            h: self.altitude[hi],
            h_dot: self.vertical_rate[vi],
            x_dot: self.ground_speed[xi],
            a_prev,
        }
    }

    pub fn is_on_grid(&self, state: &LandingState) -> bool {
        self.encode(state).is_some()
    }
}

#[inline]
pub fn encode_indices(h: usize, h_dot: usize, x_dot: usize, a_prev: usize) -> usize {
    ((h * VERTICAL_RATE_COUNT + h_dot) * GROUND_SPEED_COUNT + x_dot) * ACTION_COUNT + a_prev
}

#[inline]
pub fn decode_indices(index: usize) -> (usize, usize, usize, usize) {
    let a_prev = index % ACTION_COUNT;
    let rest = index / ACTION_COUNT;
    let x_dot = rest % GROUND_SPEED_COUNT;
    let rest = rest / GROUND_SPEED_COUNT;
    let h_dot = rest % VERTICAL_RATE_COUNT;
    let h = rest / VERTICAL_RATE_COUNT;
    (h, h_dot, x_dot, a_prev)
}

/// Nearest grid index; exact ties resolve to the lower value. Values off
/// either end clamp to the end points.
pub fn snap(grid: &[f64], value: f64) -> usize {
    let mut best = 0;
    let mut best_dist = (grid[0] - value).abs();
    for (i, &g) in grid.iter().enumerate().skip(1) {
        let d = (g - value).abs();
        if d < best_dist {
            best = i;
            best_dist = d;
        }
    }
    best
}

fn clamp_to(grid: &[f64], value: f64) -> f64 {
    value.clamp(grid[0], grid[grid.len() - 1])
}

fn exact(grid: &[f64], value: f64) -> Option<usize> {
    grid.iter().position(|&g| g == value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedRewardParams {
    pub landing_reward: f64,
    pub backward_penalty: f64,
    /// Altitude below which near-ground speed is penalized, feet.
    pub h_pen: f64,
}

impl Default for FixedRewardParams {
    fn default() -> Self {
        Self {
            landing_reward: 10_000.0,
            backward_penalty: -0.1,
            h_pen: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandingState {
    pub h: f64,
    pub h_dot: f64,
    pub x_dot: f64,
    pub a_prev: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAction {
    pub vertical_accel: f64,
    pub horizontal_accel: f64,
}

impl JointAction {
    pub fn magnitude(&self) -> f64 {
        libm::hypot(self.vertical_accel, self.horizontal_accel)
    }
}

/// Normalized penalty features, each in `[-1, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub phi_jerk: f64,
    pub phi_beta: f64,
    pub phi_accel: f64,
}

impl FeatureVector {
    /// Ordered to line up with `[alpha, beta, gamma_accel]`.
    pub fn as_array(&self) -> [f64; 3] {
        [self.phi_jerk, self.phi_beta, self.phi_accel]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandingConfig {
    pub grids: LandingGrids,
    pub fixed: FixedRewardParams,
    pub time_step: f64,
    pub discount: f64,
    pub solver: SolverSettings,
    pub max_steps: usize,
}

impl Default for LandingConfig {
    fn default() -> Self {
        Self {
            grids: LandingGrids::default(),
            fixed: FixedRewardParams::default(),
            time_step: DEFAULT_TIME_STEP,
            discount: mdp::DEFAULT_DISCOUNT,
            solver: SolverSettings::default(),
            max_steps: mdp::DEFAULT_MAX_STEPS,
        }
    }
}

/// Largest raw magnitudes over the grid, used to bring features into `[-1, 0]`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct FeatureScales {
    jerk: f64,
    near_ground: f64,
    accel: f64,
}

/// The landing problem with its MDP and feature tables built once.
#[derive(Debug, Clone)]
pub struct LandingModel {
    config: LandingConfig,
    mdp: FiniteMdp,
    scales: FeatureScales,
    /// `phi_jerk` indexed by `a_prev * ACTION_COUNT + action`.
    jerk: Vec<f64>,
    /// `phi_accel` by action.
    accel: Vec<f64>,
    /// `phi_beta` by kinematic index `state / ACTION_COUNT`.
    near_ground: Vec<f64>,
}

impl LandingModel {
    pub fn new(config: LandingConfig) -> Result<Self> {
        config.grids.validate()?;
        if !(config.time_step > 0.0) || !config.time_step.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "time step {} must be positive",
                config.time_step
            )));
        }
        if config.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        let grids = &config.grids;

        let mut successors = Vec::with_capacity(STATE_COUNT * ACTION_COUNT);
        let mut terminal = Vec::with_capacity(STATE_COUNT);
        for s in 0..STATE_COUNT {
            let state = grids.decode(s);
            terminal.push(state.h <= grids.ground());
            for a in 0..ACTION_COUNT {
                let next = grids.transition(&state, a, config.time_step);
                let idx = grids.encode(&next).expect("snapped state is on-grid");
                successors.push(idx as u32);
            }
        }
        let mdp = FiniteMdp::new(
            STATE_COUNT,
            ACTION_COUNT,
            successors,
            terminal,
            config.discount,
        )?;

        let scales = feature_scales(grids, config.fixed.h_pen);
        let mut model = Self {
            config,
            mdp,
            scales,
            jerk: Vec::new(),
            accel: Vec::new(),
            near_ground: Vec::new(),
        };
        let grids = &model.config.grids;
        let mut jerk = Vec::with_capacity(ACTION_COUNT * ACTION_COUNT);
        for prev in 0..ACTION_COUNT {
            for a in 0..ACTION_COUNT {
                jerk.push(jerk_feature(grids, prev, a, scales.jerk));
            }
        }
        let accel = (0..ACTION_COUNT)
            .map(|a| -grids.action(a).magnitude() / scales.accel)
            .collect();
        let near_ground = (0..STATE_COUNT / ACTION_COUNT)
            .map(|k| {
                let s = grids.decode(k * ACTION_COUNT);
                near_ground_feature(&s, model.config.fixed.h_pen, scales.near_ground)
            })
            .collect();
        model.jerk = jerk;
        model.accel = accel;
        model.near_ground = near_ground;
        Ok(model)
    }

    pub fn config(&self) -> &LandingConfig {
        &self.config
    }

    pub fn grids(&self) -> &LandingGrids {
        &self.config.grids
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }

    pub fn decode(&self, index: usize) -> LandingState {
        self.config.grids.decode(index)
    }

    pub fn encode(&self, state: &LandingState) -> Option<usize> {
        self.config.grids.encode(state)
    }

    pub fn action(&self, index: usize) -> JointAction {
        self.config.grids.action(index)
    }

    pub fn transition(&self, state: &LandingState, action: usize) -> LandingState {
        self.config
            .grids
            .transition(state, action, self.config.time_step)
    }

    /// Features of an arbitrary (possibly off-grid) state-action pair.
    pub fn features(&self, state: &LandingState, action: usize) -> FeatureVector {
        let grids = &self.config.grids;
        FeatureVector {
            phi_jerk: jerk_feature(grids, state.a_prev, action, self.scales.jerk),
            phi_beta: near_ground_feature(state, self.config.fixed.h_pen, self.scales.near_ground),
            phi_accel: -grids.action(action).magnitude() / self.scales.accel,
        }
    }

    /// Table lookup of the features for an on-grid pair.
    #[inline]
    pub fn features_at(&self, state: usize, action: usize) -> [f64; 3] {
        let prev = state % ACTION_COUNT;
        [
            self.jerk[prev * ACTION_COUNT + action],
            self.near_ground[state / ACTION_COUNT],
            self.accel[action],
        ]
    }

    /// One-step reward. Zero from the ground; otherwise the weighted penalties,
    /// plus the landing reward when this step reaches the ground, plus the
    /// backward penalty while the ground speed is negative.
    pub fn reward(&self, state: &LandingState, action: usize, weights: &RewardWeights) -> f64 {
        let grids = &self.config.grids;
        if state.h <= grids.ground() {
            return 0.0;
        }
        let fixed = &self.config.fixed;
        let mut r = dot3(&weights.as_array(), &self.features(state, action).as_array());
        if self.transition(state, action).h <= grids.ground() {
            r += fixed.landing_reward;
        }
        if state.x_dot < 0.0 {
            r += fixed.backward_penalty;
        }
        r
    }

    /// Rewards for every pair, row-major, for the solver.
    pub fn reward_table(&self, weights: &RewardWeights) -> Vec<f64> {
        let w = weights.as_array();
        let fixed = &self.config.fixed;
        let mut table = Vec::with_capacity(STATE_COUNT * ACTION_COUNT);
        for s in 0..STATE_COUNT {
            if self.mdp.is_terminal(s) {
                table.extend(core::iter::repeat_n(0.0, ACTION_COUNT));
                continue;
            }
            let (_, _, xi, _) = decode_indices(s);
            let backward = if self.config.grids.ground_speed[xi] < 0.0 {
                fixed.backward_penalty
            } else {
                0.0
            };
            for a in 0..ACTION_COUNT {
                let mut r = dot3(&w, &self.features_at(s, a)) + backward;
                if self.mdp.is_terminal(self.mdp.successor(s, a)) {
                    r += fixed.landing_reward;
                }
                table.push(r);
            }
        }
        table
    }

    pub fn solve(&self, weights: &RewardWeights) -> Result<QTable> {
        mdp::value_iteration_table(&self.mdp, &self.reward_table(weights), &self.config.solver)
    }

    pub fn greedy_rollout(&self, q: &QTable, initial_state: usize) -> Trajectory {
        // The greedy policy never touches the RNG.
        let mut rng = NoRng;
        mdp::rollout(
            &self.mdp,
            &GreedyPolicy { q },
            initial_state,
            self.config.max_steps,
            &mut rng,
        )
    }

    pub fn softmax_rollout<R: rand::Rng + ?Sized>(
        &self,
        q: &QTable,
        precision: f64,
        initial_state: usize,
        rng: &mut R,
    ) -> Trajectory {
        mdp::rollout(
            &self.mdp,
            &SoftmaxPolicy { q, precision },
            initial_state,
            self.config.max_steps,
            rng,
        )
    }

    /// Runs any policy for at most `max_steps`.
    pub fn rollout_with<P: Policy, R: rand::Rng + ?Sized>(
        &self,
        policy: &P,
        initial_state: usize,
        rng: &mut R,
    ) -> Trajectory {
        mdp::rollout(
            &self.mdp,
            policy,
            initial_state,
            self.config.max_steps,
            rng,
        )
    }

    /// Mean feature vector over every decision step of every trajectory.
    /// A set with no decisions at all (every rollout started on the ground)
    /// has zero features.
    pub fn mean_features(&self, tau: &TrajectorySet) -> Result<[f64; 3]> {
        if tau.trajectories.is_empty() {
            return Err(Error::EmptyTrajectorySet);
        }
        let mut total = [0.0; 3];
        let mut count = 0usize;
        for traj in &tau.trajectories {
            for (s, a) in traj.decisions() {
                let f = self.features_at(s, a);
                for k in 0..3 {
                    total[k] += f[k];
                }
                count += 1;
            }
        }
        if count > 0 {
            for t in &mut total {
                *t /= count as f64;
            }
        }
        Ok(total)
    }

    /// `R_w(tau) = w . mean_features(tau)`; fixed reward terms are left out.
    pub fn trajectory_set_reward(&self, tau: &TrajectorySet, weights: &RewardWeights) -> Result<f64> {
        Ok(dot3(&weights.as_array(), &self.mean_features(tau)?))
    }

    /// States initial conditions are drawn from: the top fifth of the
    /// altitude grid, vertical rate -8 or 0 ft/s, the middle third of the
    /// ground-speed grid, and no previous acceleration.
    pub fn approach_band(&self) -> ApproachBand {
        let grids = &self.config.grids;
        let n_h = grids.altitude.len();
        let altitudes = (n_h - n_h / 5..n_h).collect();
        let vertical_rates = grids
            .vertical_rate
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == -8.0 || v == 0.0)
            .map(|(i, _)| i)
            .collect();
        let n_x = grids.ground_speed.len();
        let ground_speeds = (n_x / 3..n_x - n_x / 3).collect();
        ApproachBand {
            altitudes,
            vertical_rates,
            ground_speeds,
            a_prev: grids.zero_action(),
        }
    }
}

/// Index sets describing the initial-state distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApproachBand {
    pub altitudes: Vec<usize>,
    pub vertical_rates: Vec<usize>,
    pub ground_speeds: Vec<usize>,
    pub a_prev: usize,
}

impl ApproachBand {
    pub fn contains(&self, state: usize) -> bool {
        let (h, v, x, a) = decode_indices(state);
        self.altitudes.contains(&h)
            && self.vertical_rates.contains(&v)
            && self.ground_speeds.contains(&x)
            && a == self.a_prev
    }

    /// Uniform draw: each coordinate independently uniform over its set.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let h = self.altitudes[rng.random_range(0..self.altitudes.len())];
        let v = self.vertical_rates[rng.random_range(0..self.vertical_rates.len())];
        let x = self.ground_speeds[rng.random_range(0..self.ground_speeds.len())];
        encode_indices(h, v, x, self.a_prev)
    }
}

/// Rollouts of one policy from a shared list of initial states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        Self { trajectories }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn all_landed(&self) -> bool {
        self.trajectories.iter().all(|t| t.landed)
    }

    pub fn initial_states(&self) -> impl Iterator<Item = usize> + '_ {
        self.trajectories
            .iter()
            .filter_map(|t| t.steps.first().map(|s| s.state))
    }
}

fn jerk_feature(grids: &LandingGrids, prev: usize, action: usize, scale: f64) -> f64 {
    let a = grids.action(action);
    let p = grids.action(prev);
    -libm::hypot(
        a.vertical_accel - p.vertical_accel,
        a.horizontal_accel - p.horizontal_accel,
    ) / scale
}

fn near_ground_ratio(state: &LandingState, h_pen: f64) -> f64 {
    if state.h >= h_pen {
        return 0.0;
    }
    if state.h <= 0.0 {
        return NEAR_GROUND_RATIO_CAP;
    }
    (libm::hypot(state.h_dot, state.x_dot) / state.h).min(NEAR_GROUND_RATIO_CAP)
}

fn near_ground_feature(state: &LandingState, h_pen: f64, scale: f64) -> f64 {
    -(near_ground_ratio(state, h_pen) / scale).min(1.0)
}

fn feature_scales(grids: &LandingGrids, h_pen: f64) -> FeatureScales {
    let mut accel = 0.0_f64;
    let mut jerk = 0.0_f64;
    for a in 0..ACTION_COUNT {
        accel = accel.max(grids.action(a).magnitude());
        for p in 0..ACTION_COUNT {
            jerk = jerk.max(-jerk_feature(grids, p, a, 1.0));
        }
    }
    // Only airborne states collect reward, so the ground row (where the
    // ratio is pinned at the cap) does not set the scale.
    let mut near_ground = 0.0_f64;
    for &h in grids.altitude.iter().skip(1) {
        for &h_dot in &grids.vertical_rate {
            for &x_dot in &grids.ground_speed {
                let s = LandingState {
                    h,
                    h_dot,
                    x_dot,
                    a_prev: 0,
                };
                near_ground = near_ground.max(near_ground_ratio(&s, h_pen));
            }
        }
    }
    let or_one = |x: f64| if x > 0.0 { x } else { 1.0 };
    FeatureScales {
        jerk: or_one(jerk),
        near_ground: or_one(near_ground),
        accel: or_one(accel),
    }
}

struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("greedy rollouts are deterministic")
    }

    fn next_u64(&mut self) -> u64 {
        unreachable!("greedy rollouts are deterministic")
    }

    fn fill_bytes(&mut self, _dst: &mut [u8]) {
        unreachable!("greedy rollouts are deterministic")
    }
}
