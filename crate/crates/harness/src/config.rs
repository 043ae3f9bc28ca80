//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Sweep keys (`method`,
//! `mu`, `epsilon`) take comma-separated lists; every combination is run for
//! `trials` seeds. Grid keys take comma-separated values.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use uam_prefs_core::iteration::IterationSettings;
use uam_prefs_core::landing::{LandingConfig, LandingModel};
use uam_prefs_core::posterior::{LikelihoodModel, SamplerSettings, DEFAULT_RESPONSE_PRECISION};
use uam_prefs_core::query::{QueryMethod, DEFAULT_K, DEFAULT_MU};
use uam_prefs_core::RewardWeights;

pub const DEMO_W_TRUE: [f64; 3] = [0.1, 0.8, 0.1];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{key}: {message}")]
    Value { key: String, message: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Multiobjective,
    Qeval,
}

impl MethodName {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "multiobjective" | "mo" => Some(Self::Multiobjective),
            "qeval" | "probabilistic_qeval" => Some(Self::Qeval),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Multiobjective => "multiobjective",
            Self::Qeval => "qeval",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub methods: Vec<MethodName>,
    pub mu: Vec<f64>,
    pub k: usize,
    pub epsilon: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Defaults to `seed`. Trial `t` uses `expert_seed + t`.
    pub expert_seed: Option<u64>,
    pub max_iter: usize,
    pub w_true: Option<RewardWeights>,
    /// Multiplier inside the preference sigmoid.
    pub precision: f64,
    /// Softmax precision of the exported model.
    pub lambda: f64,
    pub initial_states: usize,
    pub sampler: SamplerSettings,
    pub landing: LandingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: vec![MethodName::Multiobjective],
            mu: vec![DEFAULT_MU],
            k: DEFAULT_K,
            epsilon: vec![0.0],
            trials: 1,
            seed: 0,
            expert_seed: None,
            max_iter: 80,
            w_true: None,
            precision: DEFAULT_RESPONSE_PRECISION,
            lambda: 0.02,
            initial_states: uam_prefs_core::iteration::DEFAULT_INITIAL_STATES,
            sampler: SamplerSettings::default(),
            landing: LandingConfig::default(),
        }
    }
}

/// Everything one session needs; stored in the session file header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub id: String,
    pub trial: usize,
    pub seed: u64,
    pub expert_seed: u64,
    pub epsilon: f64,
    pub w_true: Option<RewardWeights>,
    pub max_iter: usize,
    pub settings: IterationSettings,
    pub landing: LandingConfig,
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| ConfigError::Value {
                key: key.into(),
                message: format!("cannot parse `{s}`"),
            })
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::Value {
        key: key.into(),
        message: format!("cannot parse `{}`", value.trim()),
    })
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        config.apply_text(text)?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Line {
                line: n + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| ConfigError::Line {
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Applies a `key=value` override such as a CLI `--set` argument.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| ConfigError::Value {
            key: assignment.into(),
            message: "expected key=value".into(),
        })?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "method" => {
                self.methods = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        MethodName::parse(s).ok_or_else(|| ConfigError::Value {
                            key: key.into(),
                            message: format!("unknown method `{s}` (multiobjective or qeval)"),
                        })
                    })
                    .collect::<Result<_, _>>()?
            }
            "mu" => self.mu = parse_list(key, value)?,
            "k" => self.k = parse_one(key, value)?,
            "epsilon" => self.epsilon = parse_list(key, value)?,
            "trials" => self.trials = parse_one(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "expert_seed" => self.expert_seed = Some(parse_one(key, value)?),
            "max_iter" => self.max_iter = parse_one(key, value)?,
            "w_true" => {
                self.w_true = if value.eq_ignore_ascii_case("none") || value.is_empty() {
                    None
                } else {
                    let v: Vec<f64> = parse_list(key, value)?;
                    let arr: [f64; 3] = v.try_into().map_err(|_| ConfigError::Value {
                        key: key.into(),
                        message: "expected three comma-separated weights".into(),
                    })?;
                    Some(RewardWeights::try_from(arr).map_err(|e| ConfigError::Value {
                        key: key.into(),
                        message: e.to_string(),
                    })?)
                }
            }
            "precision" => self.precision = parse_one(key, value)?,
            "lambda" => self.lambda = parse_one(key, value)?,
            "initial_states" => self.initial_states = parse_one(key, value)?,
            "samples" | "M" => self.sampler.sample_count = parse_one(key, value)?,
            "burn_in" => self.sampler.burn_in = parse_one(key, value)?,
            "thinning" => self.sampler.thinning = parse_one(key, value)?,
            "warm_up" => self.sampler.warm_up = parse_one(key, value)?,
            "proposal_step" => self.sampler.initial_step = parse_one(key, value)?,
            "time_step" => self.landing.time_step = parse_one(key, value)?,
            "discount" => self.landing.discount = parse_one(key, value)?,
            "max_steps" => self.landing.max_steps = parse_one(key, value)?,
            "tolerance" => self.landing.solver.tolerance = parse_one(key, value)?,
            "max_sweeps" => self.landing.solver.max_sweeps = parse_one(key, value)?,
            "altitude" => self.landing.grids.altitude = parse_list(key, value)?,
            "vertical_rate" => self.landing.grids.vertical_rate = parse_list(key, value)?,
            "ground_speed" => self.landing.grids.ground_speed = parse_list(key, value)?,
            "vertical_accel" => self.landing.grids.vertical_accel = parse_list(key, value)?,
            "horizontal_accel" => self.landing.grids.horizontal_accel = parse_list(key, value)?,
            "landing_reward" => self.landing.fixed.landing_reward = parse_one(key, value)?,
            "backward_penalty" => self.landing.fixed.backward_penalty = parse_one(key, value)?,
            "h_pen" => self.landing.fixed.h_pen = parse_one(key, value)?,
            _ => {
                return Err(ConfigError::Value {
                    key: key.into(),
                    message: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, message: &str| {
            Err(ConfigError::Value {
                key: key.into(),
                message: message.into(),
            })
        };
        if self.methods.is_empty() {
            return bad("method", "at least one method is required");
        }
        if self.mu.is_empty() || self.mu.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return bad("mu", "values must be finite and non-negative");
        }
        if self.k == 0 {
            return bad("k", "must be at least 1");
        }
        if self.epsilon.is_empty() || self.epsilon.iter().any(|e| !(0.0..1.0).contains(e)) {
            return bad("epsilon", "values must lie in [0, 1)");
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1");
        }
        if self.max_iter == 0 {
            return bad("max_iter", "must be at least 1");
        }
        if !(self.precision > 0.0 && self.precision.is_finite()) {
            return bad("precision", "must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", "must be non-negative");
        }
        if self.initial_states == 0 {
            return bad("initial_states", "must be at least 1");
        }
        self.sampler.validate().map_err(|e| ConfigError::Value {
            key: "sampler".into(),
            message: e.to_string(),
        })?;
        self.landing.grids.validate().map_err(|e| ConfigError::Value {
            key: "grids".into(),
            message: e.to_string(),
        })?;
        if !(self.landing.time_step > 0.0) {
            return bad("time_step", "must be positive");
        }
        if !(self.landing.discount > 0.0 && self.landing.discount < 1.0) {
            return bad("discount", "must lie in (0, 1)");
        }
        if self.landing.max_steps == 0 {
            return bad("max_steps", "must be at least 1");
        }
        Ok(())
    }

    pub fn build_model(&self) -> anyhow::Result<LandingModel> {
        Ok(LandingModel::new(self.landing.clone())?)
    }

    /// Query methods in sweep order; `k` applies once, `mu` is swept.
    pub fn query_methods(&self) -> Vec<QueryMethod> {
        let mut out = Vec::new();
        for m in &self.methods {
            match m {
                MethodName::Multiobjective => {
                    out.extend(self.mu.iter().map(|&mu| QueryMethod::Multiobjective { mu }))
                }
                MethodName::Qeval => out.push(QueryMethod::ProbabilisticQEval { k: self.k }),
            }
        }
        out
    }

    pub fn iteration_settings(&self, method: QueryMethod) -> IterationSettings {
        IterationSettings {
            method,
            sampler: self.sampler,
            likelihood: LikelihoodModel {
                precision: self.precision,
            },
            initial_states: self.initial_states,
        }
    }

    /// Expands the sweep: methods, then epsilon, then trials.
    pub fn sessions(&self) -> Vec<SessionConfig> {
        let expert_base = self.expert_seed.unwrap_or(self.seed);
        let mut out = Vec::new();
        for method in self.query_methods() {
            for &epsilon in &self.epsilon {
                for trial in 0..self.trials {
                    out.push(SessionConfig {
                        id: session_id(&method, epsilon, trial),
                        trial,
                        seed: self.seed + trial as u64,
                        expert_seed: expert_base + trial as u64,
                        epsilon,
                        w_true: self.w_true,
                        max_iter: self.max_iter,
                        settings: self.iteration_settings(method),
                        landing: self.landing.clone(),
                    });
                }
            }
        }
        out
    }

    /// Renders the configuration in the file format; parsing it back gives
    /// an equal configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let methods: Vec<_> = self.methods.iter().map(|m| m.as_str()).collect();
        let _ = writeln!(s, "method = {}", methods.join(","));
        let _ = writeln!(s, "mu = {}", join(&self.mu));
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "epsilon = {}", join(&self.epsilon));
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(e) = self.expert_seed {
            let _ = writeln!(s, "expert_seed = {e}");
        }
        let _ = writeln!(s, "max_iter = {}", self.max_iter);
        match self.w_true {
            Some(w) => {
                let _ = writeln!(s, "w_true = {}", join(&w.as_array()));
            }
            None => {
                let _ = writeln!(s, "w_true = none");
            }
        }
        let _ = writeln!(s, "precision = {}", self.precision);
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "initial_states = {}", self.initial_states);
        let _ = writeln!(s, "samples = {}", self.sampler.sample_count);
        let _ = writeln!(s, "burn_in = {}", self.sampler.burn_in);
        let _ = writeln!(s, "thinning = {}", self.sampler.thinning);
        let _ = writeln!(s, "warm_up = {}", self.sampler.warm_up);
        let _ = writeln!(s, "proposal_step = {}", self.sampler.initial_step);
        let l = &self.landing;
        let _ = writeln!(s, "time_step = {}", l.time_step);
        let _ = writeln!(s, "discount = {}", l.discount);
        let _ = writeln!(s, "max_steps = {}", l.max_steps);
        let _ = writeln!(s, "tolerance = {}", l.solver.tolerance);
        let _ = writeln!(s, "max_sweeps = {}", l.solver.max_sweeps);
        let _ = writeln!(s, "altitude = {}", join(&l.grids.altitude));
        let _ = writeln!(s, "vertical_rate = {}", join(&l.grids.vertical_rate));
        let _ = writeln!(s, "ground_speed = {}", join(&l.grids.ground_speed));
        let _ = writeln!(s, "vertical_accel = {}", join(&l.grids.vertical_accel));
        let _ = writeln!(s, "horizontal_accel = {}", join(&l.grids.horizontal_accel));
        let _ = writeln!(s, "landing_reward = {}", l.fixed.landing_reward);
        let _ = writeln!(s, "backward_penalty = {}", l.fixed.backward_penalty);
        let _ = writeln!(s, "h_pen = {}", l.fixed.h_pen);
        s
    }
}

fn session_id(method: &QueryMethod, epsilon: f64, trial: usize) -> String {
    match method {
        QueryMethod::Multiobjective { mu } => format!("multiobjective-mu{mu}-eps{epsilon}-t{trial}"),
        QueryMethod::ProbabilisticQEval { k } => format!("qeval-k{k}-eps{epsilon}-t{trial}"),
    }
}

pub fn demo_w_true() -> RewardWeights {
    RewardWeights::try_from(DEMO_W_TRUE).expect("demo weights are on the simplex")
}
