//! Running simulated-expert sessions, single or as a sweep, and resuming them.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::Context;
use uam_prefs_core::iteration::{PreferenceSource, RewardIteration, SimulatedExpert};
use uam_prefs_core::landing::LandingModel;
use uam_prefs_core::RewardWeights;

use crate::config::{demo_w_true, ExperimentConfig, SessionConfig};
use crate::export::{write_final_weights, write_metrics, FinalWeightsRow, MetricRow};
use crate::session::{self, Line, PosteriorSummary, SessionWriter};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Where `metrics.csv`, `final_weights.csv` and `sessions/` go. Nothing
    /// is written when absent.
    pub out_dir: Option<PathBuf>,
    pub timing: bool,
    /// Worker threads for a sweep; 0 picks the available parallelism.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub config: SessionConfig,
    pub rows: Vec<MetricRow>,
    /// Posterior summary after each iteration.
    pub summaries: Vec<PosteriorSummary>,
    pub prior_cosine: Option<f64>,
    pub estimate: RewardWeights,
}

impl SessionOutcome {
    /// Cosine similarity after `iteration` queries; the prior's at 0.
    pub fn cosine_at(&self, iteration: usize) -> Option<f64> {
        match iteration {
            0 => self.prior_cosine,
            n => self.summaries.get(n - 1).and_then(|s| s.cosine_similarity),
        }
    }
}

fn metric_row(config: &SessionConfig, summary: &PosteriorSummary, wall: Option<f64>) -> MetricRow {
    let (method, mu, k) = MetricRow::method_columns(&config.settings.method);
    MetricRow {
        session: config.id.clone(),
        trial: config.trial,
        seed: config.seed,
        iteration: summary.iteration,
        method,
        mu,
        k,
        epsilon: config.epsilon,
        cosine_similarity: summary.cosine_similarity,
        acceptance_rate: summary.acceptance_rate,
        wall_seconds: wall,
    }
}

/// Steps `session` to `config.max_iter`, appending to `writer` after each
/// iteration. `rows` holds rows already produced for earlier iterations.
fn drive(
    model: &LandingModel,
    config: &SessionConfig,
    mut session: RewardIteration<'_>,
    mut writer: Option<SessionWriter>,
    mut rows: Vec<MetricRow>,
    timing: bool,
) -> anyhow::Result<SessionOutcome> {
    let w_true = config.w_true.context("simulated sessions need w_true")?;
    let mut expert = SimulatedExpert::new(w_true, config.epsilon, config.expert_seed)?;
    while session.state().completed() < config.max_iter {
        let t0 = Instant::now();
        let bundle = session.propose()?;
        let response = expert.respond(model, &bundle)?;
        let summary = PosteriorSummary::from(session.submit(&bundle, response)?);
        let wall = timing.then(|| t0.elapsed().as_secs_f64());
        rows.push(metric_row(config, &summary, wall));
        if let Some(w) = writer.as_mut() {
            w.append_latest(&session)?;
        }
    }
    Ok(SessionOutcome {
        config: config.clone(),
        rows,
        summaries: session.state().history.iter().map(Into::into).collect(),
        prior_cosine: session.prior_cosine(),
        estimate: session.state().estimate()?,
    })
}

/// Runs one fresh session, writing its session file when a path is given.
pub fn run_session(
    model: &LandingModel,
    config: &SessionConfig,
    session_path: Option<&Path>,
    timing: bool,
) -> anyhow::Result<SessionOutcome> {
    let session = RewardIteration::new(model, config.settings, config.seed, config.w_true)?;
    let writer = session_path
        .map(|p| SessionWriter::create(p, config))
        .transpose()?;
    drive(model, config, session, writer, Vec::new(), timing)
}

/// Continues a session file to its stored `max_iter`, or to `max_iter`
/// when given. Stored answers are replayed, so the result matches an
/// uninterrupted run.
pub fn resume_session(
    path: &Path,
    max_iter: Option<usize>,
    timing: bool,
) -> anyhow::Result<SessionOutcome> {
    let loaded = session::load(path)?;
    let mut config = loaded.config.clone();
    if let Some(m) = max_iter {
        config.max_iter = m;
    }
    let model = LandingModel::new(config.landing.clone())?;
    let session = RewardIteration::replay(
        &model,
        config.settings,
        config.seed,
        config.w_true,
        &loaded.answered,
    )?;
    let mut writer = SessionWriter::reopen(path, &loaded)?;
    let summarized = loaded.footer().map_or(0, |s| s.iteration);
    if summarized < session.state().completed() {
        if let Some(m) = session.state().history.last() {
            writer.append(&Line::Posterior(m.into()))?;
        }
    }
    let rows = session
        .state()
        .history
        .iter()
        .map(|m| metric_row(&config, &m.into(), None))
        .collect();
    drive(&model, &config, session, Some(writer), rows, timing)
}

/// Runs every session of the sweep. Results come back in sweep order
/// regardless of the thread count.
pub fn run_experiment(
    config: &ExperimentConfig,
    options: &RunOptions,
) -> anyhow::Result<Vec<SessionOutcome>> {
    let mut config = config.clone();
    if config.w_true.is_none() {
        config.w_true = Some(demo_w_true());
    }
    config.validate()?;
    let model = config.build_model()?;
    let sessions = config.sessions();

    let session_dir = options.out_dir.as_ref().map(|d| d.join("sessions"));
    if let Some(dir) = &session_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let threads = match options.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(sessions.len())
    .max(1);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<anyhow::Result<SessionOutcome>>>> =
        Mutex::new((0..sessions.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(s) = sessions.get(i) else { break };
                let path = session_dir.as_ref().map(|d| d.join(format!("{}.jsonl", s.id)));
                log::info!("session {} started", s.id);
                let r = run_session(&model, s, path.as_deref(), options.timing);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    let outcomes = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every session ran"))
        .collect::<anyhow::Result<Vec<_>>>()?;

    if let Some(dir) = &options.out_dir {
        write_outputs(dir, &outcomes)?;
    }
    Ok(outcomes)
}

/// Writes `metrics.csv` and `final_weights.csv` into `dir`.
pub fn write_outputs(dir: &Path, outcomes: &[SessionOutcome]) -> anyhow::Result<()> {
    let rows: Vec<MetricRow> = outcomes.iter().flat_map(|o| o.rows.iter().cloned()).collect();
    let metrics = dir.join("metrics.csv");
    write_metrics(fs::File::create(&metrics)?, &rows)
        .with_context(|| format!("writing {}", metrics.display()))?;
    let weights: Vec<FinalWeightsRow> = outcomes
        .iter()
        .map(|o| FinalWeightsRow::new(&o.config.id, &o.estimate))
        .collect();
    let path = dir.join("final_weights.csv");
    write_final_weights(fs::File::create(&path)?, &weights)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
