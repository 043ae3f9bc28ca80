//! HTTP/JSON service for live elicitation.
//!
//! | Method | Path          | Body / result |
//! |--------|---------------|---------------|
//! | GET    | `/session`    | session metadata and iteration count |
//! | GET    | `/query`      | the live query: both rollout sets as state rows, iteration, token |
//! | POST   | `/preference` | `{"token": "...", "choice": "a" \| "b"}`; 200 once the next query is ready |
//! | GET    | `/posterior`  | current samples plus a gridded KDE over the `(alpha, beta)` triangle |
//!
//! A token that does not match the live query gets 409; a malformed body
//! gets 400. Every mutation goes through one lock; reads are served from a
//! snapshot of the last completed iteration.

use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use uam_prefs_core::iteration::{QueryBundle, RewardIteration};
use uam_prefs_core::landing::{LandingModel, LandingState, TrajectorySet};
use uam_prefs_core::posterior::Response as Choice;
use uam_prefs_core::query::{Kde, QueryMethod};

use crate::config::SessionConfig;
use crate::export::{trajectory_rows, StateRow};
use crate::session::{self, SessionWriter};

/// Cells per axis of the `/posterior` density grid.
pub const KDE_RESOLUTION: usize = 50;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreferenceBody {
    token: String,
    choice: ChoiceName,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ChoiceName {
    A,
    B,
}

#[derive(Debug, Clone, Serialize)]
struct QueryView<'a> {
    complete: bool,
    iteration: usize,
    max_iter: usize,
    token: &'a str,
    initial_states: &'a [LandingState],
    rollouts_a: Vec<Vec<StateRow>>,
    rollouts_b: Vec<Vec<StateRow>>,
}

struct Snapshot {
    session: Value,
    query: Value,
    posterior: Value,
}

struct Live {
    session: RewardIteration<'static>,
    config: SessionConfig,
    pending: Option<(QueryBundle, String)>,
    writer: Option<SessionWriter>,
}

pub struct LiveService {
    live: Mutex<Live>,
    snapshot: RwLock<Arc<Snapshot>>,
}

#[derive(Debug, thiserror::Error)]
pub enum SubmitError {
    #[error("token does not match the live query")]
    StaleToken,
    #[error("session is complete")]
    Complete,
    #[error(transparent)]
    Internal(#[from] anyhow::Error),
}

fn rows(model: &LandingModel, set: &TrajectorySet) -> Vec<Vec<StateRow>> {
    set.trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| trajectory_rows(model, i, t))
        .collect()
}

fn method_json(method: &QueryMethod) -> Value {
    match *method {
        QueryMethod::Multiobjective { mu } => json!({"name": method.name(), "mu": mu}),
        QueryMethod::ProbabilisticQEval { k } => json!({"name": method.name(), "k": k}),
    }
}

impl Live {
    fn complete(&self) -> bool {
        self.session.state().completed() >= self.config.max_iter
    }

    fn prepare_next(&mut self) -> anyhow::Result<()> {
        self.pending = if self.complete() {
            None
        } else {
            let bundle = self.session.propose()?;
            Some((bundle, uuid::Uuid::new_v4().to_string()))
        };
        Ok(())
    }

    fn snapshot(&self) -> anyhow::Result<Snapshot> {
        let state = self.session.state();
        let estimate = state.estimate()?;
        let session = json!({
            "session_id": self.config.id,
            "completed": state.completed(),
            "next_iteration": self.session.next_iteration(),
            "max_iter": self.config.max_iter,
            "complete": self.complete(),
            "method": method_json(&self.config.settings.method),
            "estimate": estimate,
        });
        let model = self.session.model();
        let query = match &self.pending {
            Some((bundle, token)) => serde_json::to_value(QueryView {
                complete: false,
                iteration: bundle.iteration,
                max_iter: self.config.max_iter,
                token,
                initial_states: &bundle.initial_states,
                rollouts_a: rows(model, &bundle.rollouts_a),
                rollouts_b: rows(model, &bundle.rollouts_b),
            })?,
            None => json!({
                "complete": true,
                "iteration": state.completed(),
                "max_iter": self.config.max_iter,
                "estimate": estimate,
            }),
        };
        let kde = Kde::from_samples(&state.samples)?;
        let axis: Vec<f64> = (0..KDE_RESOLUTION)
            .map(|i| (i as f64 + 0.5) / KDE_RESOLUTION as f64)
            .collect();
        let density: Vec<Vec<Option<f64>>> = axis
            .iter()
            .map(|&beta| {
                axis.iter()
                    .map(|&alpha| (alpha + beta < 1.0).then(|| kde.density([alpha, beta])))
                    .collect()
            })
            .collect();
        let posterior = json!({
            "iteration": state.completed(),
            "acceptance_rate": state.samples.acceptance_rate,
            "estimate": estimate,
            "samples": state.samples.samples,
            "kde": {
                "resolution": KDE_RESOLUTION,
                "alpha": axis,
                "beta": axis,
                "bandwidth": kde.bandwidth(),
                "density": density,
            },
        });
        Ok(Snapshot {
            session,
            query,
            posterior,
        })
    }
}

impl LiveService {
    /// Starts a live session. If `session_path` names an existing session
    /// file it is resumed, otherwise a new file is created there.
    pub fn new(config: SessionConfig, session_path: Option<&Path>) -> anyhow::Result<Arc<Self>> {
        let loaded = match session_path {
            Some(p) if p.exists() => Some(session::load(p)?),
            _ => None,
        };
        let config = loaded.as_ref().map_or(config, |l| l.config.clone());
        if config.w_true.is_some() {
            anyhow::bail!("a live session must not carry w_true");
        }
        // One live session per process, so the model lives for the process.
        let model: &'static LandingModel =
            Box::leak(Box::new(LandingModel::new(config.landing.clone())?));
        let (session, writer) = match (session_path, &loaded) {
            (Some(p), Some(loaded)) => {
                let session = RewardIteration::replay(
                    model,
                    config.settings,
                    config.seed,
                    None,
                    &loaded.answered,
                )?;
                (session, Some(SessionWriter::reopen(p, loaded)?))
            }
            (path, _) => {
                let session = RewardIteration::new(model, config.settings, config.seed, None)?;
                let writer = path.map(|p| SessionWriter::create(p, &config)).transpose()?;
                (session, writer)
            }
        };
        let mut live = Live {
            session,
            config,
            pending: None,
            writer,
        };
        live.prepare_next()?;
        let snapshot = live.snapshot()?;
        Ok(Arc::new(Self {
            live: Mutex::new(live),
            snapshot: RwLock::new(Arc::new(snapshot)),
        }))
    }

    fn current(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn session_json(&self) -> Value {
        self.current().session.clone()
    }

    pub fn query_json(&self) -> Value {
        self.current().query.clone()
    }

    pub fn posterior_json(&self) -> Value {
        self.current().posterior.clone()
    }

    /// Records the answer to the live query and prepares the next one.
    pub fn submit(&self, token: &str, choice: Choice) -> Result<Value, SubmitError> {
        let mut live = self.live.lock().expect("session lock");
        let Some((bundle, live_token)) = live.pending.take() else {
            return Err(if live.complete() {
                SubmitError::Complete
            } else {
                SubmitError::StaleToken
            });
        };
        if live_token != token {
            live.pending = Some((bundle, live_token));
            return Err(SubmitError::StaleToken);
        }
        let before = live.session.state().completed();
        let result = (|| -> anyhow::Result<()> {
            live.session.submit(&bundle, choice)?;
            let Live {
                session, writer, ..
            } = &mut *live;
            if let Some(w) = writer.as_mut() {
                w.append_latest(session).context("writing session file")?;
            }
            live.prepare_next()?;
            Ok(())
        })();
        if let Err(e) = result {
            if live.session.state().completed() == before {
                live.pending = Some((bundle, live_token));
            }
            return Err(e.into());
        }
        let snapshot = live.snapshot()?;
        let next = json!({
            "accepted_iteration": live.session.state().completed(),
            "complete": live.complete(),
            "next": snapshot.query.get("token").cloned().unwrap_or(Value::Null),
        });
        *self.snapshot.write().expect("snapshot lock") = Arc::new(snapshot);
        Ok(next)
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": message.into()}))).into_response()
}

async fn get_session(State(s): State<Arc<LiveService>>) -> Json<Value> {
    Json(s.session_json())
}

async fn get_query(State(s): State<Arc<LiveService>>) -> Json<Value> {
    Json(s.query_json())
}

async fn get_posterior(State(s): State<Arc<LiveService>>) -> Json<Value> {
    Json(s.posterior_json())
}

async fn post_preference(State(s): State<Arc<LiveService>>, body: Bytes) -> Response {
    let body: PreferenceBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed body: {e}")),
    };
    let choice = match body.choice {
        ChoiceName::A => Choice::A,
        ChoiceName::B => Choice::B,
    };
    let result = tokio::task::spawn_blocking(move || s.submit(&body.token, choice)).await;
    match result {
        Ok(Ok(v)) => (StatusCode::OK, Json(v)).into_response(),
        Ok(Err(SubmitError::StaleToken)) => error(StatusCode::CONFLICT, "stale or unknown token"),
        Ok(Err(SubmitError::Complete)) => error(StatusCode::CONFLICT, "session is complete"),
        Ok(Err(SubmitError::Internal(e))) => {
            error(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}"))
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub fn router(service: Arc<LiveService>) -> Router {
    Router::new()
        .route("/session", get(get_session))
        .route("/query", get(get_query))
        .route("/preference", post(post_preference))
        .route("/posterior", get(get_posterior))
        .with_state(service)
}

/// Serves until the process is interrupted.
pub async fn serve(service: Arc<LiveService>, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .with_context(|| format!("binding {bind}"))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
