//! CSV files: per-iteration metrics, final weights and trajectory exports.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use uam_prefs_core::landing::LandingModel;
use uam_prefs_core::mdp::Trajectory;
use uam_prefs_core::query::QueryMethod;
use uam_prefs_core::RewardWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub session: String,
    pub trial: usize,
    pub seed: u64,
    pub iteration: usize,
    pub method: String,
    pub mu: Option<f64>,
    pub k: Option<usize>,
    pub epsilon: f64,
    pub cosine_similarity: Option<f64>,
    pub acceptance_rate: f64,
    /// Filled only when timing is requested, so default runs are reproducible byte for byte.
    pub wall_seconds: Option<f64>,
}

impl MetricRow {
    pub fn method_columns(method: &QueryMethod) -> (String, Option<f64>, Option<usize>) {
        match *method {
            QueryMethod::Multiobjective { mu } => (method.name().into(), Some(mu), None),
            QueryMethod::ProbabilisticQEval { k } => (method.name().into(), None, Some(k)),
        }
    }
}

pub fn write_metrics<W: Write>(out: W, rows: &[MetricRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "session",
        "trial",
        "seed",
        "iteration",
        "method",
        "mu",
        "k",
        "epsilon",
        "cosine_similarity",
        "acceptance_rate",
        "wall_seconds",
    ])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(input: R) -> csv::Result<Vec<MetricRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalWeightsRow {
    pub session: String,
    pub alpha: f64,
    pub beta: f64,
    pub gamma_accel: f64,
}

impl FinalWeightsRow {
    pub fn new(session: &str, w: &RewardWeights) -> Self {
        Self {
            session: session.into(),
            alpha: w.alpha(),
            beta: w.beta(),
            gamma_accel: w.gamma_accel(),
        }
    }
}

pub fn write_final_weights<W: Write>(out: W, rows: &[FinalWeightsRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["session", "alpha", "beta", "gamma_accel"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One visited state. The action columns are empty on a trajectory's final row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRow {
    pub trajectory_id: usize,
    pub step: usize,
    pub time_s: f64,
    pub h_ft: f64,
    pub h_dot_fps: f64,
    pub x_dot_fps: f64,
    pub vertical_accel: Option<f64>,
    pub horizontal_accel: Option<f64>,
}

pub const TRAJECTORY_HEADER: [&str; 8] = [
    "trajectory_id",
    "step",
    "time_s",
    "h_ft",
    "h_dot_fps",
    "x_dot_fps",
    "vertical_accel",
    "horizontal_accel",
];

pub fn trajectory_rows(model: &LandingModel, id: usize, traj: &Trajectory) -> Vec<StateRow> {
    let dt = model.config().time_step;
    traj.steps
        .iter()
        .enumerate()
        .map(|(step, s)| {
            let state = model.decode(s.state);
            let action = s.action.map(|a| model.action(a));
            StateRow {
                trajectory_id: id,
                step,
                time_s: step as f64 * dt,
                h_ft: state.h,
                h_dot_fps: state.h_dot,
                x_dot_fps: state.x_dot,
                vertical_accel: action.map(|a| a.vertical_accel),
                horizontal_accel: action.map(|a| a.horizontal_accel),
            }
        })
        .collect()
}

pub fn write_state_rows<W: Write>(out: W, rows: &[StateRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectories<W: Write>(
    out: W,
    model: &LandingModel,
    trajectories: &[Trajectory],
) -> csv::Result<()> {
    let rows: Vec<StateRow> = trajectories
        .iter()
        .enumerate()
        .flat_map(|(i, t)| trajectory_rows(model, i, t))
        .collect();
    write_state_rows(out, &rows)
}

pub fn read_state_rows<R: Read>(input: R) -> csv::Result<Vec<StateRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
