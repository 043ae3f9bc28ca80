use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use uam_prefs::config::{ExperimentConfig, SessionConfig};
use uam_prefs::runner::{resume_session, run_session};
use uam_prefs::session::{load, Line, SessionFileError};
use uam_prefs_core::landing::LandingModel;

fn config(max_iter: usize) -> SessionConfig {
    let mut c = ExperimentConfig::default();
    for (k, v) in [("samples", "100"), ("burn_in", "100"), ("warm_up", "50"), ("epsilon", "0.2"), ("w_true", "0.1,0.8,0.1")] {
        c.set(k, v).unwrap();
    }
    c.set("max_iter", &max_iter.to_string()).unwrap();
    c.sessions().remove(0)
}

fn model() -> &'static LandingModel {
    static M: OnceLock<LandingModel> = OnceLock::new();
    M.get_or_init(|| LandingModel::new(config(1).landing).unwrap())
}

fn write_prefix(path: &Path, lines: &[&str], torn: &str) {
    let mut text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    text.push_str(torn);
    fs::write(path, text).unwrap();
}

#[test]
fn resumed_outcome_equals_uninterrupted_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let full_path = dir.path().join("full.jsonl");
    let full = run_session(model(), &config(3), Some(&full_path), false).unwrap();
    assert_eq!(full.rows.len(), 3);
    let text = fs::read_to_string(&full_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();

    for keep in 1..lines.len() {
        let path = dir.path().join(format!("cut{keep}.jsonl"));
        write_prefix(&path, &lines[..keep], &lines[keep][..lines[keep].len() / 3]);
        let resumed = resume_session(&path, None, false).unwrap();
        assert_eq!(resumed, full, "cut after {keep} lines");
        assert_eq!(fs::read_to_string(&path).unwrap(), text);
    }
}

#[test]
fn loaded_session_exposes_answers_and_footer() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    let outcome = run_session(model(), &config(2), Some(&path), false).unwrap();
    let loaded = load(&path).unwrap();
    assert_eq!(loaded.config, config(2));
    assert_eq!(loaded.answered.len(), 2);
    assert_eq!(loaded.summaries, outcome.summaries);
    assert_eq!(loaded.footer(), outcome.summaries.last());
    assert_eq!(loaded.valid_len, fs::metadata(&path).unwrap().len());

    let text = fs::read_to_string(&path).unwrap();
    let kinds: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["kind"].as_str().unwrap().to_owned())
        .collect();
    assert_eq!(kinds, ["header", "record", "posterior", "record", "posterior"]);
    for l in text.lines() {
        let line: Line = serde_json::from_str(l).unwrap();
        assert_eq!(serde_json::to_string(&line).unwrap(), l);
    }
}

#[test]
fn torn_final_line_is_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    run_session(model(), &config(1), Some(&path), false).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    write_prefix(&path, &lines[..2], "{\"kind\":\"posterior\",\"iter");
    let loaded = load(&path).unwrap();
    assert_eq!(loaded.answered.len(), 1);
    assert!(loaded.summaries.is_empty());
    assert_eq!(loaded.valid_len as usize, lines[0].len() + lines[1].len() + 2);
}

#[test]
fn malformed_files_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    run_session(model(), &config(2), Some(&path), false).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let l: Vec<&str> = text.lines().collect();
    let bad_version = l[0].replace("\"format_version\":1", "\"format_version\":7");
    assert_ne!(bad_version, l[0]);

    let cases: Vec<(Vec<&str>, usize)> = vec![
        (vec![l[1], l[2]], 1),
        (vec![l[0], l[3], l[4]], 2),
        (vec![l[0], "not json", l[1], l[2]], 2),
        (vec![l[0], l[1], l[0]], 3),
        (vec![&bad_version], 1),
        (vec![], 1),
    ];
    for (n, (lines, at)) in cases.into_iter().enumerate() {
        write_prefix(&path, &lines, "");
        match load(&path) {
            Err(SessionFileError::Format { line, .. }) => assert_eq!(line, at, "case {n}"),
            other => panic!("case {n}: {other:?}"),
        }
    }
    assert!(matches!(
        load(&dir.path().join("absent.jsonl")),
        Err(SessionFileError::Io { .. })
    ));
}

#[test]
fn resume_needs_a_true_weight_vector() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    let mut c = config(2);
    c.w_true = None;
    uam_prefs::session::SessionWriter::create(&path, &c).unwrap();
    assert!(resume_session(&path, None, false).is_err());
}
