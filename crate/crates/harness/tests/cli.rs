use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

use uam_prefs::export::{read_metrics, read_state_rows, write_state_rows, TRAJECTORY_HEADER};
use uam_prefs_core::landing::LandingGrids;

const FAST: [&str; 6] = [
    "--set",
    "samples=100",
    "--set",
    "burn_in=100",
    "--set",
    "warm_up=50",
];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uam-prefs"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_into(dir: &Path, extra: &[&str]) {
    let mut args = vec!["run", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(&FAST);
    args.extend_from_slice(extra);
    run_ok(&args);
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn single_iteration_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    run_into(dir.path(), &["--max-iter", "1"]);
    let metrics = lines(&dir.path().join("metrics.csv"));
    assert_eq!(metrics.len(), 2);
    assert_eq!(
        metrics[0],
        "session,trial,seed,iteration,method,mu,k,epsilon,cosine_similarity,acceptance_rate,wall_seconds"
    );
    let rows = read_metrics(fs::File::open(dir.path().join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows[0].iteration, 1);
    assert_eq!(rows[0].method, "multiobjective");
    assert_eq!(rows[0].mu, Some(500.0));
    assert!(rows[0].cosine_similarity.is_some());
    assert_eq!(rows[0].wall_seconds, None);
    let weights = lines(&dir.path().join("final_weights.csv"));
    assert_eq!(weights[0], "session,alpha,beta,gamma_accel");
    assert_eq!(weights.len(), 2);
    assert!(dir.path().join("sessions").join(format!("{}.jsonl", rows[0].session)).exists());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let extra = ["--max-iter", "2", "--epsilon", "0.2", "--seed", "9"];
    run_into(a.path(), &extra);
    run_into(b.path(), &extra);
    for name in ["metrics.csv", "final_weights.csv", "sessions/multiobjective-mu500-eps0.2-t0.jsonl"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn timing_fills_the_wall_clock_column() {
    let dir = tempfile::tempdir().unwrap();
    run_into(dir.path(), &["--max-iter", "1", "--timing"]);
    let rows = read_metrics(fs::File::open(dir.path().join("metrics.csv")).unwrap()).unwrap();
    assert!(rows[0].wall_seconds.unwrap() > 0.0);
}

#[test]
fn invalid_configuration_fails_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "seed = 1\nmu = five hundred\n").unwrap();
    let out = bin()
        .args(["run", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("mu"), "{err}");
    assert!(!dir.path().join("out").join("metrics.csv").exists());

    for args in [
        vec!["run", "--mu", "-1"],
        vec!["run", "--epsilon", "1.5"],
        vec!["run", "--set", "nonsense=1"],
        vec!["sample", "--weights", "0.5,0.5"],
        vec!["sample", "--weights", "0.5,0.6,-0.1"],
    ] {
        let out = bin().args(&args).output().unwrap();
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"), "{args:?}");
    }
}

#[test]
fn serve_refuses_a_true_weight_vector() {
    let out = bin()
        .args(["serve", "--w-true", "0.1,0.8,0.1", "--bind", "127.0.0.1:0"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("w_true"));
}

#[test]
fn mu_sweep_produces_thirty_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    fs::write(&cfg, "mu = 0, 1, 10, 100, 500, 1000\ntrials = 5\nmax_iter = 1\n").unwrap();
    run_into(dir.path(), &["--config", cfg.to_str().unwrap()]);
    let rows = read_metrics(fs::File::open(dir.path().join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 30);
    for (i, r) in rows.iter().enumerate() {
        let mu = [0.0, 1.0, 10.0, 100.0, 500.0, 1000.0][i / 5];
        assert_eq!(r.mu, Some(mu));
        assert_eq!(r.trial, i % 5);
        assert_eq!(r.iteration, 1);
    }
    assert_eq!(fs::read_dir(dir.path().join("sessions")).unwrap().count(), 30);
    assert_eq!(lines(&dir.path().join("final_weights.csv")).len(), 31);
}

fn sample(dir: &Path, name: &str, count: &str, seed: &str) -> Vec<u8> {
    let path = dir.join(name);
    run_ok(&[
        "sample",
        "--weights",
        "0.1,0.8,0.1",
        "--count",
        count,
        "--seed",
        seed,
        "--out",
        path.to_str().unwrap(),
    ]);
    fs::read(path).unwrap()
}

#[test]
fn empty_sample_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = sample(dir.path(), "empty.csv", "0", "1");
    assert_eq!(String::from_utf8(bytes).unwrap(), format!("{}\n", TRAJECTORY_HEADER.join(",")));
}

#[test]
fn samples_are_reproducible_on_grid_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let a = sample(dir.path(), "a.csv", "6", "4");
    let b = sample(dir.path(), "b.csv", "6", "4");
    assert_eq!(a, b);
    assert_ne!(a, sample(dir.path(), "c.csv", "6", "5"));

    let rows = read_state_rows(a.as_slice()).unwrap();
    let grids = LandingGrids::default();
    let ids: std::collections::BTreeSet<_> = rows.iter().map(|r| r.trajectory_id).collect();
    assert_eq!(ids.len(), 6);
    for r in &rows {
        assert!(grids.altitude.contains(&r.h_ft), "{r:?}");
        assert!(grids.vertical_rate.contains(&r.h_dot_fps), "{r:?}");
        assert!(grids.ground_speed.contains(&r.x_dot_fps), "{r:?}");
        if let (Some(v), Some(h)) = (r.vertical_accel, r.horizontal_accel) {
            assert!(grids.vertical_accel.contains(&v) && grids.horizontal_accel.contains(&h));
        }
        assert_eq!(r.time_s, r.step as f64);
    }

    let mut again = Vec::new();
    write_state_rows(&mut again, &rows).unwrap();
    assert_eq!(again, a);
}

#[test]
fn stdout_sample_matches_file_sample() {
    let dir = tempfile::tempdir().unwrap();
    let file = sample(dir.path(), "f.csv", "2", "8");
    let out = run_ok(&["sample", "--weights", "0.1,0.8,0.1", "--count", "2", "--seed", "8"]);
    assert_eq!(out.stdout, file);
}

#[test]
fn resume_after_a_crash_matches_an_uninterrupted_run() {
    let full = tempfile::tempdir().unwrap();
    run_into(full.path(), &["--max-iter", "4", "--epsilon", "0.1"]);
    let id = "multiobjective-mu500-eps0.1-t0";
    let reference = fs::read(full.path().join("sessions").join(format!("{id}.jsonl"))).unwrap();
    let text = String::from_utf8(reference.clone()).unwrap();
    let all: Vec<&str> = text.lines().collect();
    // Header, then a record and a posterior line per iteration.
    assert_eq!(all.len(), 1 + 2 * 4);

    let work = tempfile::tempdir().unwrap();
    // Killed after iteration 2 while writing record 3; killed between the
    // record and posterior lines of iteration 1.
    let cuts = [
        (5usize, Some(all[5].len() / 2)),
        (2, None),
        (1, Some(10)),
    ];
    for (n, (keep, torn)) in cuts.into_iter().enumerate() {
        let path = work.path().join(format!("s{n}.jsonl"));
        let mut f = fs::File::create(&path).unwrap();
        for line in &all[..keep] {
            writeln!(f, "{line}").unwrap();
        }
        if let Some(t) = torn {
            f.write_all(&all[keep].as_bytes()[..t]).unwrap();
        }
        drop(f);
        run_ok(&["resume", path.to_str().unwrap()]);
        assert_eq!(fs::read(&path).unwrap(), reference, "cut {n}");

        let mut metrics = path.clone().into_os_string();
        metrics.push(".metrics.csv");
        assert_eq!(
            fs::read(metrics).unwrap(),
            fs::read(full.path().join("metrics.csv")).unwrap()
        );
    }
}

#[test]
fn resume_can_extend_a_finished_session() {
    let short = tempfile::tempdir().unwrap();
    let long = tempfile::tempdir().unwrap();
    run_into(short.path(), &["--max-iter", "2"]);
    run_into(long.path(), &["--max-iter", "3"]);
    let id = "multiobjective-mu500-eps0-t0.jsonl";
    let path = short.path().join("sessions").join(id);
    run_ok(&["resume", path.to_str().unwrap(), "--max-iter", "3"]);
    let a = lines(&path);
    let b = lines(&long.path().join("sessions").join(id));
    // Headers differ in max_iter only.
    assert_eq!(a[1..], b[1..]);
}

#[test]
fn corrupt_session_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.jsonl");
    fs::write(&path, "{\"kind\":\"nonsense\"}\n{}\n").unwrap();
    let out = bin().args(["resume", path.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    let out = bin().args(["resume"]).arg(dir.path().join("missing.jsonl")).output().unwrap();
    assert!(!out.status.success());
}
