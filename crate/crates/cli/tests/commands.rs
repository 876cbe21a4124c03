use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gazeintent_core::benchmark::SessionReport;
use gazeintent_core::sessionlog::{BoxRecord, Meta, MetaObject, PredictionLog, PredictionRecord, Record, SessionLog};
use gazeintent_core::simulator::{NoiseProfile, SimulationConfig};

fn gazeintent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gazeintent")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = gazeintent(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn clean_config(dir: &Path) -> PathBuf {
    let cfg = SimulationConfig { noise: NoiseProfile::clean(), ..SimulationConfig::benchmark() };
    let path = dir.join("clean.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn simulate_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["simulate", "--seed", "42", "--out", p(&a)]);
    ok(&["simulate", "--seed", "42", "--out", p(&b)]);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 4, "{names:?}");
    for name in &names {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name:?} differs");
    }
    let log = SessionLog::read(a.join("session.jsonl")).unwrap();
    // 60 s at 120 Hz
    assert_eq!(log.gaze().len(), 7200);
}

#[test]
fn missing_objects_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = serde_json::to_value(SimulationConfig::benchmark()).unwrap();
    cfg["scene"].as_object_mut().unwrap().remove("objects");
    let path = dir.path().join("bad.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let out = gazeintent(&["simulate", "--config", p(&path), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("objects"));
}

#[test]
fn unknown_method_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--out", p(dir.path())]);
    let session = dir.path().join("session.jsonl");
    let out = gazeintent(&["classify", "--session", p(&session), "--method", "cosine", "--out", p(&dir.path().join("x.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn clean_emd_matches_truth_after_warm_up() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = clean_config(dir.path());
    ok(&["simulate", "--config", p(&cfg), "--seed", "3", "--out", p(dir.path())]);
    let session = dir.path().join("session.jsonl");
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    ok(&["classify", "--session", p(&session), "--method", "emd", "--out", p(&a)]);
    ok(&["classify", "--session", p(&session), "--method", "emd", "--out", p(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let log = SessionLog::read(&session).unwrap();
    let truth = log.truth().unwrap().labels;
    let preds = PredictionLog::read(&a).unwrap();
    let by_t: std::collections::HashMap<u64, Option<String>> =
        preds.predictions().map(|(t, l, _)| ((t * 1e6).round() as u64, l.clone())).collect();
    let gaze = log.gaze();
    // Warm-up: the window (60 samples, blinks excluded) lies inside one truth run.
    let warm = 120;
    let mut checked = 0;
    for i in warm..gaze.len() {
        if truth[i - warm..=i].iter().all(|l| *l == truth[i]) {
            let pred = by_t.get(&((gaze[i].t * 1e6).round() as u64)).expect("prediction per sample after warm-up");
            assert_eq!(pred, &truth[i], "sample {i} t={}", gaze[i].t);
            checked += 1;
        }
    }
    assert!(checked > 6000, "{checked}");

    let fix = dir.path().join("fix.jsonl");
    ok(&["classify", "--session", p(&session), "--method", "fixation", "--out", p(&fix)]);
    assert!(PredictionLog::read(&fix).unwrap().predictions().count() > 0);
}

#[test]
fn evaluate_perfect_predictions_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = clean_config(dir.path());
    ok(&["simulate", "--config", p(&cfg), "--out", p(dir.path())]);
    let session = dir.path().join("session.jsonl");
    let log = SessionLog::read(&session).unwrap();
    let truth = log.truth().unwrap().labels;
    let perfect = PredictionLog {
        records: log
            .gaze()
            .iter()
            .zip(&truth)
            .map(|(g, l)| PredictionRecord::Prediction { t: g.t, label: l.clone(), scores: Default::default() })
            .collect(),
    };
    let preds = dir.path().join("perfect.jsonl");
    perfect.write(&preds).unwrap();
    let report = dir.path().join("report.json");
    ok(&["evaluate", "--session", p(&session), "--predictions", p(&preds), "--method", "emd", "--out", p(&report)]);
    let text = fs::read_to_string(&report).unwrap();
    let parsed: SessionReport = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.kappa, Some(1.0));
    let again: SessionReport = serde_json::from_str(&serde_json::to_string(&parsed).unwrap()).unwrap();
    assert_eq!(parsed, again);
    assert!(dir.path().join("report.events.csv").exists());
    for label in ["bottle", "cup", "scissors"] {
        let csv = fs::read_to_string(dir.path().join(format!("report.traces.{label}.csv"))).unwrap();
        assert!(csv.starts_with("t,emd,kl,bhatt,euclidean,truth\n"));
        assert!(csv.lines().count() > 100);
    }
}

#[test]
fn misaligned_predictions_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--out", p(dir.path())]);
    let session = dir.path().join("session.jsonl");
    let bad = PredictionLog { records: vec![PredictionRecord::Prediction { t: 0.0012345, label: None, scores: Default::default() }] };
    let preds = dir.path().join("bad.jsonl");
    bad.write(&preds).unwrap();
    let out = gazeintent(&["evaluate", "--session", p(&session), "--predictions", p(&preds), "--out", p(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

/// 119 selection attempts: 83 right, 7 wrong, 29 without a detected gesture.
fn selection_fixture_logs() -> (SessionLog, PredictionLog) {
    let meta = Meta {
        frame_width: 640,
        frame_height: 480,
        objects: vec![
            MetaObject { id: 1, label: "bottle".into(), patch: "obj1.pgm".into() },
            MetaObject { id: 2, label: "cup".into(), patch: "obj2.pgm".into() },
        ],
    };
    let mut log = SessionLog::new(meta);
    log.push(Record::Frame { t: 0.0, boxes: vec![BoxRecord { id: 1, cx: 100.0, cy: 100.0, w: 50.0, h: 50.0 }] });
    let mut preds = PredictionLog { records: Vec::new() };
    for i in 0..119 {
        let t = i as f64;
        log.push(Record::Gaze { t, x: 100.0, y: 100.0, conf: 1.0 });
        log.push(Record::Selection { t, intended: Some("bottle".into()) });
        match i {
            0..83 => preds.records.push(PredictionRecord::selection(t, Some("bottle".into()))),
            83..90 => preds.records.push(PredictionRecord::selection(t, Some("cup".into()))),
            _ => {}
        }
    }
    (log, preds)
}

#[test]
fn selection_fixture_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let (log, preds) = selection_fixture_logs();
    let (session, predictions, report) = (dir.path().join("s.jsonl"), dir.path().join("p.jsonl"), dir.path().join("r.json"));
    log.write(&session).unwrap();
    preds.write(&predictions).unwrap();
    let out = ok(&["evaluate", "--session", p(&session), "--predictions", p(&predictions), "--out", p(&report)]);
    let r: SessionReport = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let i = &r.interaction;
    assert_eq!((i.attempts, i.correct, i.deletion_misclassification, i.deletion_missed_detection), (119, 83, 7, 29));
    assert!((100.0 * i.success_rate.unwrap() - 92.2).abs() < 0.05);
    assert!(String::from_utf8_lossy(&out.stdout).contains("92.2%"));
    assert_eq!(r.kappa, None);
}

#[test]
fn compare_metrics_writes_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = ok(&["compare-metrics", "--max-shift", "200", "--step", "2", "--out", p(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("delta,emd,kl,bhatt"));
    assert_eq!(text.lines().count(), 102);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["emd_r2"].as_f64().unwrap() >= 0.99);
}

#[test]
fn benchmark_runs_small() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.json");
    ok(&["benchmark", "--seeds", "2", "--out", p(&out)]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    for m in ["emd", "kl", "bhatt", "fixation"] {
        assert_eq!(v["methods"][m]["kappa_per_seed"].as_array().unwrap().len(), 2, "{m}");
    }
    let kappa = fs::read_to_string(dir.path().join("bench.kappa.csv")).unwrap();
    assert_eq!(kappa.lines().count(), 1 + 4 * 2);
}
