use std::path::Path;
use std::process::{Command, Output};

use fingermi::dataio::{read_eegf, MAGIC};
use fingermi::harness::table;

fn fingermi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fingermi"))
        .args(args)
        .env_remove("FINGERMI_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = fingermi(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stats_on_table_columns() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, values: &[f64]| {
        let path = dir.path().join(name);
        let body: String = values.iter().map(|v| format!("{v}\n")).collect();
        std::fs::write(&path, format!("accuracy\n{body}")).unwrap();
        path
    };
    let a = write("fingernet.csv", &table::FINGERNET);
    let b = write("eegnet.csv", &table::EEGNET);
    let out = ok(&["stats", "--a", s(&a), "--b", s(&b)]);
    assert_eq!(out, "n=9 W+=45 W-=0 p=0.001953125 (1/512)\n");
    let named = ok(&["stats", "--a", s(&a), "--b", s(&b), "--column", "accuracy"]);
    assert_eq!(named, out);
}

#[test]
fn synth_writes_a_valid_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.eegf");
    ok(&["synth", "--preset", "separable", "--seed", "3", "--out", s(&path)]);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], &MAGIC);
    let ds = read_eegf(&path).unwrap();
    assert_eq!((ds.n_trials(), ds.n_channels(), ds.n_samples), (125, 24, 1000));
    assert_eq!(ds.label_histogram(5), [25; 5]);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, env: Option<&str>, flag: Option<&str>| {
        let path = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_fingermi"));
        cmd.args(["synth", "--preset", "noise", "--out", s(&path)]).env_remove("FINGERMI_SEED");
        if let Some(seed) = flag {
            cmd.args(["--seed", seed]);
        }
        if let Some(seed) = env {
            cmd.env("FINGERMI_SEED", seed);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(path).unwrap()
    };
    let from_env = run("env.eegf", Some("3"), None);
    let from_flag = run("flag.eegf", None, Some("3"));
    let flag_wins = run("both.eegf", Some("4"), Some("3"));
    let other = run("other.eegf", Some("4"), None);
    assert_eq!(from_env, from_flag);
    assert_eq!(flag_wins, from_flag);
    assert_ne!(other, from_flag);
}

#[test]
fn preprocess_runs_the_chain_on_raw_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (raw, events, out) = (
        dir.path().join("raw.csv"),
        dir.path().join("events.csv"),
        dir.path().join("epochs.eegf"),
    );
    ok(&[
        "synth",
        "--recording",
        "--events",
        "5",
        "--out",
        s(&raw),
        "--events-out",
        s(&events),
    ]);
    let before = std::fs::read(&raw).unwrap();
    let summary = ok(&["preprocess", "--data", s(&raw), "--events", s(&events), "--out", s(&out)]);
    assert!(summary.starts_with("5 epochs x 24 channels x 1000 samples at 250 Hz"), "{summary}");
    assert_eq!(std::fs::read(&raw).unwrap(), before, "input must not change");

    let ds = read_eegf(&out).unwrap();
    assert_eq!(ds.label_histogram(5), [1; 5]);
    // z-scored by default
    let row = &ds.trial(0)[..1000];
    let mean = row.iter().sum::<f64>() / 1000.0;
    assert!(mean.abs() < 1e-4, "{mean}");
}

#[test]
fn cv_is_byte_identical_across_processes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(
        &cfg,
        "# tiny geometry\nsynth.fs = 64\nsynth.trials_per_class = 10\nmodel.temporal_kernel = 31\ntrain.epochs = 2\n",
    )
    .unwrap();
    let data = dir.path().join("d.eegf");
    ok(&["synth", "--config", s(&cfg), "--seed", "7", "--out", s(&data)]);
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let stdout = ok(&[
            "cv", "--model", "fingernet", "--data", s(&data), "--config", s(&cfg), "--seed", "7", "--out", s(&out),
        ]);
        let files: Vec<Vec<u8>> = ["cv.json", "folds.csv", "confusion.csv"]
            .iter()
            .map(|f| std::fs::read(out.join(f)).unwrap())
            .collect();
        outputs.push((stdout, files));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(outputs[0].0.starts_with("fingernet 5-fold accuracy"));
}

#[test]
fn train_saves_weights_and_losses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "synth.fs = 64\nsynth.trials_per_class = 4\nmodel.temporal_kernel = 31\ntrain.epochs = 3\n").unwrap();
    let data = dir.path().join("d.eegf");
    let model = dir.path().join("model.json");
    ok(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    ok(&["train", "--model", "eegnet", "--data", s(&data), "--config", s(&cfg), "--out", s(&model)]);
    let saved: serde_json::Value = serde_json::from_slice(&std::fs::read(&model).unwrap()).unwrap();
    assert_eq!(saved["model"], "eegnet");
    assert_eq!(saved["loss_history"].as_array().unwrap().len(), 3);
    assert!(saved["params"].as_array().unwrap().len() >= 5);
}

#[test]
fn report_renders_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["report", "--table", "--out", s(dir.path())]);
    assert!(out.contains("eegnet: reported mean 0.2196 is inconsistent"), "{out}");
    let csv = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert!(csv.contains("fingernet,0.30489,"), "{csv}");
}

#[test]
fn exit_codes() {
    assert_eq!(fingermi(&["bogus"]).status.code(), Some(2));
    assert_eq!(fingermi(&["cv", "--data"]).status.code(), Some(2));
    assert_eq!(fingermi(&["synth", "--recording", "--out", "x.csv"]).status.code(), Some(2));
    let missing = fingermi(&["cv", "--data", "/nonexistent.eegf"]);
    assert_eq!(missing.status.code(), Some(1));
    let err = String::from_utf8(missing.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "train.epohcs = 3\n").unwrap();
    let out = fingermi(&["synth", "--config", s(&bad), "--out", s(&dir.path().join("d.eegf"))]);
    assert_eq!(out.status.code(), Some(1));
}
