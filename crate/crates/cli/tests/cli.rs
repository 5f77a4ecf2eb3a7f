use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"
rows = 5
cols = 5
fleet_size = 4
steps = 60
requests_per_step = 1.0
warmup_steps = 5
hop_spacing = 2
hop_min_requests = 2
hidden_layers = [16]
batch_size = 8
train_decisions = 40
"#;

fn mhrs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mhrs")).args(args).output().expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_manifest(out: &Path, command: &str, seed: u64) {
    let m = json(out.join("manifest.json"));
    assert_eq!(m["command"], command);
    assert_eq!(m["seed"], seed);
    assert_eq!(m["config"]["seed"], seed);
    assert!(m["version"].as_str().unwrap().starts_with("v0.1.0"));
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_writes_log_table_summary_and_manifest() {
    let dir = setup();
    let out = dir.path().join("sim");
    let o = mhrs(&["simulate", "--config", &p(dir.path(), "small.toml"), "--mode", "rs", "--seed", "3", "--out", &p(&out, "")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_manifest(&out, "simulate", 3);
    let summary = json(out.join("summary.json"));
    assert_eq!(summary["mode"], "rs");
    assert!(summary["accept_rate"].as_f64().unwrap() > 0.0);
    let steps = fs::read_to_string(out.join("steps.csv")).unwrap();
    assert_eq!(steps.lines().count(), 61);
    assert!(fs::read_to_string(out.join("events.jsonl")).unwrap().lines().count() > 60);
}

#[test]
fn simulate_is_reproducible() {
    let dir = setup();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = mhrs(&["simulate", "--config", &p(dir.path(), "small.toml"), "--seed", "1", "--train", "--out", &p(&out, "")]);
        assert!(o.status.success());
        (fs::read(out.join("events.jsonl")).unwrap(), fs::read(out.join("steps.csv")).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn train_then_evaluate_from_checkpoint() {
    let dir = setup();
    let out = dir.path().join("train");
    let o = mhrs(&["train", "--config", &p(dir.path(), "small.toml"), "--mode", "mhrs", "--seed", "2", "--out", &p(&out, "")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_manifest(&out, "train", 2);
    let stats = json(out.join("training.json"));
    assert!(stats["decisions"].as_u64().unwrap() >= 40);
    let ck = p(&out, "checkpoint.json");

    let resumed = dir.path().join("resume");
    let o = mhrs(&[
        "train", "--config", &p(dir.path(), "small.toml"), "--seed", "2", "--decisions", "20",
        "--checkpoint-in", &ck, "--out", &p(&resumed, ""),
    ]);
    assert!(o.status.success());
    let more = json(resumed.join("training.json"))["decisions"].as_u64().unwrap();
    assert!(more >= stats["decisions"].as_u64().unwrap() + 20);

    let eval = dir.path().join("eval");
    let o = mhrs(&[
        "simulate", "--config", &p(dir.path(), "small.toml"), "--seed", "2", "--eval", "--epsilon", "0",
        "--checkpoint-in", &ck, "--out", &p(&eval, ""),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(eval.join("summary.json").exists());
}

#[test]
fn checkpoint_with_wrong_shape_is_refused() {
    let dir = setup();
    let out = dir.path().join("train");
    assert!(mhrs(&["train", "--config", &p(dir.path(), "small.toml"), "--out", &p(&out, "")]).status.success());
    fs::write(dir.path().join("wide.toml"), SMALL.replace("hidden_layers = [16]", "hidden_layers = [32]")).unwrap();
    let o = mhrs(&[
        "simulate", "--config", &p(dir.path(), "wide.toml"), "--checkpoint-in", &p(&out, "checkpoint.json"),
        "--out", &p(dir.path(), "x"),
    ]);
    assert!(!o.status.success());
}

#[test]
fn compare_emits_table_for_every_mode() {
    let dir = setup();
    let out = dir.path().join("cmp");
    let o = mhrs(&[
        "compare", "--config", &p(dir.path(), "small.toml"), "--seeds", "2", "--decisions", "0", "--out", &p(&out, ""),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    for mode in ["mhrs", "rs", "nors"] {
        assert!(csv.lines().any(|l| l.starts_with(mode) && l.contains("accept_rate")), "{mode} row missing");
    }
    let runs = json(out.join("runs.json"));
    assert_eq!(runs.as_array().unwrap().len(), 6);
    assert_manifest(&out, "compare", 0);
}

#[test]
fn history_commands_read_trip_files() {
    let dir = setup();
    let mut trips = String::from("time_min,origin_row,origin_col,dest_row,dest_col\n");
    for t in 0..40 {
        trips.push_str(&format!("{t},0,0,4,4\n{t},2,2,0,4\n"));
    }
    fs::write(dir.path().join("trips.csv"), trips).unwrap();
    let hz = dir.path().join("hz");
    let o = mhrs(&["hopzones", "--config", &p(dir.path(), "small.toml"), "--trips", &p(dir.path(), "trips.csv"), "--out", &p(&hz, "")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let hops = json(hz.join("hop_zones.json"));
    let zones: Vec<(u64, u64)> =
        hops["hop_zones"].as_array().unwrap().iter().map(|z| (z[0].as_u64().unwrap(), z[1].as_u64().unwrap())).collect();
    assert_eq!(zones, vec![(0, 0), (2, 2)]);

    let fd = dir.path().join("fd");
    let o = mhrs(&["fit-demand", "--config", &p(dir.path(), "small.toml"), "--trips", &p(dir.path(), "trips.csv"), "--out", &p(&fd, "")]);
    assert!(o.status.success());
    assert!(json(fd.join("demand.json")).is_object());
    assert_manifest(&fd, "fit-demand", 0);
}

#[test]
fn fit_eta_reads_samples() {
    let dir = setup();
    fs::write(
        dir.path().join("samples.csv"),
        "depart_min,origin_row,origin_col,dest_row,dest_col,minutes\n10,0,0,0,3,6.0\n20,0,0,0,3,8.0\n",
    )
    .unwrap();
    let out = dir.path().join("eta");
    let o = mhrs(&["fit-eta", "--config", &p(dir.path(), "small.toml"), "--samples", &p(dir.path(), "samples.csv"), "--out", &p(&out, "")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let eta = json(out.join("eta.json"));
    let entry = &eta["entries"][0];
    assert_eq!(entry["minutes"], 7.0);
    assert_eq!(entry["samples"], 2);
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = setup();
    fs::write(dir.path().join("bad.toml"), "rows = 0\n").unwrap();
    let o = mhrs(&["simulate", "--config", &p(dir.path(), "bad.toml"), "--out", &p(dir.path(), "x")]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(dir.path().join("typo.toml"), "rows = \"many\"\n").unwrap();
    let o = mhrs(&["hopzones", "--config", &p(dir.path(), "typo.toml"), "--out", &p(dir.path(), "y")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_sample_file_is_a_plain_failure() {
    let dir = setup();
    fs::write(dir.path().join("s.csv"), "depart_min,origin_row,origin_col,dest_row,dest_col,minutes\n1,0,0,9,9,3.0\n").unwrap();
    let o = mhrs(&["fit-eta", "--config", &p(dir.path(), "small.toml"), "--samples", &p(dir.path(), "s.csv"), "--out", &p(dir.path(), "e")]);
    assert_eq!(o.status.code(), Some(1));
}
