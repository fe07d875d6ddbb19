use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mtgcn"))
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn train(config: &str, out: &Path, extra: &[&str]) -> Output {
    let cfg = workspace().join(config);
    let mut cmd = bin();
    cmd.args(["train", "--config"]).arg(cfg).arg("--out").arg(out).args(extra);
    cmd.output().unwrap()
}

#[test]
fn train_writes_runs_checkpoints_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    ok(train("configs/toy/gcn.toml", dir.path(), &["--runs", "2", "--seed", "5", "--epochs", "20"]));
    for f in ["run-5.json", "run-6.json", "checkpoint-5.json", "checkpoint-6.json", "summary.json", "config.toml"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["aggregate"]["runs"].as_array().unwrap().len(), 2);
    assert_eq!(summary["baseline"], true);

    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run-5.json")).unwrap()).unwrap();
    assert_eq!(run["epochs"].as_array().unwrap().len(), 20);
    assert!(run.get("wall_clock_secs").is_none());

    // The emitted config reproduces the run.
    let again = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    ok(bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(again.path())
        .arg("--dataset")
        .arg(workspace().join("data/toy"))
        .output()
        .unwrap());
    assert_eq!(
        fs::read(dir.path().join("run-6.json")).unwrap(),
        fs::read(again.path().join("run-6.json")).unwrap()
    );
}

#[test]
fn eval_reproduces_best_epoch_scores() {
    let dir = tempfile::tempdir().unwrap();
    ok(train("configs/toy/ae-fr-er.toml", dir.path(), &["--runs", "1", "--epochs", "30"]));
    let out = ok(bin()
        .args(["eval", "--checkpoint"])
        .arg(dir.path().join("checkpoint-0.json"))
        .arg("--bundle")
        .arg(workspace().join("data/toy"))
        .output()
        .unwrap());
    let eval: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run-0.json")).unwrap()).unwrap();
    assert_eq!(eval["test_accuracy"], run["test_accuracy"]);
    assert_eq!(eval["val_accuracy"], run["best_val_accuracy"]);
    assert_eq!(eval["val_loss"], run["best_val_loss"]);
}

#[test]
fn grid_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results");
    ok(train("configs/toy/gcn.toml", &results.join("gcn"), &["--runs", "2", "--epochs", "15"]));
    ok(bin()
        .args(["grid", "--config"])
        .arg(workspace().join("configs/toy/ae-fr-er.toml"))
        .arg("--grid")
        .arg(workspace().join("configs/grids/toy-ae.toml"))
        .arg("--out")
        .arg(results.join("all"))
        .args(["--runs", "2", "--epochs", "15"])
        .output()
        .unwrap());
    let grid: serde_json::Value = serde_json::from_str(&fs::read_to_string(results.join("all/grid.json")).unwrap()).unwrap();
    assert_eq!(grid["points"].as_array().unwrap().len(), 4);
    assert!(results.join("all/winner.toml").exists());

    let report = dir.path().join("report.json");
    ok(bin().args(["report", "--in"]).arg(&results).arg("--out").arg(&report).output().unwrap());
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["network"], "gcn");
    assert_eq!(rows[0]["delta_pp_vs_baseline"], 0.0);
    let expected = ((rows[1]["mean"].as_f64().unwrap() - rows[0]["mean"].as_f64().unwrap()) * 10000.0).round() / 100.0;
    assert_eq!(rows[1]["delta_pp_vs_baseline"].as_f64().unwrap(), expected);
}

#[test]
fn bad_input_fails_with_a_named_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, format!("dataset = {:?}\nlearnig_rate = 0.1\n", workspace().join("data/toy"))).unwrap();
    let out = bin().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learnig_rate"));

    fs::write(&cfg, format!("dataset = {:?}\n[tasks]\nfr = true\n[fr]\ncorrupted_count = 40\n", workspace().join("data/toy"))).unwrap();
    let out = bin().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fr.corrupted_count"));

    let out = bin().args(["eval", "--checkpoint", "/nonexistent.json", "--bundle", "/nonexistent"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn synth_writes_a_loadable_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b");
    ok(bin().args(["synth", "--out"]).arg(&b).args(["--classes", "2", "--nodes-per-class", "50", "--features", "6"]).output().unwrap());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["num_nodes"], 100);
}
