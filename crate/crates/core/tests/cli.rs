use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mvkit::dataio::load_graph_corpus;
use mvkit::subgraph::{gmsv_mine, MiningConfig};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/graphs")
}

fn mvkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvkit")).args(args).output().expect("binary runs")
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).expect("report written")).expect("valid json")
}

#[test]
fn fixture_mining_returns_top_three_ascending() {
    let (corpus, side) = load_graph_corpus(&fixture(), 0.5).unwrap();
    let res = gmsv_mine(&corpus, &side, &MiningConfig { k: 3, ..MiningConfig::default() }).unwrap();
    assert_eq!(res.patterns.len(), 3);
    assert!(res.patterns.windows(2).all(|w| w[0].q <= w[1].q));
    assert!(res.patterns.iter().all(|p| p.support >= 2 && p.q_hat <= p.q + 1e-12));
}

#[test]
fn mine_command_on_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"mine": {"mining": {"k": 3}, "export_features": true}}"#).unwrap();
    let out = tmp.path().join("out");
    let o = mvkit(&["mine", "--config", cfg.to_str().unwrap(), "--input", fixture().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["schema"], 1);
    assert_eq!(r["command"], "mine");
    assert_eq!(r["config"]["mine"]["mining"]["k"], 3);
    let patterns = r["patterns"].as_array().unwrap();
    assert_eq!(patterns.len(), 3);
    assert_eq!(patterns[0]["indicator"].as_str().unwrap().len(), r["graphs"].as_u64().unwrap() as usize);
    let features = std::fs::read_to_string(out.join("features.csv")).unwrap();
    assert_eq!(features.lines().next().unwrap(), "id,label,p0,p1,p2");
    assert_eq!(features.lines().count(), 25);
}

#[test]
fn missing_input_is_reported_with_its_path() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mvkit(&["bne", "--input", "does/not/exist", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does/not/exist"));
}

#[test]
fn bad_config_is_rejected_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"mvfs": {"selection": {"alternation": 2}}}"#).unwrap();
    let out = tmp.path().join("out");
    let o = mvkit(&["mvfs", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.json"));
    assert!(!out.join("report.json").exists());
}

#[test]
fn unconverged_fit_exits_two_with_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"bne": {"model": {"max_iters": 2}, "folds": 0}}"#).unwrap();
    let out = tmp.path().join("out");
    let o = mvkit(&["bne", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&out)["converged"], false);
    assert!(out.join("model.bin").exists());
}

#[test]
fn seed_flag_overrides_config_and_changes_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"seed": 3, "mvfs": {"folds": 2}}"#).unwrap();
    let run = |seed: Option<&str>, name: &str| {
        let out = tmp.path().join(name);
        let mut args = vec!["mvfs", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        assert!(mvkit(&args).status.success());
        report(&out)
    };
    let (a, b) = (run(None, "a"), run(Some("4"), "b"));
    assert_eq!(a["config"]["seed"], 3);
    assert_eq!(b["config"]["seed"], 4);
    assert_eq!(b["config"]["mvfs"]["folds"], 2);
    assert_ne!(a["views"], b["views"]);
}

#[test]
fn mood_outputs_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"mood": {"train": {"epochs": 3}}}"#).unwrap();
    let out = tmp.path().join("out");
    assert!(mvkit(&["mood", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let best = mvkit::deepmood::read_checkpoint(&out.join("best.bin")).unwrap();
    assert_eq!(best.num_params() as u64, report(&out)["parameters"].as_u64().unwrap());
    assert_eq!(std::fs::read_to_string(out.join("metrics.csv")).unwrap().lines().count(), 4);
}
