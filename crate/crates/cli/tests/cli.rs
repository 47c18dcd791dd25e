use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn socialgrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_socialgrid")).args(args).output().expect("binary runs")
}

fn small_run(out: &Path, seed: &str) -> Output {
    socialgrid(&[
        "run",
        "--seed",
        seed,
        "--episodes",
        "2",
        "--max-macro-steps",
        "30",
        "--crew-policy",
        "random",
        "--impostor-policy",
        "random",
        "--out",
        out.to_str().unwrap(),
    ])
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn run_is_reproducible_and_analyze_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(small_run(&a, "5").status.success());
    assert!(small_run(&b, "5").status.success());
    for name in ["episode_0000.jsonl", "episode_0001.jsonl", "config.toml", "report.json"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name} differs");
    }

    let report = tmp.path().join("report.json");
    let out = socialgrid(&["analyze", a.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&report), read(&a.join("report.json")));
}

#[test]
fn analyze_warns_on_corrupt_lines() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(small_run(tmp.path(), "9").status.success());
    let path = tmp.path().join("episode_0000.jsonl");
    let mut text = read(&path);
    text.push_str("{not json\n");
    fs::write(&path, text).unwrap();
    let out = socialgrid(&["analyze", tmp.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: skipped 1 unparseable line"));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.get("metrics").is_some());
}

#[test]
fn analyze_empty_dir_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = socialgrid(&["analyze", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn missing_config_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = socialgrid(&["run", "--config", "/nonexistent/run.toml", "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read /nonexistent/run.toml"));
}

#[test]
fn invalid_config_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "crew = 0\n").unwrap();
    let out = socialgrid(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("crew must be >= 1"));
}

#[test]
fn replay_export_writes_frames() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(small_run(tmp.path(), "3").status.success());
    let replay = tmp.path().join("replay.json");
    let log = tmp.path().join("episode_0000.jsonl");
    let out = socialgrid(&["replay-export", log.to_str().unwrap(), replay.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let value: serde_json::Value = serde_json::from_str(&read(&replay)).unwrap();
    assert!(!value["frames"].as_array().unwrap().is_empty());
}

#[test]
fn small_league_writes_standings() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("league.toml");
    fs::write(
        &cfg,
        "[engine]\nmax_macro_steps = 20\n\n[league]\npolicies = [\"random\", \"idle\"]\nepisodes_per_matchup = 1\n\n\
         [[league.patterns]]\nname = \"small\"\n\n[league.patterns.map]\nroom_size = 8\n",
    )
    .unwrap();
    let out_dir = tmp.path().join("league");
    let out = socialgrid(&["league", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let matchups: serde_json::Value = serde_json::from_str(&read(&out_dir.join("matchups.json"))).unwrap();
    assert_eq!(matchups.as_array().unwrap().len(), 4);
    let standings = read(&out_dir.join("standings.txt"));
    assert!(standings.contains("random") && standings.contains("idle"));
    assert!(out_dir.join("league.json").exists());
}
