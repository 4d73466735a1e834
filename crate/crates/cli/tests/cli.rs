use std::path::Path;
use std::process::{Command, Output};

fn gnesel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnesel")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_experiment(dir: &Path) -> String {
    let path = dir.join("exp.json");
    std::fs::write(
        &path,
        r#"{"n_instances": 2, "n_agents": 4, "n_i": 2, "m": 2, "budget": 400, "stride": 100,
            "xi_values": [0.6, 0.8], "alpha_values": [1.0], "zeta_values": [2.0]}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn small_game(dir: &Path) -> String {
    let exp = small_experiment(dir);
    let game = dir.join("game.json");
    let o = gnesel(&["generate", "--seed", "3", "--config", &exp, "--out", game.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    game.to_str().unwrap().to_string()
}

#[test]
fn validate_accepts_generated_instance() {
    let dir = tempfile::tempdir().unwrap();
    let game = small_game(dir.path());
    let o = gnesel(&["validate", "--config", &game]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("monotonicity: pass"));
}

#[test]
fn validate_rejects_indefinite_pseudogradient() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad_qf.json");
    std::fs::write(
        &path,
        r#"{"agents": [
              {"dim": 1, "lower": [-1.0], "upper": [1.0], "A_rows": [[1.0]], "neighbors": [1]},
              {"dim": 1, "lower": [-1.0], "upper": [1.0], "A_rows": [[1.0]], "neighbors": [0]}],
            "b": [1.0],
            "Q_F": [[1.0, 0.0], [0.0, -1.0]], "c_F": [0.0, 0.0],
            "Q_phi": [[1.0, 0.0], [0.0, 1.0]], "c_phi": [0.0, 0.0], "theta": 0.001}"#,
    )
    .unwrap();
    let o = gnesel(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("monotonicity check failed"));
}

#[test]
fn solve_writes_reproducible_trace() {
    let dir = tempfile::tempdir().unwrap();
    let game = small_game(dir.path());
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = gnesel(&[
            "solve", "--config", &game, "--xi", "0.6", "--zeta", "2", "--alpha", "1", "--budget", "2000", "--stride", "10",
            "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let line = stdout(&o);
        assert!(line.starts_with("residual=") && line.contains("trace="), "{line}");
        bytes.push(std::fs::read(out.join("solve.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let text = String::from_utf8(bytes.pop().unwrap()).unwrap();
    assert!(text.contains("# delta=") && text.contains("# beta="));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 200);
}

#[test]
fn baselines_run() {
    let dir = tempfile::tempdir().unwrap();
    let game = small_game(dir.path());
    let out = dir.path().to_str().unwrap();
    let o = gnesel(&["fbf", "--config", &game, "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("converged=true"));
    let o = gnesel(&["hsdm", "--config", &game, "--budget", "500", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("hsdm.csv").exists());
    let o = gnesel(&["hsdm", "--config", &game, "--eta", "0.4", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_and_compare_write_layout() {
    let dir = tempfile::tempdir().unwrap();
    let exp = small_experiment(dir.path());
    let out = dir.path().join("out");
    let o = gnesel(&["sweep", "--config", &exp, "--sweep", "xi", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("aggregate/xi.csv").exists());
    assert!(out.join("runs/xi/0.8/1.csv").exists());
    let o = gnesel(&["compare", "--config", &exp, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("hsdm_residual="));
    assert!(out.join("aggregate/compare.csv").exists());
}

#[test]
fn oracle_check_prints_json_report() {
    let o = gnesel(&["oracle-check", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["seed"], 7);
    assert!(v["rel_error"].as_f64().unwrap() <= 1e-3);
}

#[test]
fn usage_errors_are_rejected() {
    assert!(!gnesel(&["solve", "--bogus"]).status.success());
    assert!(!gnesel(&["frobnicate"]).status.success());
    let o = gnesel(&["solve", "--config", "/nonexistent/game.json"]);
    assert_eq!(o.status.code(), Some(1));
}
