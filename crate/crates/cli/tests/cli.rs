use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn smoke() -> PathBuf {
    fixtures().join("scenarios/smoke.toml")
}

fn dualarm(scenario: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualarm"))
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

/// The smoke scenario with absolute model paths and `curve` in place of the line.
fn variant(dir: &Path, curve: &Path) -> PathBuf {
    let text = std::fs::read_to_string(smoke()).unwrap();
    let models = fixtures().join("robots");
    let text = text
        .replace("../robots/", &format!("{}/", models.display()))
        .replace("\"../curves/line.csv\"", &format!("{:?}", curve.display().to_string()));
    let path = dir.join("variant.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn optimize_is_byte_stable_under_a_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = dualarm(&smoke(), dir.path(), &["optimize"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["config.toml", "seed.toml", "evolution.csv", "speed_profile.csv"] {
        let read = |d: &Path| std::fs::read(d.join("config/smoke-seed7").join(file)).unwrap();
        assert_eq!(read(a.path()), read(b.path()), "{file}");
    }
}

#[test]
fn seed_flag_names_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dualarm(&smoke(), dir.path(), &["--seed", "11", "optimize"]);
    assert!(out.status.success());
    assert!(dir.path().join("config/smoke-seed11/config.toml").exists());
}

#[test]
fn missing_curve_exits_2_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no_such_curve.csv");
    let scenario = variant(dir.path(), &missing);
    let out = dualarm(&scenario, dir.path(), &["optimize"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(&missing.display().to_string()));
}

#[test]
fn missing_scenario_and_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dualarm(&dir.path().join("none.toml"), dir.path(), &["optimize"]);
    assert_eq!(out.status.code(), Some(2));
    let out = dualarm(&smoke(), dir.path(), &["fit"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config.toml"));
}

#[test]
fn unreachable_configuration_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("far.toml");
    std::fs::write(
        &config,
        "mu = 100.0\nq1 = [0.0, 0.2, 0.85, 0.0, -1.65, 0.0]\nq2 = [0.0, 0.0, 0.0, 0.0, 0.6, 0.0]\n\n[base2]\nx = 90000.0\ny = 0.0\nyaw = 3.14\n",
    )
    .unwrap();
    let out = dualarm(&smoke(), dir.path(), &["fit", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn baseline_waypoint_flag_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dualarm(&smoke(), dir.path(), &["baseline", "--waypoints", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let program = std::fs::read_to_string(dir.path().join("program/smoke-seed7/baseline.txt")).unwrap();
    assert_eq!(program.matches("robot1: L").count(), 4);
    for file in ["report/smoke-seed7/baseline_metrics.toml", "report/smoke-seed7/baseline_search.csv", "exec/smoke-seed7/baseline_trace.csv"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
}

#[test]
fn stages_chain_through_files_and_tuning_failure_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = variant(dir.path(), &fixtures().join("curves/line.csv"));
    for stage in ["optimize", "fit", "simulate"] {
        let out = dualarm(&scenario, dir.path(), &[stage]);
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let strict = dir.path().join("strict.toml");
    std::fs::write(&strict, std::fs::read_to_string(&scenario).unwrap().replace("max_iter = 20", "max_iter = 1")).unwrap();
    let out = dualarm(&strict, dir.path(), &["tune"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("report/smoke-seed7");
    assert!(dir.path().join("program/smoke-seed7/tuned.txt").exists());
    assert_eq!(std::fs::read_to_string(run.join("tune_history.csv")).unwrap().lines().count(), 2);

    let out = dualarm(&scenario, dir.path(), &["report"]);
    assert!(out.status.success());
    let summary = std::fs::read_to_string(run.join("summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("tune,false,")));
    assert!(summary.lines().any(|l| l.starts_with("simulate,")));
}
