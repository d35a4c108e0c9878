use std::path::Path;
use std::process::{Command, Output};

fn supg_wrom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_supg-wrom"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn coarse(out: &Path) -> Vec<String> {
    [
        "--problem", "graetz-steady", "--h", "0.25", "--n-train", "5", "--n-max", "3", "--n-test", "3",
        "--timing-reps", "1", "--rules", "mc", "--jobs", "2", "--output",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([out.display().to_string()])
    .collect()
}

fn with<'a>(cmd: &'a str, rest: &'a [String]) -> Vec<&'a str> {
    std::iter::once(cmd).chain(rest.iter().map(String::as_str)).collect()
}

#[test]
fn unknown_problem_lists_valid_ids() {
    let out = supg_wrom(&["offline", "--problem", "cube"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for id in ["graetz-steady", "graetz-parabolic", "square-steady", "square-parabolic"] {
        assert!(err.contains(id), "{err}");
    }
}

#[test]
fn invalid_override_is_a_config_error() {
    let out = supg_wrom(&["config", "--problem", "square-steady", "--alpha=-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
}

#[test]
fn config_file_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let out = supg_wrom(&["config", "--problem", "square-parabolic", "--scale", "paper"]);
    assert!(out.status.success());
    let path = dir.path().join("c.toml");
    std::fs::write(&path, &out.stdout).unwrap();
    let again = supg_wrom(&["config", "--config", path.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(out.stdout, again.stdout);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("h = 0.036") && text.contains("n_t = 30"));
}

#[test]
fn report_before_offline_fails_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    let args = coarse(dir.path());
    let out = supg_wrom(&with("report", &args));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("offline"));
}

#[test]
fn offline_online_report_peclet() {
    let dir = tempfile::tempdir().unwrap();
    let args = coarse(dir.path());
    let out = supg_wrom(&with("offline", &args));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("models/mc/manifest.toml").exists());
    assert!(dir.path().join("models/mc/training.csv").exists());

    let mut online = with("online", &args);
    online.extend(["--rule", "mc", "--mu", "2000,1.2", "--n", "3", "--compare"]);
    let out = supg_wrom(&online);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("e_y ="));

    let mut outside = with("online", &args);
    outside.extend(["--rule", "mc", "--mu", "0.1,1.2"]);
    assert_eq!(supg_wrom(&outside).status.code(), Some(2));

    let mut report = with("report", &args);
    report.push("--no-plots");
    let out = supg_wrom(&report);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("errors_offline-only.csv").exists());
    assert!(dir.path().join("log10_errors_offline-online.csv").exists());
    assert!(dir.path().join("speedup.csv").exists());
    assert!(!dir.path().join("plots").exists());

    let out = supg_wrom(&with("peclet", &args));
    assert!(out.status.success());
    assert!(dir.path().join("peclet.csv").exists());
}
