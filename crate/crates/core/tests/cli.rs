use std::path::PathBuf;
use std::process::{Command, Output};

fn htype(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_htype")).args(args).output().expect("binary runs")
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("htype-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn deviation_of_free_group() {
    let out = htype(&["deviation", "--group", "free(4)", "--restarts", "2", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let value = v["result"]["report"]["value"].as_f64().unwrap();
    assert!((value - 0.5f64.sqrt()).abs() <= 1e-3, "{value}");
    assert_eq!(v["command"], "deviation");
    assert_eq!(v["seed"], 3);
    assert!(v["version"].is_string());
    assert_eq!(v["config"]["group"], "free(4)");
    assert_eq!(v["config"]["solver"]["restarts"], 2);
}

#[test]
fn validate_reports_violations() {
    let bad = scratch("bad.json", r#"{"m": 2, "m2": 1, "B": [[[0.0, 1.0], [0.5, 0.0]]]}"#);
    let out = htype(&["validate", "--group", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("skew"), "{text}");
    let ok = htype(&["validate", "--group", "heis(1,2)"]);
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn bad_input_exits_with_two() {
    let malformed = scratch("malformed.json", "{ not json");
    for args in [
        vec!["deviation", "--group", "nosuch(3)"],
        vec!["deviation", "--group", malformed.to_str().unwrap()],
        vec!["deviation", "--group", "/nonexistent/group.json"],
    ] {
        let out = htype(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn conjecture_output_is_reproducible() {
    let args = ["conjecture", "--n", "2..4", "--seed", "7", "--format", "csv"];
    let a = htype(&args);
    let b = htype(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("n,sup,delta_sq,ratio"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn verify_fundamental_reports_small_residuals() {
    let out = htype(&["verify-fundamental", "--n", "2,3", "--samples", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let checks = v["result"].as_array().unwrap();
    assert_eq!(checks.len(), 2);
    for c in checks {
        assert!(c["harmonic"].as_f64().unwrap() <= 1e-9);
    }
}

#[test]
fn catalog_lists_groups() {
    let out = htype(&["catalog"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("free(3)"));
}
