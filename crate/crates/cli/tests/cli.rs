use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hypokernel"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios").join(format!("{name}.json"))
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().arg("--out").arg(out).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn prototype_compactness_predicts_two_fifths() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("prototype_compactness");
    let o = run(&["--formats", "json,csv", "run", s.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = json(&dir.path().join("prototype_compactness.json"));
    assert_eq!(r["schema_version"], "1");
    let predicted = r["details"]["plan"]["predicted_exponent"].as_f64().unwrap();
    assert!((predicted - 0.4).abs() < 1e-12);
    for c in r["checks"].as_array().unwrap() {
        assert!(c.get("measured").is_some() && c.get("target").is_some() && c.get("tolerance").is_some());
    }
    let csv = std::fs::read_to_string(dir.path().join("prototype_compactness_modulus.csv")).unwrap();
    let h_count = r["details"]["points"].as_array().unwrap().len();
    assert_eq!(csv.lines().count(), h_count + 1);
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"id\": \"x\", \"kind\": ").unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", bad.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists() || std::fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn inadmissible_exponents_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("inadmissible.json");
    std::fs::write(
        &cfg,
        r#"{"id": "inadmissible", "kind": "compactness",
            "geometry": {"kind": "kolmogorov", "blocks": [1, 1]},
            "kernel": {"name": "gamma_gradient", "component": 0},
            "exponents": {"p": 2, "q": 7}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run(&["verify", "compactness", "--scenario", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn failing_check_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("wrong.json");
    std::fs::write(
        &cfg,
        r#"{"id": "wrong", "kind": "exponents",
            "geometry": {"kind": "euclidean", "n": 3},
            "exponents": {"p": 2, "alpha": 2},
            "tolerances": {"expected_q_lo": 3}}"#,
    )
    .unwrap();
    let o = run(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let s = scenario("prototype_mc");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--threads", "1", "run", s.to_str().unwrap()], a.path()).status.code(), Some(0));
    assert_eq!(run(&["--threads", "4", "run", s.to_str().unwrap()], b.path()).status.code(), Some(0));
    let ja = std::fs::read(a.path().join("prototype_mc.json")).unwrap();
    let jb = std::fs::read(b.path().join("prototype_mc.json")).unwrap();
    assert_eq!(ja, jb);
}

#[test]
fn verify_rejects_mismatched_kind() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("prototype_mc");
    let o = run(&["verify", "morrey", "--scenario", s.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn exponents_prints_interval() {
    let o = bin().args(["exponents", "--dim", "6", "--alpha", "5", "--p", "2", "--q", "2.5"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["q_interval"][0].as_f64().unwrap(), 2.0);
    assert!((v["q_interval"][1].as_f64().unwrap() - 3.0).abs() < 1e-12);
    assert!((v["plan"]["predicted_exponent"].as_f64().unwrap() - 0.4).abs() < 1e-12);
}

#[test]
fn gamma_eval_at_unit_time() {
    let o = bin()
        .args(["gamma", "eval", "--geometry", r#"{"kind": "kolmogorov", "blocks": [1, 1]}"#, "--point", "0,0,1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let v: f64 = String::from_utf8(o.stdout).unwrap().trim().parse().unwrap();
    assert!((v - 3f64.sqrt() / (2.0 * std::f64::consts::PI)).abs() < 1e-14);
}

#[test]
fn geometry_info_and_bad_geometry() {
    let o = bin().args(["geometry", "info", "--geometry", r#"{"kind": "kolmogorov", "blocks": [1, 1]}"#]).output().unwrap();
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["hom_dim"].as_f64(), Some(6.0));
    let o = bin().args(["geometry", "info", "--geometry", r#"{"kind": "kolmogorov", "blocks": [1, 2]}"#]).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    let o = bin().args(["geometry", "info", "--geometry", "{nope"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_cauchy_writes_per_time_csv() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("prototype_cauchy");
    let o = run(&["--formats", "json,csv", "solve", "cauchy", "--scenario", s.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("prototype_cauchy_u_0.csv").exists());
    assert!(dir.path().join("prototype_cauchy_u_1.csv").exists());
}

#[test]
fn mc_validate_reports_moments() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["--seed", "3", "mc-validate", "--geometry", r#"{"kind": "kolmogorov", "blocks": [1, 1]}"#, "--t", "1", "--paths", "4000", "--steps", "100"],
        dir.path(),
    );
    assert!(matches!(o.status.code(), Some(0) | Some(1)));
    let r = json(&dir.path().join("mc_validate.json"));
    assert_eq!(r["details"]["paths"].as_u64(), Some(4000));
}

#[test]
fn unknown_subcommand_is_a_parse_error() {
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(2));
}
