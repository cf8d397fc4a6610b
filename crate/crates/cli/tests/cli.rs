use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperdecay"))
        .args(args)
        .current_dir(dir)
        .env("HYPERDECAY_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn run(cmd: &str, config: &str) -> (TempDir, Output) {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.json"), config).unwrap();
    let out = bin(&[cmd, "run.json", "--output-dir", "out"], dir.path());
    (dir, out)
}

fn json(dir: &TempDir, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.path().join("out").join(name)).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_GRID: &str = r#""grid": {"min": 1e-3, "max": 1e3, "count": 241}"#;

#[test]
fn spectrum_model1_m6_writes_positive_constant() {
    let (dir, out) = run("spectrum", &format!(r#"{{"model": "model1", "m": 6, {SMALL_GRID}}}"#));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let bound = json(&dir, "bound.json");
    assert_eq!((bound["p"].as_i64(), bound["q"].as_i64()), (Some(3), Some(4)));
    assert!(bound["c_est"].as_f64().unwrap() > 0.0);
    let fit = json(&dir, "typefit.json");
    assert!((fit["p_hat"].as_f64().unwrap() - 2.0).abs() < 0.05);
    assert!((fit["q_hat"].as_f64().unwrap() - 3.0).abs() < 0.05);
    let csv = fs::read_to_string(dir.path().join("out/spectrum.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("xi,abscissa,bits"));
    assert_eq!(csv.lines().count(), 242);
}

#[test]
fn spectrum_model2_m4_low_frequency_order() {
    let (dir, out) = run("spectrum", &format!(r#"{{"model": "model2", "m": 4, {SMALL_GRID}}}"#));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let fit = json(&dir, "typefit.json");
    assert!((fit["p_hat"].as_f64().unwrap() - 1.0).abs() < 0.05);
}

#[test]
fn custom_system_without_damping_is_rejected() {
    let dir = TempDir::new().unwrap();
    let sys = r#"{"model": "custom", "m": 2, "A0": [[1,0],[0,1]], "A": [[0,1],[1,0]], "L": [[0,0],[0,0]]}"#;
    fs::write(dir.path().join("sys.json"), sys).unwrap();
    let cfg = r#"{"model": "custom-file", "system_file": "sys.json", "spectrum": {"p": 1, "q": 1}}"#;
    fs::write(dir.path().join("run.json"), cfg).unwrap();
    let out = bin(&["spectrum", "run.json", "--output-dir", "out"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).starts_with("error[config]"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn custom_system_needs_a_type() {
    let dir = TempDir::new().unwrap();
    let sys = r#"{"model": "custom", "m": 2, "A0": [[1,0],[0,1]], "A": [[0,1],[1,0]], "L": [[0,0],[0,1]]}"#;
    fs::write(dir.path().join("sys.json"), sys).unwrap();
    fs::write(dir.path().join("run.json"), r#"{"model": "custom", "system_file": "sys.json"}"#).unwrap();
    let out = bin(&["spectrum", "run.json"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn certify_model1_m6() {
    let (dir, out) = run("certify", r#"{"model": "model1", "m": 6}"#);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let cert = json(&dir, "certificate.json");
    assert_eq!(cert["model"], "model1");
    assert!(cert["c_rate"].as_f64().unwrap() > 0.0);
    let margins = fs::read_to_string(dir.path().join("out/margins.csv")).unwrap();
    assert_eq!(margins.lines().count(), 602);
    let coercivity = fs::read_to_string(dir.path().join("out/coercivity.csv")).unwrap();
    assert_eq!(coercivity.lines().next(), Some("xi,margin"));
}

#[test]
fn certify_model2_m4_unsupported() {
    let (_dir, out) = run("certify", r#"{"model": "model2", "m": 4}"#);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("m≥6"), "{}", stderr(&out));
}

#[test]
fn decay_gaussian_passes() {
    let cfg = format!(
        r#"{{"model": "model1", "m": 6, {SMALL_GRID},
            "decay": {{"cases": [{{"k": 0, "ell": 0}}, {{"k": 1, "ell": 2}}], "times": {{"min": 1, "max": 1e5, "count": 21}},
                       "efold_radii": [1.0]}}}}"#
    );
    let (dir, out) = run("decay", &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary = json(&dir, "decay.json");
    assert!(summary["cases"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    assert!(summary["e_folding"][0]["time"].as_f64().unwrap() > 0.0);
    let env = json(&dir, "envelope.json");
    assert_eq!(env["pass"], true);
    assert_eq!(env["seed"], 42);
    let csv = fs::read_to_string(dir.path().join("out/decay_k1_l2.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,measured,bound,ratio"));
    assert_eq!(csv.lines().count(), 22);
}

#[test]
fn certify_model2_m8() {
    let (dir, out) = run("certify", r#"{"model": "model2", "m": 8}"#);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(json(&dir, "certificate.json")["m"], 8);
}

#[test]
fn decay_band_e_folding_ratio() {
    let cfg = r#"{"model": "model1", "m": 6, "decay": {"times": [1, 10], "efold_radii": [10, 20]}}"#;
    let (dir, out) = run("decay", cfg);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let e = &json(&dir, "decay.json")["e_folding"];
    let ratio = e[1]["time"].as_f64().unwrap() / e[0]["time"].as_f64().unwrap();
    assert!((2.0..=8.0).contains(&ratio), "{ratio}");
}

#[test]
fn decay_empty_times_is_a_validation_error() {
    let (dir, out) = run("decay", r#"{"model": "model1", "m": 6, "decay": {"times": []}}"#);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("decay.times is empty"), "{}", stderr(&out));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_field_is_rejected() {
    let (_dir, out) = run("spectrum", r#"{"model": "model1", "m": 6, "grdi": {}}"#);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exponents_model1_m8_best_is_feasible() {
    let (dir, out) = run("exponents", r#"{"model": "model1", "m": 8}"#);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let f = json(&dir, "feasibility.json");
    assert_eq!(f["report"]["satisfied"], true);
    assert_eq!(f["eta"]["dominant"]["xi_pow"], 10.0);
    assert_eq!(f["eta"]["dominant"]["one_plus_pow"], 12.0);
    assert!(dir.path().join("out/rates.csv").exists());
}

#[test]
fn exponents_perturbed_vector_lists_violations() {
    let cfg = r#"{"model": "model1", "m": 6,
        "exponents": {"vectors": {"model": "model1", "alpha": [4, 4, 4, 1, 0], "beta": [4, 2, 2, 2, 2]}}}"#;
    let (dir, out) = run("exponents", cfg);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let f = json(&dir, "feasibility.json");
    assert_eq!(f["report"]["satisfied"], false);
    let ids: Vec<&str> = f["report"]["violations"].as_array().unwrap().iter().map(|v| v["id"].as_str().unwrap()).collect();
    assert!(ids.contains(&"I.a4.3"), "{ids:?}");
    assert!(ids.contains(&"I.ac.9"), "{ids:?}");
    assert!(!dir.path().join("out/rates.csv").exists());
}

#[test]
fn exponents_model2_m6_dominant_term() {
    let (dir, out) = run("exponents", &format!(r#"{{"model": "model2", "m": 6, {SMALL_GRID}, "exponents": {{"alt_check": true}}}}"#));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let f = json(&dir, "feasibility.json");
    assert_eq!(f["eta"]["dominant"]["xi_pow"], 8.0);
    assert_eq!(f["eta"]["dominant"]["one_plus_pow"], 12.0);
    assert!(f["alt_check"]["c_found"].as_f64().unwrap() > 0.0);
}

#[test]
fn mismatched_vectors_are_rejected() {
    let cfg = r#"{"model": "model2", "m": 6,
        "exponents": {"vectors": {"model": "model1", "alpha": [4, 4, 4, 2, 0], "beta": [4, 2, 2, 2, 2]}}}"#;
    let (_dir, out) = run("exponents", cfg);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.json"), r#"{"model": "model1", "m": 6}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hyperdecay"))
        .args(["spectrum", "run.json"])
        .current_dir(dir.path())
        .env("HYPERDECAY_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error[env]"));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let cfg = format!(r#"{{"model": "model1", "m": 6, {SMALL_GRID}, "decay": {{"times": [1, 10, 100]}}}}"#);
    let (a, oa) = run("decay", &cfg);
    let (b, ob) = run("decay", &cfg);
    assert_eq!(oa.status.code(), Some(0), "{}", stderr(&oa));
    assert_eq!(ob.status.code(), Some(0));
    for name in ["decay.json", "envelope.json", "decay_k0_l0.csv"] {
        let x = fs::read(a.path().join("out").join(name)).unwrap();
        let y = fs::read(b.path().join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let leftovers: Vec<_> = fs::read_dir(a.path().join("out"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}
