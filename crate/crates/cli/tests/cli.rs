use std::path::Path;
use std::process::{Command, Output};

use featlab_core::dataset::read_dataset;
use featlab_core::distributions::DataSpec;
use serde_json::Value;

fn featlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_featlab")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const PARITY: &str = r#"{
  "data": { "variant": "parity", "d": 12, "r": 3, "k": 3, "p_a": 0.1, "p_o": 0.25,
            "dictionary": { "kind": "random", "seed": 5 } },
  "net": { "m": 8, "sigma_a": 1.0, "sigma_w": 0.3, "b_tilde": 0.5 },
  "schedule": { "eta_1": 2.0, "eta": 0.1, "steps": 10, "batch_size": 64 },
  "eval": { "n_eval": 200 },
  "seeds": [3]
}"#;

const XOR: &str = r#"{
  "name": "tiny_xor",
  "data": { "variant": "xor_gmm", "d": 8, "sigma_b": 0.5 },
  "net": { "m": 8, "sigma_a": 1.0, "sigma_w": 1.0, "b_tilde": 1.0 },
  "schedule": { "eta_1": 1.0, "eta": 0.05, "steps": 30, "batch_size": 64 },
  "loss": "logistic",
  "eval": { "n_eval": 200, "n_test": 300 },
  "seeds": [7],
  "analysis": { "gamma": 0.5, "b_g": 0.01, "trials": 200, "feature_samples": 256 }
}"#;

#[test]
fn gen_rows_satisfy_parity_rule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "parity.json", PARITY);
    let out = dir.path().join("data.csv");
    let o = featlab(&["gen", "--config", &cfg, "--n", "3000", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ds = read_dataset(&out).unwrap();
    let Some(DataSpec::Parity(spec)) = &ds.spec else { panic!("spec header missing") };
    assert_eq!(ds.batch.n(), 3000);
    let m = spec.matrix();
    for (x, &y) in ds.batch.xs().rows().into_iter().zip(ds.batch.ys()) {
        let phi = m.t().dot(&x).mapv(f64::round);
        assert_eq!(spec.label_of_phi(phi.view()), y);
    }
}

#[test]
fn train_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "xor.json", XOR);
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = featlab(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        report.as_object_mut().unwrap().remove("wall_clock_s");
        let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
        reports.push((report, trace));
    }
    assert_eq!(reports[0], reports[1]);
    let (report, trace) = &reports[0];
    assert_eq!(report["seed"], 7);
    assert_eq!(report["summary"]["preset"], "tiny_xor");
    assert!(report["best_test_error"].is_number());
    assert_eq!(trace.lines().count(), 31);
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "xor.json", XOR);
    let get = |seed: &str| {
        let o = featlab(&["train", "--config", &cfg, "--seed", seed]);
        assert!(o.status.success());
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        v["summary"]["final_record"].clone()
    };
    assert_ne!(get("1"), get("2"));
}

#[test]
fn train_on_fixed_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "xor.json", XOR);
    let data = dir.path().join("train.csv");
    assert!(featlab(&["gen", "--config", &cfg, "--n", "64", "--out", data.to_str().unwrap()]).status.success());
    let o = featlab(&["train", "--config", &cfg, "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn experiment_grad_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gc");
    let o = featlab(&["--threads", "1", "experiment", "grad_check", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("grad_check PASS"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"]["passed"], true);
    assert_eq!(report["schema_version"], 1);
}

#[test]
fn analyze_features_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "xor.json", XOR);
    let o = featlab(&["analyze-features", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["probabilities"].as_array().unwrap().len(), 4);
    assert_eq!(v["census"]["scanned"], 16);

    let parity = write(dir.path(), "parity.json", &PARITY.replace(r#"{ "kind": "random", "seed": 5 }"#, r#"{ "kind": "identity" }"#));
    let out = dir.path().join("oracle");
    let o = featlab(&["oracle", "--config", &parity, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join("oracle.json")).unwrap()).unwrap();
    assert_eq!(v["conforms"], true);
    assert_eq!(v["opt"]["loss"], 0.0);
}

#[test]
fn config_errors_exit_2_and_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", &XOR.replace(r#""b_tilde": 1.0"#, r#""b_tilde": 1.0, "bogus": 3"#));
    let o = featlab(&["train", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("net") && err.contains("bogus"), "{err}");

    let bad = write(dir.path(), "bad2.json", &XOR.replace(r#""eta": 0.05"#, r#""eta": -0.05"#));
    let o = featlab(&["train", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schedule"));

    let no_analysis = write(dir.path(), "parity.json", PARITY);
    assert_eq!(featlab(&["analyze-features", "--config", &no_analysis]).status.code(), Some(2));
    assert_eq!(featlab(&["experiment", "no_such_thing"]).status.code(), Some(2));
    assert_eq!(featlab(&["experiment", "exact_parity_gradient", "--config", &no_analysis]).status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "xor.json", XOR);
    let missing = dir.path().join("missing.csv");
    let o = featlab(&["train", "--config", &cfg, "--data", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
