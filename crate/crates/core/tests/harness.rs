use featlab_core::harness::*;
use serde_json::Value;

fn quick(id: ExperimentId) -> ExperimentReport {
    let mut config = id.default_config().unwrap();
    config.seeds = vec![1, 2, 3];
    run_experiment(id, &config, None).unwrap()
}

fn validate(report: &ExperimentReport) {
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let instance: Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| format!("{e} at {}", e.instance_path)).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

#[test]
fn ids_parse_and_print() {
    for id in ExperimentId::ALL {
        assert_eq!(id.name().parse::<ExperimentId>().unwrap(), id);
        assert!(id.default_config().is_ok());
    }
    assert!("bogus".parse::<ExperimentId>().unwrap_err().is_config_error());
}

#[test]
fn exact_experiments_pass_and_validate() {
    for id in [
        ExperimentId::InitZero,
        ExperimentId::GradCheck,
        ExperimentId::ForgetStep1,
        ExperimentId::ExactParityGradient,
        ExperimentId::GstarMargin,
        ExperimentId::LinearFeatureDirection,
    ] {
        let report = quick(id);
        assert!(report.passed(), "{}", report.summary_line());
        assert_eq!(report.per_seed.len(), 3);
        assert!(report.per_seed.iter().all(|s| s.metrics.values().all(|m| !m.producer.is_empty())));
        validate(&report);
    }
}

#[test]
fn report_round_trip_recomputes_verdict() {
    let report = quick(ExperimentId::InitZero);
    let text = report.to_json().unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["verdict"]["passed"], true);
    assert_eq!(ExperimentReport::from_json(&text).unwrap(), report);

    // A stored verdict is never trusted.
    v["verdict"]["passed"] = false.into();
    assert!(ExperimentReport::from_json(&v.to_string()).unwrap().passed());

    // Changing a metric changes the verdict.
    v["per_seed"][0]["metrics"]["max_abs_output"]["value"] = 1.0.into();
    let tampered = ExperimentReport::from_json(&v.to_string()).unwrap();
    assert_eq!(tampered.verdict().passing_seeds, 2);
    assert!(!tampered.passed());
}

#[test]
fn outputs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentId::XorGmmSeparation.default_config().unwrap();
    config.seeds = vec![4];
    config.net.m = 16;
    config.schedule.steps = 5;
    config.eval.n_test = Some(500);
    let report = run_experiment(ExperimentId::XorGmmSeparation, &config, Some(dir.path())).unwrap();
    validate(&report);
    for f in ["report.json", "seed-4-full.csv", "seed-4-baseline.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let stored = ExperimentReport::from_json(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(stored, report);
    let s = &report.per_seed[0];
    for m in ["full_error", "baseline_error", "full_eval_error", "baseline_eval_error"] {
        assert!((0.0..=1.0).contains(&s.get(m).unwrap()), "{m}");
    }
}

#[test]
fn separation_is_deterministic_per_seed() {
    let mut config = ExperimentId::ParitySeparation.default_config().unwrap();
    config.seeds = vec![2, 3];
    config.net.m = 8;
    config.schedule.steps = 4;
    config.eval.n_test = Some(300);
    let a = run_experiment(ExperimentId::ParitySeparation, &config, None).unwrap();
    config.seeds = vec![3];
    let b = run_experiment(ExperimentId::ParitySeparation, &config, None).unwrap();
    assert_eq!(a.per_seed[1], b.per_seed[0]);
}

#[test]
fn budget_overrun_is_a_warning() {
    let mut config = ExperimentId::GradCheck.default_config().unwrap();
    config.seeds = vec![1];
    config.wall_clock_budget_s = Some(1e-9);
    let report = run_experiment(ExperimentId::GradCheck, &config, None).unwrap();
    assert!(report.passed());
    assert!(report.warnings.iter().any(|w| w.contains("budget")));
}

#[test]
fn configs_are_checked_against_the_experiment() {
    let linear = ExperimentId::LinearFeatureDirection.default_config().unwrap();
    for id in [ExperimentId::ExactParityGradient, ExperimentId::GstarMargin] {
        assert!(run_experiment(id, &linear, None).unwrap_err().is_config_error());
    }
    let mut xor = ExperimentId::XorGmmSeparation.default_config().unwrap();
    xor.analysis = None;
    assert!(run_experiment(ExperimentId::FeatureEmergence, &xor, None).unwrap_err().is_config_error());
}
