use featlab_core::config::{preset, Config, PRESETS};
use featlab_core::dataset::{read_dataset, write_dataset};
use featlab_core::distributions::{DataSpec, Dictionary, LinearSpec, ParitySpec};
use featlab_core::Error;

#[test]
fn presets_round_trip() {
    for (name, _) in PRESETS {
        let c = preset(name).unwrap();
        assert_eq!(c.name.as_deref(), Some(*name));
        let again = Config::from_json(&c.to_json()).unwrap();
        assert_eq!(c, again, "{name}");
        assert_eq!(again.to_json(), c.to_json());
    }
}

#[test]
fn preset_values() {
    let xor = preset("xor_gmm").unwrap();
    assert_eq!(xor.data.d(), 64);
    assert_eq!(xor.net.m, 256);
    let feat = preset("parity_features").unwrap();
    assert_eq!((feat.data.d(), feat.net.m), (50, 512));
    assert_eq!(feat.analysis().unwrap().trials, 10_000);
    assert!(preset("nope").is_err());
}

fn path_of(err: Error) -> String {
    match err {
        Error::InvalidConfig { path, .. } => path,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn errors_name_the_offending_key() {
    let base = preset("linear").unwrap().to_json();
    let v: serde_json::Value = serde_json::from_str(&base).unwrap();

    let mut bad = v.clone();
    bad["net"]["extra"] = 1.into();
    assert_eq!(path_of(Config::from_json(&bad.to_string()).unwrap_err()), "net.extra");

    let mut bad = v.clone();
    bad["data"]["beta"] = (-1.0).into();
    assert_eq!(path_of(Config::from_json(&bad.to_string()).unwrap_err()), "data");

    let mut bad = v.clone();
    bad["net"]["sigma_w"] = 0.0.into();
    assert_eq!(path_of(Config::from_json(&bad.to_string()).unwrap_err()), "net.sigma_w");

    let mut bad = v.clone();
    bad["analysis"]["gamma"] = 1.5.into();
    assert_eq!(path_of(Config::from_json(&bad.to_string()).unwrap_err()), "analysis.gamma");

    let mut bad = v.clone();
    bad["seeds"] = serde_json::json!([]);
    assert_eq!(path_of(Config::from_json(&bad.to_string()).unwrap_err()), "seeds");

    let mut bad = v;
    bad["schedule"]["steps"] = "ten".into();
    assert_eq!(path_of(Config::from_json(&bad.to_string()).unwrap_err()), "schedule.steps");
}

#[test]
fn load_prefixes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    std::fs::write(&p, r#"{"data": {"variant": "linear", "d": 3, "beta": 0.5}}"#).unwrap();
    let e = Config::load(&p).unwrap_err();
    assert!(e.is_config_error());
    assert!(e.to_string().contains("c.json"));
}

#[test]
fn init_depends_only_on_seed() {
    let c = preset("xor_gmm").unwrap();
    assert_eq!(c.init(4).unwrap(), c.init(4).unwrap());
    assert_ne!(c.init(4).unwrap(), c.init(5).unwrap());
    assert_eq!(c.init(4).unwrap().width(), 4 * 256);
}

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let specs = [
        DataSpec::Linear(LinearSpec::new(4, None, 0.5).unwrap()),
        DataSpec::Parity(ParitySpec::new(9, 3, 3, 0.1, 0.3, Dictionary::Random { seed: 2 }).unwrap()),
    ];
    for (i, spec) in specs.iter().enumerate() {
        let batch = spec.sample(57, i as u64).unwrap();
        let p = dir.path().join(format!("d{i}.csv"));
        write_dataset(&p, Some(spec), &batch).unwrap();
        let back = read_dataset(&p).unwrap();
        assert_eq!(back.batch, batch);
        assert_eq!(back.spec.as_ref(), Some(spec));
    }
    let batch = specs[0].sample(5, 9).unwrap();
    let p = dir.path().join("bare.csv");
    write_dataset(&p, None, &batch).unwrap();
    let back = read_dataset(&p).unwrap();
    assert!(back.spec.is_none());
    assert_eq!(back.batch, batch);
}

#[test]
fn dataset_rejects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let spec = DataSpec::Linear(LinearSpec::new(3, None, 0.5).unwrap());
    let p = dir.path().join("d.csv");
    write_dataset(&p, Some(&spec), &spec.sample(4, 0).unwrap()).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();

    std::fs::write(&p, text.replace("#n=4", "#n=5")).unwrap();
    assert!(read_dataset(&p).is_err());

    let mut lines: Vec<&str> = text.lines().collect();
    let last = lines.pop().unwrap();
    let bad_label = format!("{},0.5", last.rsplit_once(',').unwrap().0);
    lines.push(&bad_label);
    std::fs::write(&p, lines.join("\n")).unwrap();
    assert!(read_dataset(&p).is_err());

    std::fs::write(&p, text.replace("#d=3", "#d=4")).unwrap();
    assert!(read_dataset(&p).is_err());
}
