use gnls::dynamics::FlowConfig;
use gnls::harness::{invariance_test, run, ExperimentConfig, ExperimentKind, RunOutcome};
use gnls::measures::{ModelParams, RngStream};
use gnls::torus::{sigma, Cutoff, TorusGeometry};

fn read(dir: &std::path::Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

const EVOLVE: &str = r#"{
  "kind": "evolve",
  "seed": 5,
  "model": { "dim": 1, "n_max": 8, "alpha": 2.0, "beta": 0.5, "gamma": 1.0 },
  "flow": { "dt": 0.01, "t_final": 0.2, "snapshot_stride": 10 },
  "initial": { "type": "modes", "modes": [[0, 0, 0.5, 0.0], [1, 0, 0.2, 0.1]] }
}"#;

#[test]
fn unknown_keys_are_rejected() {
    let bad = EVOLVE.replace("\"seed\": 5", "\"seed\": 5, \"sed\": 1");
    assert!(ExperimentConfig::from_json(&bad).is_err());
    let bad = EVOLVE.replace("\"dt\": 0.01", "\"dt\": 0.01, \"order\": 2");
    assert!(ExperimentConfig::from_json(&bad).is_err());
    assert!(ExperimentConfig::from_json(&EVOLVE.replace("evolve", "evolution")).is_err());
}

#[test]
fn beta_forms_are_exclusive_and_equivalent() {
    let both = EVOLVE.replace("\"beta\": 0.5", "\"beta\": 0.5, \"beta_sigma\": 0.1");
    assert!(ExperimentConfig::from_json(&both).is_err());
    let level = EVOLVE.replace("\"beta\": 0.5", "\"beta_sigma\": 0.1");
    let c = ExperimentConfig::from_json(&level).unwrap();
    let s = sigma(2.0, Cutoff::Finite(8), 1).unwrap();
    assert!((c.params().unwrap().beta - 0.1 / s).abs() < 1e-15);
}

#[test]
fn missing_sections_are_reported() {
    let no_initial = EVOLVE
        .replace(",\n  \"initial\": { \"type\": \"modes\", \"modes\": [[0, 0, 0.5, 0.0], [1, 0, 0.2, 0.1]] }", "");
    let err = ExperimentConfig::from_json(&no_initial).unwrap_err().to_string();
    assert!(err.contains("initial"), "{err}");
    let inv = EVOLVE.replace("evolve", "invariance");
    assert!(ExperimentConfig::from_json(&inv).is_err());
}

#[test]
fn config_round_trips() {
    let c = ExperimentConfig::from_json(EVOLVE).unwrap();
    assert_eq!(c.kind, ExperimentKind::Evolve);
    assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
}

#[test]
fn evolve_outputs_are_deterministic() {
    let c = ExperimentConfig::from_json(EVOLVE).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run(&c, a.path()).unwrap();
    run(&c, b.path()).unwrap();
    assert_eq!(ra.passed, None);
    assert_eq!(ra.exit_code(), 0);
    for f in &ra.files {
        let name = f.file_name().unwrap().to_str().unwrap();
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let csv = String::from_utf8(read(a.path(), "trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,mass,hamiltonian,potential,h_s_norm\n"));
    assert_eq!(csv.lines().count(), 22);
    assert!(a.path().join("snapshot_00002.bin").exists());
}

#[test]
fn sample_and_gauge_runs() {
    let sample = r#"{
      "kind": "sample", "seed": 1, "ensemble": 200, "observables": ["spectrum"],
      "model": { "dim": 1, "n_max": 4, "alpha": 2.0, "beta_sigma": 0.3, "gamma": 1.0 }
    }"#;
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig::from_json(sample).unwrap();
    run(&c, dir.path()).unwrap();
    let csv = String::from_utf8(read(dir.path(), "samples.csv")).unwrap();
    assert!(csv.starts_with("sample_id,weight,mass,potential,hamiltonian,hs_norm,spectrum_0"));
    assert_eq!(csv.lines().count(), 201);

    let gauge = r#"{
      "kind": "gauge-check", "seed": 2,
      "model": { "dim": 1, "n_max": 4, "alpha": 2.0, "beta": 0.5, "gamma": 1.0 },
      "gauge": { "k": [1, 2], "trials": 10 }
    }"#;
    let c = ExperimentConfig::from_json(gauge).unwrap();
    let out = run(&c, dir.path()).unwrap();
    assert_eq!(out.passed, Some(true));
    assert_eq!(out.summary["result"]["trials"], 20);
}

#[test]
fn exit_codes_follow_the_verdict() {
    let outcome = |passed| RunOutcome { passed, summary: serde_json::Value::Null, files: Vec::new() };
    assert_eq!(outcome(None).exit_code(), 0);
    assert_eq!(outcome(Some(true)).exit_code(), 0);
    assert_eq!(outcome(Some(false)).exit_code(), 2);
}

#[test]
fn type_one_error_over_twenty_seeds() {
    let n = 6;
    let g = TorusGeometry::new(1, n, 4.0).unwrap();
    let s = sigma(2.5, Cutoff::Finite(n), 1).unwrap();
    let p = ModelParams::new(2.5, 0.1 / s, 1.0, n, g).unwrap();
    let cfg = FlowConfig::new(p, 0.02, 0.5);
    let failures = (0..20)
        .filter(|&seed| !invariance_test(&p, &cfg, 0.5, 2000, &RngStream::new(seed, 7), 3.0).unwrap().pass)
        .count();
    assert!(failures <= 1, "{failures} of 20 seeds rejected");
}
