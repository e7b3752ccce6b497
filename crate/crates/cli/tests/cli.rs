use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pbce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbce")).args(args).output().expect("binary runs")
}

fn design(dir: &Path, name: &str, extra: &[&str]) -> Output {
    let out = dir.join(name);
    let mut args = vec!["design", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    pbce(&args)
}

#[test]
fn design_writes_one_entry_per_doppler_bin() {
    let dir = tempfile::tempdir().unwrap();
    let res = design(dir.path(), "cb.json", &["--seed", "7"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("cb.json")).unwrap()).unwrap();
    assert_eq!(v["version"], 1);
    assert_eq!(v["K"], 512);
    assert_eq!(v["P"], 64);
    assert_eq!(v["M"], 2);
    assert_eq!(v["entries"].as_array().unwrap().len(), 5);
    assert_eq!(v["provenance"]["seed"], 7);
    let trace = fs::read_to_string(dir.path().join("cb.trace.csv")).unwrap();
    assert!(trace.lines().any(|l| l.starts_with("slot,x,iteration")));
    assert!(trace.contains("# config_hash: "));
}

#[test]
fn design_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    assert!(design(dir.path(), "a.json", &["--seed", "3"]).status.success());
    assert!(design(dir.path(), "b.json", &["--seed", "3"]).status.success());
    let a = fs::read(dir.path().join("a.json")).unwrap();
    let b = fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
    assert!(design(dir.path(), "c.json", &["--seed", "4"]).status.success());
    assert_ne!(a, fs::read(dir.path().join("c.json")).unwrap());
}

#[test]
fn iterations_must_be_a_multiple_of_the_pilot_count() {
    let dir = tempfile::tempdir().unwrap();
    let res = design(dir.path(), "cb.json", &["--iters", "200"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!dir.path().join("cb.json").exists());
}

#[test]
fn inspect_reports_slots_and_rejects_bad_ones() {
    let dir = tempfile::tempdir().unwrap();
    assert!(design(dir.path(), "cb.json", &[]).status.success());
    let cb = dir.path().join("cb.json");
    let cb = cb.to_str().unwrap();

    let res = pbce(&["inspect", "--codebook", cb, "--slot", "3", "--json"]);
    assert!(res.status.success());
    let v: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(v["x"], 0);
    let range = v["f_d_range_hz"].as_array().unwrap();
    assert!(range[0].as_f64().unwrap() <= 0.0 && range[1].as_f64().unwrap() >= 0.0);
    assert_eq!(v["placement"].as_array().unwrap().len(), 64);

    let text = pbce(&["inspect", "--codebook", cb, "--slot", "1"]);
    assert!(text.status.success());
    assert!(String::from_utf8_lossy(&text.stdout).contains("x = -2"));

    for slot in ["0", "6"] {
        assert_eq!(pbce(&["inspect", "--codebook", cb, "--slot", slot]).status.code(), Some(2));
    }
}

#[test]
fn malformed_codebook_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"version\": 1,\n  \"K\": 512,\n  oops\n}\n").unwrap();
    let res = pbce(&["inspect", "--codebook", bad.to_str().unwrap(), "--slot", "3"]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("line 4"), "{err}");

    let missing = dir.path().join("missing.json");
    assert_eq!(pbce(&["inspect", "--codebook", missing.to_str().unwrap(), "--slot", "3"]).status.code(), Some(2));
}

#[test]
fn simulate_writes_results_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"seed": 11, "sim": {"snr_db": [20], "estimators": ["ls", "omp"], "pilot_sources": ["equidistant"], "trials": 2}}"#,
    )
    .unwrap();
    let out = dir.path().join("res.csv");
    let res = pbce(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("# config_hash: "));
    assert!(text.contains("# seed: 11"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("snr_db,"));
}

#[test]
fn simulate_rejects_empty_grid_and_mismatched_codebook() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.json");
    fs::write(&cfg, r#"{"sim": {"snr_db": []}}"#).unwrap();
    let out = dir.path().join("res.csv");
    let out = out.to_str().unwrap();
    assert_eq!(pbce(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]).status.code(), Some(2));

    // Codebook designed for a different pilot count.
    let small = dir.path().join("small.json");
    fs::write(&small, r#"{"design": {"pilots": 32, "iters": 32}}"#).unwrap();
    let small_cb = dir.path().join("small_cb.json");
    let res = pbce(&["design", "--config", small.to_str().unwrap(), "--out", small_cb.to_str().unwrap()]);
    assert!(res.status.success());
    let res = pbce(&["simulate", "--codebook", small_cb.to_str().unwrap(), "--trials", "1", "--out", out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!Path::new(out).exists());
}

#[test]
fn doppler_table_covers_the_track() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("doppler.csv");
    let res = pbce(&["doppler", "--points", "20", "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("alpha"))
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 21);
    // Approaching the base station, then receding from it.
    assert!(rows[0][1] > 1000.0);
    assert!(rows[20][1] < -1000.0);
    assert!(rows[10][1].abs() < 1e-6);
    assert!(rows.iter().all(|r| (1.0..=5.0).contains(&r[3])));
}

#[test]
fn config_prints_presets_and_rejects_unknown() {
    let res = pbce(&["config", "--preset", "fig9"]);
    assert!(res.status.success());
    let v: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(v["sim"]["ici_iterations"].as_array().unwrap().len(), 6);
    assert_eq!(pbce(&["config", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(pbce(&["bogus"]).status.code(), Some(2));
}
