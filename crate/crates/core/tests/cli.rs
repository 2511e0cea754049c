use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semiclassical::output::validate_summary;

const BIN: &str = env!("CARGO_BIN_EXE_semiclassical");

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(BIN).args(args).arg("--output-dir").arg(out).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const PAIRED: &str = r#"
[scenario]
name = "paired-d1"
mode = "paired"
d = 1
hbar = 0.25
seed = 3
center = [0.0]
momentum = [0.2]
sigma = 0.5
particles = 4000

[kernel]
family = "gaussian"
width = 1.0
sign = 1.0
coupling = 0.2
besov_bound = 1.0

[grid]
points = 128
box_length = 16.0
dt = 0.01
t_final = 0.5

[moments]
every = 25

[certificates]
enabled = false

[metrics]
enabled = true
points_x = 24
points_xi = 24
sample_every = 25
"#;

#[test]
fn bundled_free_scenario_runs_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("free-gaussian-d1.toml");
    let o = run(&["simulate-hartree", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = summary(&dir.path().join("free-gaussian-d1_simulate-hartree.json"));
    validate_summary(&doc).unwrap();
    assert_eq!(doc["runs"][0]["kind"], "quantum");
    let csv = std::fs::read_to_string(dir.path().join("free-gaussian-d1_quantum.csv")).unwrap();
    assert!(csv.starts_with("# generated "));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 21);
}

#[test]
fn bundled_coulomb_scenario_certifies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("coulomb-concentrated-d3.toml");
    let o = run(&["certify", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = summary(&dir.path().join("coulomb-concentrated-d3_certify.json"));
    validate_summary(&doc).unwrap();
    assert!(doc["exponents"]["a"].as_f64().unwrap() > 1.0);
    assert!(doc["ledger_hash"].is_string());
}

#[test]
fn series_are_deterministic_apart_from_the_timestamp() {
    let cfg = scenario("free-gaussian-d1.toml");
    let read = || {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&["simulate-hartree", "--config", cfg.to_str().unwrap()], dir.path());
        assert!(o.status.success());
        let text = std::fs::read_to_string(dir.path().join("free-gaussian-d1_quantum.csv")).unwrap();
        text.lines().skip(1).map(String::from).collect::<Vec<_>>()
    };
    assert_eq!(read(), read());
}

#[test]
fn malformed_config_names_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = std::fs::read_to_string(scenario("free-gaussian-d1.toml")).unwrap().replace("hbar = 0.5", "hbar = -0.5");
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, bad).unwrap();
    let o = run(&["simulate-hartree", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("scenario.hbar") && err.contains("line 6"), "{err}");
}

#[test]
fn paired_run_checkpoints_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("paired.toml");
    std::fs::write(&path, PAIRED).unwrap();
    let cfg = path.to_str().unwrap();
    let o = run(&["compare", "--config", cfg, "--checkpoint"], dir.path());
    assert!(o.status.success(), "{}\n{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let doc = summary(&dir.path().join("paired-d1_compare.json"));
    validate_summary(&doc).unwrap();
    let samples = doc["transport"]["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 3);
    assert!(samples.iter().all(|s| s["pass"] == true));

    let q = dir.path().join("paired-d1_quantum_final.smkl");
    let c = dir.path().join("paired-d1_classical_final.smkl");
    let o = run(
        &["metrics", "--config", cfg, "--quantum", q.to_str().unwrap(), "--against", c.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}\n{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let doc = summary(&dir.path().join("paired-d1_metrics.json"));
    let checks = doc["checks"].as_array().unwrap();
    assert!(checks.iter().any(|c| c["name"] == "W2^2" && c["pass"] == true));
}

#[test]
fn byte_swapped_checkpoint_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("free-gaussian-d1.toml");
    let o = run(&["simulate-hartree", "--config", cfg.to_str().unwrap(), "--checkpoint"], dir.path());
    assert!(o.status.success());
    let q = dir.path().join("free-gaussian-d1_quantum_final.smkl");
    let mut bytes = std::fs::read(&q).unwrap();
    // Version field written big-endian, as a foreign writer would.
    bytes.swap(4, 5);
    let swapped = dir.path().join("swapped.smkl");
    std::fs::write(&swapped, &bytes).unwrap();
    let o = run(&["metrics", "--config", cfg.to_str().unwrap(), "--quantum", swapped.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("version"), "{}", stderr(&o));

    let mut bytes = std::fs::read(&q).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid..mid + 8].reverse();
    std::fs::write(&swapped, &bytes).unwrap();
    let o = run(&["metrics", "--config", cfg.to_str().unwrap(), "--quantum", swapped.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}

#[test]
fn transport_check_passes_on_the_free_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("free-gaussian-d1.toml");
    let o = run(&["transport-check", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 6);
}
