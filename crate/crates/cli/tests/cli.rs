use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn rods(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rods")).args(args).output().expect("binary runs")
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn testbed_config() -> Value {
    let text = fs::read_to_string(configs_dir().join("bimodal_testbed.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["gmm"] = json!(configs_dir().join("bimodal_gmm.json"));
    v
}

/// Writes `config` into a fresh directory and returns it with the config path.
fn setup(config: &Value) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    (dir, path)
}

fn run_in(dir: &Path, config: &Path, cmd: &str, extra: &[&str]) -> (Output, PathBuf) {
    let out = dir.join("out");
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = rods(&args);
    assert!(o.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&o.stderr));
    (o, out)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn leftover_temp_files(dir: &Path) -> Vec<PathBuf> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            found.extend(leftover_temp_files(&p));
        } else if p.file_name().unwrap().to_string_lossy().starts_with(".tmp") {
            found.push(p);
        }
    }
    found
}

#[test]
fn filtered_verify_passes_and_reports_only_that_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = rods(&["verify", "--filter", "theorem1", "--output-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&dir.path().join("verify_report.json"));
    let props = report["properties"].as_array().unwrap();
    assert!(!props.is_empty());
    assert!(props.iter().all(|p| p["suite"] == "theorem1"));
    assert_eq!(report["passed"], true);
}

#[test]
fn full_verify_exit_status_follows_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = rods(&["verify", "--output-dir", dir.path().to_str().unwrap()]);
    let report = read_json(&dir.path().join("verify_report.json"));
    let passed = report["passed"].as_bool().unwrap();
    assert_eq!(o.status.code(), Some(if passed { 0 } else { 1 }));
    assert_eq!(passed, report["properties"].as_array().unwrap().iter().all(|p| p["passed"] == true));
}

#[test]
fn sample_writes_one_trajectory_file_per_chain() {
    let mut cfg = testbed_config();
    cfg["n_chains"] = json!(9);
    let (dir, path) = setup(&cfg);
    let (_, out) = run_in(dir.path(), &path, "sample", &[]);
    let n_steps = cfg["schedule"]["n_steps"].as_u64().unwrap() as usize;
    let mut files: Vec<_> = fs::read_dir(out.join("trajectories")).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 9);
    for f in &files {
        assert_eq!(fs::read_to_string(f).unwrap().lines().count(), n_steps + 1, "{}", f.display());
    }
    assert_eq!(fs::read_to_string(out.join("endpoints.csv")).unwrap().lines().count(), 10);
    assert!(leftover_temp_files(dir.path()).is_empty());
}

#[test]
fn comparing_identical_samplers_corrects_nothing() {
    let mut cfg = testbed_config();
    cfg["compare"]["treatment"] = cfg["compare"]["baseline"].clone();
    cfg["n_chains"] = json!(32);
    let (dir, path) = setup(&cfg);
    let (_, out) = run_in(dir.path(), &path, "compare", &[]);
    let report = read_json(&out.join("compare_report.json"));
    assert_eq!(report["treatment"]["correction_rate"], 0.0);
    assert_eq!(report["treatment"]["new_hallucination_rate"], 0.0);
    assert_eq!(report["breakdown"]["unchanged"], 32);
    assert!(read_json(&out.join("timing.json")).get("baseline_mean_wall_time").is_some());
    assert!(report["baseline"].get("mean_wall_time").is_none());
}

#[test]
fn roc_with_extreme_thresholds_gives_the_corners() {
    let mut cfg = testbed_config();
    cfg["roc"]["thresholds"] = json!([0, "inf"]);
    cfg["n_chains"] = json!(128);
    let (dir, path) = setup(&cfg);
    let (_, out) = run_in(dir.path(), &path, "roc", &[]);
    let csv = fs::read_to_string(out.join("roc.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows, ["threshold,fpr,tpr", "0.0,1.0,1.0", "inf,0.0,0.0"]);
    let summary = read_json(&out.join("roc_summary.json"));
    assert_eq!(summary["degenerate"], false);
    assert_eq!(summary["epsilon"], 0.0);
}

#[test]
fn critical_steps_lie_inside_the_window() {
    let (dir, path) = setup(&testbed_config());
    let (_, out) = run_in(dir.path(), &path, "critical-steps", &["--epsilon", "15"]);
    let summary = read_json(&out.join("critical_summary.json"));
    let n = summary["n_steps"].as_u64().unwrap() as f64;
    let marked = summary["marked"].as_array().unwrap();
    assert!(!marked.is_empty());
    for i in marked {
        let f = i.as_f64().unwrap() / n;
        assert!((0.1..0.5).contains(&f), "{f}");
    }
    let csv = fs::read_to_string(out.join("critical_steps.csv")).unwrap();
    assert_eq!(csv.lines().count() as f64, n + 1.0);
}

#[test]
fn bad_config_names_the_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = "{\n  \"gmm\": \"x.json\",\n  \"schedule\": {\"n_steps\": 40, \"sigma_min\": 0.002, \"sigma_max\": \"big\"},\n  \"n_chains\": 4\n}\n";
    fs::write(&path, text).unwrap();
    let o = rods(&["sample", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("schedule.sigma_max"), "{err}");
    assert!(err.contains("bad.json:3:"), "{err}");
}

#[test]
fn filter_is_rejected_outside_verify() {
    let (_dir, path) = setup(&testbed_config());
    let o = rods(&["sample", "--config", path.to_str().unwrap(), "--filter", "theorem1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--filter"));
}

#[test]
fn seed_override_changes_the_samples() {
    let mut cfg = testbed_config();
    cfg["n_chains"] = json!(4);
    let (dir, path) = setup(&cfg);
    let read = |extra: &[&str]| {
        let (_, out) = run_in(dir.path(), &path, "sample", extra);
        fs::read_to_string(out.join("endpoints.csv")).unwrap()
    };
    let default = read(&[]);
    assert_eq!(default, read(&["--seed", "0"]));
    assert_ne!(default, read(&["--seed", "1"]));
}

#[test]
fn outputs_do_not_depend_on_the_thread_count() {
    let mut cfg = testbed_config();
    cfg["n_chains"] = json!(40);
    let (dir, path) = setup(&cfg);
    let files = ["compare_chains.csv", "compare_report.json"];
    let read = |threads: &str| {
        let (_, out) = run_in(dir.path(), &path, "compare", &["--threads", threads, "--epsilon", "15"]);
        files.map(|f| fs::read(out.join(f)).unwrap())
    };
    assert_eq!(read("1"), read("6"));
    assert!(leftover_temp_files(dir.path()).is_empty());
}
