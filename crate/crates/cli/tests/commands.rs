//! Runs the built binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_foldgraph")).args(args).output().expect("binary runs")
}

fn summary(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn props_path5_p0_holds_everywhere() {
    let s = summary(&["props", "--graph", "path:5", "--property", "P0", "--seed", "0"]);
    assert_eq!(s["fraction"], 1.0);
    assert_eq!(s["trials"], 100);
}

#[test]
fn exact_recovers_generated_instance() {
    let s = summary(&["exact", "--seed", "5"]);
    assert_eq!(s["recovered"], true);
    assert_eq!(s["z_s"], s["z_s_true"]);
}

#[test]
fn zero_trials_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["run", "--trials", "0", "--out", path(dir.path())]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    assert_eq!(err["error"], "ConfigInvalid");
}

#[test]
fn bad_graph_spec_reports_parse_error() {
    let out = run(&["props", "--graph", "torus:3"]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "Parse");
}

#[test]
fn run_is_byte_identical_and_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = |out: &Path| vec!["run".to_string(), "--snr".into(), "inf".into(), "--seed".into(), "7".into(), "--out".into(), path(out).into()];
    let first = summary(&args(&a).iter().map(String::as_str).collect::<Vec<_>>());
    summary(&args(&b).iter().map(String::as_str).collect::<Vec<_>>());
    for name in ["aggregate.csv", "trials.csv", "result.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let csv = std::fs::read_to_string(a.join("aggregate.csv")).unwrap();
    let meta: Value = serde_json::from_str(csv.lines().next().unwrap().strip_prefix("# ").unwrap()).unwrap();
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["K"], 20);
    assert_eq!(first["seed"], 7);
}

#[test]
fn noiseless_power_plant_sweep_has_interior_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let s = summary(&["run", "--snr", "inf", "--out", path(dir.path())]);
    let curve = &s["curves"][0];
    assert_eq!(curve["interior_minimum"], true, "{curve}");
    assert_eq!(curve["skipped"], 0);
}

#[test]
fn gen_then_fold() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    let f = dir.path().join("f");
    let s = summary(&["gen", "--graph", "grid:5x4", "--k", "4", "--out", path(&g)]);
    let max_abs = s["max_abs"].as_f64().unwrap();
    let signal = g.join("signal.csv");
    let lambda = format!("{}", 0.4 * max_abs);
    let folded = summary(&["fold", "--input", path(&signal), "--lambda", &lambda, "--out", path(&f)]);
    assert!(folded["nonzero_fraction"].as_f64().unwrap() > 0.0);
    let text = std::fs::read_to_string(f.join("folded.csv")).unwrap();
    assert!(text.starts_with("# {"));
    assert_eq!(text.lines().nth(1), Some("vertex,n,p,lambda"));
}

#[test]
fn image_recover_writes_every_raster() {
    let dir = tempfile::tempdir().unwrap();
    let s = summary(&["image-recover", "--toy", "32x32", "--eps", "14:30:2", "--out", path(dir.path())]);
    assert_eq!(s["per_epsilon"].as_array().unwrap().len(), 9);
    assert_eq!(s["fused_mismatches"][0], 0);
    let rasters = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pgm"))
        .count();
    assert_eq!(rasters, 10);
    let fused = std::fs::read(dir.path().join("fused.pgm")).unwrap();
    assert!(fused.starts_with(b"P5\n# {"));
}

#[test]
fn image_fold_then_recover_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f");
    let r = dir.path().join("r");
    let folded = summary(&["image-fold", "--toy", "32x32", "--out", path(&f)]);
    assert!(folded["nonzero_fraction"][0].as_f64().unwrap() > 0.0);
    let s = summary(&[
        "image-recover",
        "--input",
        path(&f.join("folded.json")),
        "--truth",
        path(&f.join("z.json")),
        "--eps",
        "14,20",
        "--out",
        path(&r),
    ]);
    assert_eq!(s["fused_mismatches"][0], 0);
}
