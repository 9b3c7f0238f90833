use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn lqmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lqmp")).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn solve(problem: &str, out: &Path, extra: &[&str]) -> Output {
    let p = data(problem);
    let mut args = vec!["solve", p.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    lqmp(&args)
}

#[test]
fn nominal_solve_reports_reference_energy() {
    let dir = tempfile::tempdir().unwrap();
    let out = solve("submersible_nominal.json", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&dir.path().join("summary.json"));
    let cost = s["cost"].as_f64().unwrap();
    assert!((cost - 8439.0).abs() / 8439.0 < 0.01, "{cost}");
    assert_eq!(s["sequence"], "unconstrained");
    assert_eq!(s["revalidated"], true);
    for f in ["trajectory.csv", "plot.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn explicit_ceiling_touch() {
    let dir = tempfile::tempdir().unwrap();
    let out = solve("submersible_perturbed.json", dir.path(), &["--sequence", "explicit:ceiling-touch"]);
    assert_eq!(out.status.code(), Some(0));
    let s = json(&dir.path().join("summary.json"));
    let cost = s["cost"].as_f64().unwrap();
    assert!((cost - 8561.0).abs() / 8561.0 < 0.01, "{cost}");
    assert_eq!(s["junctions"][0]["rows"][0], "ceiling");
    assert_eq!(s["junctions"][0]["kind"], "touch");
}

#[test]
fn asymmetric_cost_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("submersible_nominal.json")).unwrap();
    let bad = text.replacen("[0.0, 67.5, 0.0, 0.0, 0.0]", "[0.0, 67.5, 1.0, 0.0, 0.0]", 1);
    assert_ne!(bad, text);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, bad).unwrap();
    let out = lqmp(&["solve", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CostSymmetry"));
}

#[test]
fn malformed_json_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\n  \"A\": [[0.0]],\n  \"B\": oops\n}\n").unwrap();
    let out = lqmp(&["solve", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn infeasible_sequence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = solve("submersible_perturbed.json", dir.path(), &["--sequence", "explicit:unconstrained"]);
    assert_eq!(out.status.code(), Some(2));
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["feasible"], false);
    assert_eq!(s["revalidated"], true);
}

#[test]
fn bad_sequence_spec_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = solve("submersible_perturbed.json", dir.path(), &["--sequence", "explicit:roof-touch"]);
    assert_eq!(out.status.code(), Some(1));
    let out = solve("submersible_perturbed.json", dir.path(), &["--sequence", "greedy"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn summary_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(solve("submersible_perturbed.json", d.path(), &[]).status.code(), Some(0));
    }
    let ra = std::fs::read(a.path().join("summary.json")).unwrap();
    let rb = std::fs::read(b.path().join("summary.json")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(
        std::fs::read(a.path().join("trajectory.csv")).unwrap(),
        std::fs::read(b.path().join("trajectory.csv")).unwrap()
    );
}

#[test]
fn csv_reloads_to_the_same_verdict() {
    // recomputed here from the CSV alone: floor 0 ≤ p_y ≤ 25 ceiling, thrust a_x + 2.5 v_x ≥ 1
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(solve("submersible_perturbed.json", dir.path(), &[]).status.code(), Some(0));
    let mut rd = csv::Reader::from_path(dir.path().join("trajectory.csv")).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["t", "p_x", "v_x", "p_y", "v_y", "beta", "a_x", "a_y", "arc_index", "active_set"]);
    let mut worst = f64::NEG_INFINITY;
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec.unwrap();
        let f = |i: usize| rec[i].parse::<f64>().unwrap();
        worst = worst.max(-f(3)).max(f(3) - 25.0).max(1.0 - f(6) - 2.5 * f(2));
        rows += 1;
    }
    assert!(rows >= 2000);
    assert!(worst <= 1e-8, "{worst}");
    // the touch drives the depth to the floor
    assert!(worst > -1e-6, "{worst}");
}

#[test]
fn config_overrides_flags_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "subcommand = \"solve\"\nsamples = 150\nsequence = \"explicit:floor-touch\"\n").unwrap();
    let out = solve("submersible_perturbed.json", dir.path(), &["--samples", "900", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["samples"], 150);
    assert_eq!(s["sequence_mode"], "explicit:floor-touch");

    std::fs::write(&cfg, "samples = 150\nsamplez = 3\n").unwrap();
    let out = solve("submersible_perturbed.json", dir.path(), &["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("samplez"));

    std::fs::write(&cfg, "subcommand = \"oracle\"\n").unwrap();
    let out = solve("submersible_perturbed.json", dir.path(), &["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn primitive_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("prims.json");
    let c = cache.to_str().unwrap();
    assert_eq!(solve("submersible_perturbed.json", &dir.path().join("a"), &["--cache", c]).status.code(), Some(0));
    assert!(cache.exists());
    let out = solve("submersible_perturbed.json", &dir.path().join("b"), &["--cache", c]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&out.stderr).contains("warning"));
    // a cache for another problem is refused and rebuilt
    let out = solve("double_integrator.json", &dir.path().join("c"), &["--cache", c]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ignoring primitive cache"));
}

#[test]
fn oracle_agrees_on_the_floor_touch() {
    let dir = tempfile::tempdir().unwrap();
    let p = data("submersible_perturbed.json");
    let out = lqmp(&["oracle", p.to_str().unwrap(), "--oracle-nodes", "400", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&dir.path().join("oracle.json"));
    assert!(r["relative_gap"].as_f64().unwrap() < 0.01);
    assert_eq!(r["gap_shrinks"], true);
    assert_eq!(r["pattern_match"], true);
    assert!(dir.path().join("trajectory.csv").exists());
    let mut rd = csv::Reader::from_path(dir.path().join("oracle_trajectory.csv")).unwrap();
    assert_eq!(rd.records().count(), 401);
}

#[test]
fn lqr_baseline_writes_history_and_controller() {
    let dir = tempfile::tempdir().unwrap();
    let p = data("submersible_nominal.json");
    let out = lqmp(&[
        "lqr-baseline",
        p.to_str().unwrap(),
        "--pop",
        "20",
        "--iters",
        "15",
        "--elites",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(matches!(out.status.code(), Some(0) | Some(2)));
    let mut rd = csv::Reader::from_path(dir.path().join("history.csv")).unwrap();
    let best: Vec<f64> = rd.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert!(!best.is_empty() && best.len() <= 15);
    assert!(best.windows(2).all(|w| w[1] <= w[0]), "{best:?}");
    let c = json(&dir.path().join("controller.json"));
    assert_eq!(c["config"]["population"], 20);
    assert_eq!(c["gain"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("lqr_trace.csv").exists());

    let out = lqmp(&["lqr-baseline", p.to_str().unwrap(), "--pop", "5", "--elites", "5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_writes_report_and_figures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = lqmp(&["bench", "submersible", "--variant", "nominal", "--skip-lqr", "--out", d]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "trajectory_proposed.csv", "figure_data.csv", "paths.svg", "controls.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let r = json(&dir.path().join("report.json"));
    assert_eq!(r["variant"], "nominal");
    assert!(r["lqr"].is_null());

    let out = lqmp(&["bench", "submersible", "--variant", "sideways", "--out", d]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(lqmp(&["solve", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(lqmp(&["--help"]).status.code(), Some(0));
}

#[test]
fn help_lists_defaults() {
    let out = lqmp(&["solve", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in ["[default: auto]", "[default: 2000]", "[default: out]", "--cache", "--config"] {
        assert!(text.contains(needle), "{needle} missing from\n{text}");
    }
    let text = String::from_utf8_lossy(&lqmp(&["lqr-baseline", "--help"]).stdout).to_string();
    for needle in ["[default: 7]", "[default: 200]", "[default: 2800]", "[default: 10]"] {
        assert!(text.contains(needle), "{needle} missing");
    }
    let text = String::from_utf8_lossy(&lqmp(&["oracle", "--help"]).stdout).to_string();
    assert!(text.contains("[default: 1600]"));
}
