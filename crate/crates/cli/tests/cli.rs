use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ricci-flow"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Weights of the last sample in a trajectory CSV, in edge order.
fn final_weights(path: &Path) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let last_t = rows.last().unwrap()[0];
    rows.iter()
        .filter(|r| r[0] == last_t)
        .map(|r| r[3].parse().unwrap())
        .collect()
}

const PATH2_JSON: &str = r#"{"vertices": 3, "edges": [{"u": 0, "v": 1, "w": 0.3}, {"u": 1, "v": 2, "w": 0.7}]}"#;
const STAR: &str = "0 1 0.5\n0 2 0.3\n0 3 0.2\n";
const TWO_TRIANGLES: &str = "0 1 0.1\n1 2 0.1\n0 2 0.1\n3 4 0.1\n4 5 0.1\n3 5 0.1\n2 3 0.3\n";

#[test]
fn curvature_of_path_and_k2() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "path2.json", PATH2_JSON);
    write(dir.path(), "k2.json", r#"{"vertices": 2, "edges": [{"u": 0, "v": 1, "w": 0.4}]}"#);

    let out = run(dir.path(), &["curvature", "path2.json", "--gamma", "reciprocal", "--out", "p"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("kappa"));
    let report = json(&dir.path().join("p/curvature.json"));
    for e in report["edges"].as_array().unwrap() {
        assert!((e["kappa"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    }

    let out = run(dir.path(), &["curvature", "k2.json", "--out", "k", "--alpha", "0.5,0.9"]);
    assert!(out.status.success());
    let report = json(&dir.path().join("k/curvature.json"));
    assert!((report["edges"][0]["kappa"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert_eq!(report["edges"][0]["alpha_samples"].as_array().unwrap().len(), 2);
}

#[test]
fn input_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "bad.txt", "0 1 0.5\n1 two 0.5\n");
    write(dir.path(), "bad.json", "{\"vertices\": 2, \"edges\": [");
    write(dir.path(), "split.txt", "0 1 0.5\n2 3 0.5\n");
    write(dir.path(), "long.txt", "0 1 0.2\n1 2 0.2\n0 2 0.9\n");
    for args in [
        &["curvature", "bad.txt"][..],
        &["curvature", "bad.json"],
        &["curvature", "split.txt"],
        &["curvature", "missing.txt"],
        &["curvature", "long.txt"],
        &["curvature", "long.txt", "--gamma", "cubic"],
        &["flow", "long.txt", "--h", "-1"],
        &["detect", "long.txt"],
        &["frobnicate"],
    ] {
        let out = run(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn star_flow_settles_at_uniform_weights() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "star.txt", STAR);
    let out = run(
        dir.path(),
        &["flow", "star.txt", "--integrator", "rk45", "--horizon", "50", "--output-interval", "1"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("max|dw/dt|"));
    for w in final_weights(&dir.path().join("trajectory.csv")) {
        assert!((w - 1.0 / 3.0).abs() < 1e-5);
    }
    let events = json(&dir.path().join("events.json"));
    assert!(events["events"].as_array().unwrap().is_empty());
}

#[test]
fn unnormalized_flow_decays_exponentially() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "p.txt", "0 1 0.5\n1 2 0.5\n");
    let out = run(
        dir.path(),
        &["flow", "p.txt", "--mode", "unnormalized", "--horizon", "1", "--tolerance", "0"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for w in final_weights(&dir.path().join("trajectory.csv")) {
        assert!((w - 0.5 * (-1.0f64).exp()).abs() < 1e-6);
    }
}

#[test]
fn euler_runs_with_coarse_steps() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "star.txt", STAR);
    let out = run(
        dir.path(),
        &["flow", "star.txt", "--integrator", "euler", "--h", "0.1", "--horizon", "5", "--tolerance", "0"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 51 * 3);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "g.txt", TWO_TRIANGLES);
    let args = |out: &'static str| {
        vec!["detect", "g.txt", "--mt", "1e-3", "--integrator", "rk45", "--renormalize", "--out", out]
    };
    assert!(run(dir.path(), &args("a")).status.success());
    assert!(run(dir.path(), &args("b")).status.success());
    assert_eq!(
        fs::read(dir.path().join("a/hierarchy.json")).unwrap(),
        fs::read(dir.path().join("b/hierarchy.json")).unwrap()
    );
}

#[test]
fn detect_examples() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "p6.txt", "0 1 0.12\n1 2 0.2\n2 3 0.15\n3 4 0.22\n4 5 0.18\n5 6 0.13\n");
    write(dir.path(), "star.txt", "0 1 0.1\n0 2 0.2\n0 3 0.3\n0 4 0.4\n");
    write(dir.path(), "tt.txt", TWO_TRIANGLES);
    let common = ["--mt", "1e-3", "--integrator", "rk45", "--renormalize"];

    let mut args = vec!["detect", "p6.txt", "--out", "p6"];
    args.extend(common);
    assert!(run(dir.path(), &args).status.success());
    let report = json(&dir.path().join("p6/hierarchy.json"));
    assert_eq!(report["final_graph"]["edges"].as_array().unwrap().len(), 2);
    assert_eq!(report["events"].as_array().unwrap().len(), 4);

    let mut args = vec!["detect", "star.txt", "--out", "star"];
    args.extend(common);
    assert!(run(dir.path(), &args).status.success());
    let report = json(&dir.path().join("star/hierarchy.json"));
    assert!(report["events"].as_array().unwrap().is_empty());
    assert!(report["communities"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c.as_array().unwrap().len() == 1));

    let mut args = vec!["detect", "tt.txt", "--out", "tt"];
    args.extend(common);
    let out = run(dir.path(), &args);
    assert!(out.status.success());
    let report = json(&dir.path().join("tt/hierarchy.json"));
    assert_eq!(report["communities"], serde_json::json!([[0, 1, 2], [3, 4, 5]]));
    assert!(String::from_utf8_lossy(&out.stdout).contains("community 1: 3 4 5"));
}

#[test]
fn non_convergence_exits_with_three() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "star.txt", STAR);
    let out = run(dir.path(), &["detect", "star.txt", "--mt", "1e-3", "--horizon", "0.5", "--perturb"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn validate_filter() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["validate", "--filter", "transport"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS [ 7] transport-oracle"));
    assert!(stdout.contains("1 checks, 0 failed"));

    let out = run(dir.path(), &["validate", "--filter", "collapsing"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL [ 3]"));
}
