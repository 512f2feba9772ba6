use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use ifp_core::barrier::{Boundary, BoundaryInterp};
use serde_json::Value;
use tempfile::TempDir;

const CONSTANT: &str = r#"{"kind": "analytic", "family": "constant_barrier", "params": {"a": 1}}"#;
const ARCSINE: &str = r#"{"kind": "piecewise_constant", "breakpoints": [0, 1, 2], "values": [1, 0.5, 0.375]}"#;
const MEDIAN: &str = r#"{"kind": "piecewise_constant", "breakpoints": [0, 1], "values": [1, 0.5]}"#;

fn ifp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ifp"))
        .current_dir(dir)
        .env_remove("IFP_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stderr)))
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap()
}

fn read_boundary(path: &Path) -> Boundary {
    Boundary::read_csv(BufReader::new(fs::File::open(path).unwrap()), BoundaryInterp::Discrete).unwrap()
}

fn write_g(dir: &Path, name: &str, spec: &str) -> String {
    fs::write(dir.join(name), spec).unwrap();
    name.to_string()
}

#[test]
fn solve_constant_barrier_roundtrip() {
    let tmp = TempDir::new().unwrap();
    let g = write_g(tmp.path(), "constant_a1.json", CONSTANT);
    let o = ifp(tmp.path(), &["solve", "--g", &g, "--n", "200", "--horizon", "2", "--out", "run1/"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let b = read_boundary(&tmp.path().join("run1/boundary.csv"));
    for (k, &t) in b.times().iter().enumerate() {
        if (0.1..=2.0).contains(&t) {
            assert!((b.value_at(k) - 1.0).abs() <= 0.02, "b({t}) = {}", b.value_at(k));
        }
    }
    let rep: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("run1/report.json")).unwrap()).unwrap();
    assert_eq!(rep["schema_version"], 1);
    assert_eq!(rep["config"]["solver"]["nodes"], 4097);
    assert_eq!(rep["config"]["solver"]["tol_rec"], 1e-9);
    assert_eq!(rep["config"]["n"], 200);
    assert!(rep["oracle_sup_error"].as_f64().unwrap() < 0.02);
    assert_eq!(rep, stdout_json(&o));
}

#[test]
fn solve_median_inline() {
    let tmp = TempDir::new().unwrap();
    let o = ifp(tmp.path(), &["solve", "--g", MEDIAN, "--out", "m"]);
    assert_eq!(code(&o), 0);
    let b = read_boundary(&tmp.path().join("m/boundary.csv"));
    assert_eq!(b.times(), &[0.0, 1.0]);
    assert!(b.value_at(1).abs() < 1e-9);
    assert_eq!(stdout_json(&o)["mode"], "exact");
}

#[test]
fn input_errors_name_the_field() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        (r#"{"kind": "piecewise_constant", "breakpoints": [0, 1], "valuez": [1, 0.5]}"#, "valuez"),
        (r#"{"kind": "piecewise_constant", "breakpoints": [0, 1], "values": [1, 1.5]}"#, "values[1]"),
        (r#"{"kind": "analytic", "family": "constant_barrier", "params": {"a": "one"}}"#, "params.a"),
        (r#"{"kind": "piecewise_constant", "breakpoints": "#, "g"),
    ];
    for (spec, field) in cases {
        let o = ifp(tmp.path(), &["solve", "--g", spec, "--out", "e"]);
        assert_eq!(code(&o), 2, "{spec}");
        let err = stderr_json(&o);
        assert_eq!(err["error"], "input");
        assert_eq!(err["field"], field, "{spec}");
    }
    let o = ifp(tmp.path(), &["solve", "--g", MEDIAN, "--nodes", "many"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["field"], "nodes");
    let o = ifp(tmp.path(), &["solve", "--g", "missing.json"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["field"], "g");
    let o = ifp(tmp.path(), &["solve", "--g", CONSTANT]);
    assert_eq!(stderr_json(&o)["field"], "horizon");
}

#[test]
fn solver_failure_exits_3() {
    let tmp = TempDir::new().unwrap();
    let g = r#"{"kind": "piecewise_constant", "breakpoints": [0, 1, 4], "values": [1, 0.9, 0.89999999]}"#;
    let o = ifp(tmp.path(), &["solve", "--g", g, "--half-width-sigmas", "4", "--out", "f"]);
    assert_eq!(code(&o), 3);
    let err = stderr_json(&o);
    assert_eq!(err["error"], "solver");
    assert_eq!(err["field"], "half_width_sigmas");
}

#[test]
fn verify_constant_then_perturbed() {
    let tmp = TempDir::new().unwrap();
    let base = ["--g", CONSTANT, "--n", "100", "--horizon", "2", "--seed", "7"];
    let o = ifp(tmp.path(), &[&["verify"], &base[..], &["--out", "v1"]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = stdout_json(&o);
    for check in ["recovery", "u_equals_v", "residual", "distribution"] {
        assert_eq!(rep["checks"][check]["pass"], true, "{check}");
    }

    let o = ifp(tmp.path(), &["solve", "--g", CONSTANT, "--n", "100", "--horizon", "2", "--out", "s"]);
    assert_eq!(code(&o), 0);
    let shifted = read_boundary(&tmp.path().join("s/boundary.csv")).shifted(0.2);
    let mut buf = Vec::new();
    shifted.write_csv(&mut buf).unwrap();
    fs::write(tmp.path().join("shifted.csv"), buf).unwrap();
    let o = ifp(tmp.path(), &[&["verify"], &base[..], &["--boundary", "shifted.csv", "--out", "v2"]].concat());
    assert_eq!(code(&o), 4);
    let failed: Vec<String> = serde_json::from_value(stderr_json(&o)["failed"].clone()).unwrap();
    assert!(failed.contains(&"distribution".to_string()), "{failed:?}");
    assert!(failed.contains(&"residual".to_string()), "{failed:?}");
}

#[test]
fn verify_atomic_skips_residual() {
    let tmp = TempDir::new().unwrap();
    let o = ifp(tmp.path(), &["verify", "--g", ARCSINE, "--seed", "3", "--out", "v"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = stdout_json(&o);
    assert_eq!(rep["checks"]["residual"]["skipped"], true);
    assert_eq!(rep["checks"]["residual"]["reason"], "g not continuous");
    assert!(tmp.path().join("v/verify.json").exists());
}

#[test]
fn simulate_passes_dkw_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let o = ifp(tmp.path(), &["solve", "--g", CONSTANT, "--n", "50", "--horizon", "2", "--no-time-lattice", "--out", "s"]);
    assert_eq!(code(&o), 0);
    let run = |threads: &str, out: &str| {
        let o = ifp(
            tmp.path(),
            &["--threads", threads, "simulate", "--boundary", "s/boundary.csv", "--g", CONSTANT, "--paths", "1000000", "--seed", "5", "--out", out],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        o
    };
    let a = run("1", "a");
    let b = run("3", "b");
    let summary = stdout_json(&a);
    assert_eq!(summary["pass"], true);
    assert_eq!(summary["method"], "exact_mesh");
    assert!(summary["ks"].as_f64().unwrap() <= summary["dkw"].as_f64().unwrap());
    let mut sa = stdout_json(&a);
    let mut sb = stdout_json(&b);
    sa["config"]["out"] = Value::Null;
    sb["config"]["out"] = Value::Null;
    assert_eq!(sa, sb);
    let first = fs::read(tmp.path().join("a/simulate.json")).unwrap();
    run("1", "a");
    assert_eq!(first, fs::read(tmp.path().join("a/simulate.json")).unwrap());
}

#[test]
fn simulate_few_paths_warns() {
    let tmp = TempDir::new().unwrap();
    let o = ifp(tmp.path(), &["simulate", "--g", MEDIAN, "--paths", "50", "--seed", "1", "--dump", "10", "--out", "few"]);
    assert_eq!(code(&o), 0);
    let s = stdout_json(&o);
    assert_eq!(s["n"], 50);
    assert!(s["warnings"][0].as_str().unwrap().contains("wide"));
    let dump = fs::read_to_string(tmp.path().join("few/samples.csv")).unwrap();
    assert_eq!(dump.lines().count(), 11);
    let o = ifp(tmp.path(), &["simulate", "--g", MEDIAN, "--paths", "100"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["field"], "seed");
}

#[test]
fn value_matches_orthant_probabilities() {
    let tmp = TempDir::new().unwrap();
    let o = ifp(
        tmp.path(),
        &["value", "--g", ARCSINE, "--at", "1,0", "--at", "2,0.1", "--at", "1.5,-0.3", "--paths", "20000", "--seed", "1", "--out", "v"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = stdout_json(&o);
    assert!(rep["max_grid_diff"].as_f64().unwrap() <= 1e-12);
    let pts = rep["mc_points"].as_array().unwrap();
    assert!((pts[0]["grid_v"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert!((pts[1]["grid_v"].as_f64().unwrap() - 0.375).abs() < 1e-9);
    for p in pts {
        let (v, mc, se) = (p["grid_v"].as_f64().unwrap(), p["mc"].as_f64().unwrap(), p["se"].as_f64().unwrap());
        assert!((v - mc).abs() <= 4.0 * se + 1e-12, "{p}");
    }
    let o = ifp(tmp.path(), &["value", "--g", ARCSINE, "--at", "1,0", "--paths", "1000"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["field"], "seed");
}

#[test]
fn residual_solves_and_evaluates() {
    let tmp = TempDir::new().unwrap();
    let o = ifp(tmp.path(), &["residual", "--g", CONSTANT, "--horizon", "2", "--quad-n", "1000", "--ladder", "250,500", "--out", "r"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = stdout_json(&o);
    assert!(rep["max_abs_residual"].as_f64().unwrap() < 1e-9);
    let b = Boundary::read_csv(
        BufReader::new(fs::File::open(tmp.path().join("r/boundary.csv")).unwrap()),
        BoundaryInterp::Linear,
    )
    .unwrap();
    let t_far = b.times().iter().position(|&t| t >= 0.1).unwrap();
    assert!(b.values()[t_far..].iter().all(|v| (v - 1.0).abs() < 0.01));
    let csv = fs::read_to_string(tmp.path().join("r/residual.csv")).unwrap();
    assert!(csv.starts_with("s,b,residual\n"));

    let o = ifp(tmp.path(), &["residual", "--g", CONSTANT, "--boundary", "r/boundary.csv", "--t", "0.5,1,2", "--tol-residual", "1e-6", "--out", "r2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = ifp(tmp.path(), &["residual", "--g", MEDIAN, "--horizon", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn out_dir_from_environment_and_plot_data() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ifp"))
        .current_dir(tmp.path())
        .env("IFP_OUT_DIR", "from_env")
        .args(["solve", "--g", ARCSINE, "--emit-u", "--emit-plot-data"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let dir = tmp.path().join("from_env");
    for f in ["boundary.csv", "report.json", "u_0.csv", "u_1.csv", "u_2.csv", "plot_data.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let u1 = fs::read_to_string(dir.join("u_1.csv")).unwrap();
    assert!(u1.starts_with("x,u\n"));
    assert_eq!(u1.lines().count(), 4098);
    let plot = fs::read_to_string(dir.join("plot_data.csv")).unwrap();
    assert!(plot.starts_with("series,t,value\n"));
    assert!(plot.lines().any(|l| l.starts_with("g_n,2.0,0.375")));
}

#[test]
fn boundary_csv_round_trips_sentinels() {
    let tmp = TempDir::new().unwrap();
    let g = r#"{"kind": "piecewise_constant", "breakpoints": [0, 0.5, 1, 1.5], "values": [1, 0.6, 0.6, 0]}"#;
    let o = ifp(tmp.path(), &["solve", "--g", g, "--out", "s"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(tmp.path().join("s/boundary.csv")).unwrap();
    assert!(text.contains(",inf\n") && text.contains(",-inf\n"), "{text}");
    let b = read_boundary(&tmp.path().join("s/boundary.csv"));
    let mut again = Vec::new();
    b.write_csv(&mut again).unwrap();
    assert_eq!(String::from_utf8(again).unwrap(), text);
}

#[test]
fn solve_ladder_reports_decreasing_error() {
    let tmp = TempDir::new().unwrap();
    let o = ifp(tmp.path(), &["solve", "--g", CONSTANT, "--n", "100", "--horizon", "2", "--ladder", "25,50,100", "--nodes", "2049", "--out", "l"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = stdout_json(&o);
    assert_eq!(rep["ladder"].as_array().unwrap().len(), 3);
    assert_eq!(rep["ladder_monotone"], true);
    let o = ifp(tmp.path(), &["solve", "--g", CONSTANT, "--horizon", "2", "--ladder", "50,25"]);
    assert_eq!(stderr_json(&o)["field"], "ladder");
}
