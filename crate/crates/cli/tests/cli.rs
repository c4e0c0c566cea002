use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SCALAR: &str = r#"{"A": [[1.0]], "B": [[1.0]], "C": [[[0.2]]], "D": [[[0.0]]], "Q": [[1.0]], "R": [[1.0]]}"#;

fn slqr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slqr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> (TempDir, String) {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("scalar.json");
    fs::write(&input, SCALAR).unwrap();
    let input = input.to_str().unwrap().to_string();
    (dir, input)
}

fn out(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_scalar() {
    let (dir, input) = setup();
    let o = out(&dir, "s");
    let res = slqr(&["solve", "--input", &input, "--f0", "[[-0.5]]", "--out", &o]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let sol = json(Path::new(&o).join("solution.json"));
    let p = sol["P"][0][0].as_f64().unwrap();
    let f = sol["F"][0][0].as_f64().unwrap();
    assert!((p - 1.6971187186551706).abs() < 1e-9);
    assert!((f + 0.6292339699089637).abs() < 1e-9);
    let csv = fs::read_to_string(Path::new(&o).join("iterations.csv")).unwrap();
    assert!(csv.starts_with("iter,gare_residual,step_norm,wall_time_s"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(',')));
}

#[test]
fn f0_from_file() {
    let (dir, input) = setup();
    let gain = dir.path().join("f0.json");
    fs::write(&gain, r#"{"F": [[-0.5]]}"#).unwrap();
    let o = out(&dir, "s");
    let res = slqr(&["solve", "--input", &input, "--f0", gain.to_str().unwrap(), "--out", &o]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
}

#[test]
fn missing_f0_is_input_error() {
    let (dir, input) = setup();
    let res = slqr(&["solve", "--input", &input, "--out", &out(&dir, "s")]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("--f0"));
}

#[test]
fn unstable_f0_reports_radius() {
    let (dir, input) = setup();
    let res = slqr(&["solve", "--input", &input, "--f0", "[[0.5]]", "--out", &out(&dir, "s")]);
    assert_eq!(res.status.code(), Some(1));
    let err = stderr(&res);
    assert!(err.contains("not stabilizing") && err.contains("2.29"), "{err}");
}

#[test]
fn malformed_json_is_input_error() {
    let (dir, _) = setup();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"A\": [[1.0]").unwrap();
    let res = slqr(&["solve", "--input", bad.to_str().unwrap(), "--f0", "[[-0.5]]", "--out", &out(&dir, "s")]);
    assert_eq!(res.status.code(), Some(1));
    let res = slqr(&["solve", "--input", "/nonexistent/system.json", "--f0", "[[-0.5]]", "--out", &out(&dir, "t")]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn iteration_budget_exhausted() {
    let (dir, input) = setup();
    let o = out(&dir, "s");
    let res = slqr(&["solve", "--input", &input, "--f0", "[[-0.5]]", "--max-iter", "0", "--out", &o]);
    assert_eq!(res.status.code(), Some(2));
    let manifest = json(Path::new(&o).join("run_manifest.json"));
    assert_eq!(manifest["exit_code"], 2);
}

#[test]
fn pd_certificate() {
    let (dir, input) = setup();
    let o = out(&dir, "p");
    let res = slqr(&["pd", "--input", &input, "--f0", "[[-0.5]]", "--out", &o]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let kkt = json(Path::new(&o).join("kkt.json"));
    for key in ["r_primal", "r_dual", "r_station", "x0_norm"] {
        assert!(kkt[key].as_f64().unwrap() <= 1e-8, "{key}");
    }
    assert!(kkt["s_min"].as_f64().unwrap() > 0.0);
    assert!(kkt["duality_gap"].as_f64().unwrap().abs() <= 1e-8);
}

#[test]
fn learning_is_reproducible() {
    let (dir, input) = setup();
    let (a, b) = (out(&dir, "a"), out(&dir, "b"));
    for o in [&a, &b] {
        let res = slqr(&["learn", "--input", &input, "--f0", "[[-0.5]]", "--seed", "42", "--paths", "50", "--max-iter", "5", "--out", o]);
        assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    }
    let read = |d: &str, f: &str| fs::read(Path::new(d).join(f)).unwrap();
    assert_eq!(read(&a, "learn_log.csv"), read(&b, "learn_log.csv"));
    assert_eq!(read(&a, "gain_final.json"), read(&b, "gain_final.json"));

    let c = out(&dir, "c");
    slqr(&["learn", "--input", &input, "--f0", "[[-0.5]]", "--seed", "43", "--paths", "50", "--max-iter", "5", "--out", &c]);
    assert_ne!(read(&a, "learn_log.csv"), read(&c, "learn_log.csv"));
}

#[test]
fn rademacher_and_experiments() {
    let (dir, input) = setup();
    let o = out(&dir, "r");
    let res = slqr(&[
        "learn", "--input", &input, "--f0", "[[-0.5]]", "--noise", "rademacher", "--paths", "20", "--max-iter", "3",
        "--experiments", "3", "--out", &o,
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    for f in ["learn_log.csv", "experiments.csv", "summary.csv", "convergence.svg"] {
        assert!(Path::new(&o).join(f).exists(), "{f}");
    }
    let manifest = json(Path::new(&o).join("run_manifest.json"));
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["config"]["learn"]["noise_kind"], "rademacher");
}

#[test]
fn learn_config_file_and_overrides() {
    let (dir, input) = setup();
    let cfg = dir.path().join("learn.json");
    fs::write(&cfg, r#"{"M": 20, "H": 10, "max_iter": 2, "master_seed": 7}"#).unwrap();
    let o = out(&dir, "c");
    let res = slqr(&["learn", "--input", &input, "--f0", "[[-0.5]]", "--config", cfg.to_str().unwrap(), "--paths", "12", "--out", &o]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let manifest = json(Path::new(&o).join("run_manifest.json"));
    let learn = &manifest["config"]["learn"];
    assert_eq!(learn["M"], 20);
    assert_eq!(learn["H"], 12);
    assert_eq!(learn["master_seed"], 7);

    fs::write(&cfg, r#"{"M": 20, "bogus": 1}"#).unwrap();
    let res = slqr(&["learn", "--input", &input, "--f0", "[[-0.5]]", "--config", cfg.to_str().unwrap(), "--out", &o]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn arm_model_based() {
    let dir = TempDir::new().unwrap();
    let params = dir.path().join("arm.json");
    fs::write(&params, r#"{"m": 1.3, "dt": 0.1}"#).unwrap();
    let o = out(&dir, "arm");
    let res = slqr(&["arm", "--params", params.to_str().unwrap(), "--no-learn", "--out", &o]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let cmp = json(Path::new(&o).join("comparison.json"));
    assert!(cmp["pi_pd_gain_difference"].as_f64().unwrap() < 1e-6);
    assert!(cmp["pi_converged"].as_bool().unwrap());
    assert!(cmp.get("learned").is_none());
    let sol = json(Path::new(&o).join("solution_pi.json"));
    assert_eq!(sol["F"].as_array().unwrap().len(), 2);
    assert_eq!(sol["F"][0].as_array().unwrap().len(), 6);

    fs::write(&params, r#"{"dt": -1.0}"#).unwrap();
    let res = slqr(&["arm", "--params", params.to_str().unwrap(), "--no-learn", "--out", &o]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn rerun_reproduces_artifacts() {
    let (dir, input) = setup();
    let (a, b) = (out(&dir, "a"), out(&dir, "b"));
    let res = slqr(&["learn", "--input", &input, "--f0", "[[-0.5]]", "--seed", "9", "--paths", "30", "--max-iter", "4", "--out", &a]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let manifest = Path::new(&a).join("run_manifest.json");
    let res = slqr(&["rerun", "--manifest", manifest.to_str().unwrap(), "--out", &b]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let listed = json(&manifest)["outputs"].as_array().unwrap().clone();
    assert!(listed.len() > 2);
    for f in listed.iter().map(|v| v.as_str().unwrap()).filter(|f| *f != "run_manifest.json") {
        assert_eq!(fs::read(Path::new(&a).join(f)).unwrap(), fs::read(Path::new(&b).join(f)).unwrap(), "{f}");
    }
}
