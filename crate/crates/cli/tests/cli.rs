use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn airfl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airfl"))
        .args(args)
        .current_dir(cwd)
        .env_remove("AIRFL_OUT_DIR")
        .output()
        .expect("binary runs")
}

const BOUND: &str = "L = 2\nG = 3\nsigma_l2 = 0.5\nsigma_g2 = 0.25\nf0 = 4\nf_star = 0\nxi = 0.1\na = 50\nQ = 1\nT = 20\nR = 5\nd = 10\nlambda = 1\nP = 2\nv = 0.01\n";

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "fl.devices = 4\nfl.devicez = 5\n").unwrap();
    let out = airfl(&["run", "--config", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fl.devicez"));
}

#[test]
fn bad_scheme_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = airfl(&["run", "--scheme", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bound_without_sparsification_has_zero_c() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("b.txt"), BOUND).unwrap();
    let out = airfl(&["bound", "--config", "b.txt", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("o/bound_breakdown.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let c = header.iter().position(|h| *h == "C").unwrap();
    assert_eq!(row[c].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn default_training_schedule_is_flagged_non_conforming() {
    let dir = tempfile::tempdir().unwrap();
    let text = BOUND
        .replace("L = 2", "L = 100")
        .replace("xi = 0.1", "xi = 120")
        .replace("a = 50", "a = 300");
    fs::write(dir.path().join("b.txt"), text).unwrap();
    let out = airfl(&["bound", "--config", "b.txt", "--out", "o"], dir.path());
    assert!(out.status.success());
    let conf = fs::read_to_string(dir.path().join("o/conformance.txt")).unwrap();
    assert!(conf.contains("a >= sqrt(120)*xi*Q*L: FAIL"), "{conf}");
    assert!(conf.contains("conformant: false"));
}

#[test]
fn undefined_memory_constant_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = BOUND.replace("lambda = 1", "lambda = 0.01").replace("a = 50", "a = 400");
    fs::write(dir.path().join("b.txt"), text).unwrap();
    let out = airfl(&["bound", "--config", "b.txt", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("o/conformance.txt").exists());
}

#[test]
fn run_writes_into_the_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.cfg"),
        "data.features = 6\ndata.train = 200\ndata.test = 50\nfl.devices = 4\nschedule.rounds = 2\nschemes = vanilla\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_airfl"))
        .args(["run", "--config", "c.cfg", "--seeds", "3"])
        .current_dir(dir.path())
        .env("AIRFL_OUT_DIR", "envout")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("envout/metrics_vanilla_seed3.csv").exists());
    assert!(dir.path().join("envout/summary.csv").exists());
}
