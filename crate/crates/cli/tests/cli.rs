use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use safeinit_core::experiment::ScenarioRecord;
use safeinit_core::reachability::read_grid;
use safeinit_core::simulator::{run_simulation, SimConfig};

const BIN: &str = env!("CARGO_BIN_EXE_safeinit");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = run(dir, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const COARSE: [&str; 5] = ["brs", "--grid-n", "41", "--grid-theta", "31"];

/// Coarse grid plus a small dataset and model, built once per test binary.
fn fixtures() -> &'static PathBuf {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        ok(&dir, &[&COARSE[..], &["--out", "g.grid"]].concat());
        ok(&dir, &["gen-data", "--n", "4", "--m", "60", "--brs", "g.grid", "--seed", "1", "--out", "d.jsonl"]);
        ok(&dir, &["train", "--data", "d.jsonl", "--seed", "1", "--epochs", "30", "--out", "m.json"]);
        dir
    })
}

fn manifest(path: &Path) -> serde_json::Value {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    serde_json::from_str(&fs::read_to_string(PathBuf::from(name)).unwrap()).unwrap()
}

fn sha256(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    format!("{:x}", Sha256::digest(fs::read(path).unwrap()))
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["--help"][..], &["--version"], &["eval", "--help"]] {
        assert_eq!(code(&run(dir.path(), args)), 0, "{args:?}");
    }
    assert_eq!(code(&run(dir.path(), &[])), 1);
    assert_eq!(code(&run(dir.path(), &["bogus"])), 1);
    assert_eq!(code(&run(dir.path(), &["brs", "--grid-n", "many"])), 1);
}

#[test]
fn brs_is_byte_identical_and_hashed() {
    let dir = fixtures();
    let d = tempfile::tempdir().unwrap();
    let out = ok(d.path(), &[&COARSE[..], &["--out", "again.grid"]].concat());
    assert!(out.contains("sweeps") && out.contains("residual"));
    let again = d.path().join("again.grid");
    assert_eq!(fs::read(dir.join("g.grid")).unwrap(), fs::read(&again).unwrap());
    let m = manifest(&again);
    assert_eq!(m["artifacts"]["grid"]["sha256"], sha256(&again));
    assert_eq!(m["converged"], true);
    assert_eq!(m["command"], "brs");
    let grid = read_grid(fs::read(&again).unwrap().as_slice()).unwrap();
    assert_eq!(grid.spec.dims(), [41, 41, 31]);
}

#[test]
fn unconverged_grid_is_saved_but_refused() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &[&COARSE[..], &["--budget", "1", "--out", "u.grid"]].concat());
    assert_eq!(code(&o), 2);
    let path = d.path().join("u.grid");
    assert!(path.exists());
    assert_eq!(manifest(&path)["converged"], false);
    let o = run(d.path(), &["gen-data", "--n", "4", "--m", "2", "--brs", "u.grid", "--seed", "1"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unconverged"));
}

#[test]
fn gen_data_smoke_and_determinism() {
    let dir = fixtures();
    let d = tempfile::tempdir().unwrap();
    let grid = dir.join("g.grid");
    let g = grid.to_str().unwrap();
    for name in ["a.jsonl", "b.jsonl"] {
        ok(d.path(), &["gen-data", "--n", "4", "--m", "10", "--brs", g, "--seed", "5", "--out", name]);
    }
    let a = fs::read_to_string(d.path().join("a.jsonl")).unwrap();
    assert_eq!(a.lines().count(), 10);
    assert_eq!(a, fs::read_to_string(d.path().join("b.jsonl")).unwrap());
    let m = manifest(&d.path().join("a.jsonl"));
    assert_eq!(m["artifacts"]["dataset"]["sha256"], sha256(&d.path().join("a.jsonl")));
    assert_eq!(m["artifacts"]["grid"]["sha256"], sha256(&grid));
    assert_eq!(m["seed"], 5);

    // no seed, or flags that contradict the grid
    assert_eq!(code(&run(d.path(), &["gen-data", "--n", "4", "--m", "10", "--brs", g])), 1);
    assert_eq!(code(&run(d.path(), &["gen-data", "--n", "4", "--m", "10", "--brs", g, "--seed", "5", "--rc", "4"])), 1);
}

#[test]
fn train_is_reproducible_and_checks_its_input() {
    let dir = fixtures();
    let d = tempfile::tempdir().unwrap();
    let data = dir.join("d.jsonl");
    let data = data.to_str().unwrap();
    let out = ok(d.path(), &["train", "--data", data, "--seed", "1", "--epochs", "30", "--out", "m.json"]);
    assert!(out.contains("final loss") && out.contains("validation accuracy"));
    assert_eq!(fs::read(d.path().join("m.json")).unwrap(), fs::read(dir.join("m.json")).unwrap());
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(model["n_hidden"], 10);
    assert_eq!(model["W1"].as_array().unwrap().len(), 10);

    // tampering is caught through the manifest
    let copy = d.path().join("copy.jsonl");
    fs::copy(data, &copy).unwrap();
    let mut mname = copy.as_os_str().to_owned();
    mname.push(".manifest.json");
    let mut original = PathBuf::from(data).into_os_string();
    original.push(".manifest.json");
    fs::copy(PathBuf::from(original), PathBuf::from(&mname)).unwrap();
    let text = fs::read_to_string(&copy).unwrap();
    fs::write(&copy, text.replace("\"y\":0", "\"y\":1")).unwrap();
    let o = run(d.path(), &["train", "--data", "copy.jsonl", "--seed", "1"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not match"));

    // without the manifest the single-class data itself is rejected
    fs::remove_file(PathBuf::from(mname)).unwrap();
    let o = run(d.path(), &["train", "--data", "copy.jsonl", "--seed", "1"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("single class"));

    assert_eq!(code(&run(d.path(), &["train", "--data", data])), 1);
}

#[test]
fn eval_smoke_summary_matches_rows() {
    let dir = fixtures();
    let out = ok(
        dir,
        &["eval", "--n", "4", "--runs", "4", "--candidates", "3", "--brs", "g.grid", "--model", "m.json", "--seed", "7", "--out", "r.csv"],
    );
    let csv = fs::read_to_string(dir.join("r.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("run,strategy,success,violations,time_to_completion"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 8);
    for strategy in ["learned", "random"] {
        let mine: Vec<_> = rows.iter().filter(|r| r[1] == strategy).collect();
        assert_eq!(mine.len(), 4);
        let successes = mine.iter().filter(|r| r[2] == "true").count();
        let violations: usize = mine.iter().map(|r| r[3].parse::<usize>().unwrap()).sum();
        let line = out.lines().find(|l| l.starts_with(strategy)).unwrap();
        let cols: Vec<f64> = line.split_whitespace().skip(1).map(|x| x.parse().unwrap()).collect();
        assert_eq!(cols[0], 100.0 * successes as f64 / 4.0, "{line}");
        // printed to three decimals
        assert!((cols[1] - violations as f64 / 16.0).abs() <= 5e-4 + 1e-12, "{line}");
    }
    let m = manifest(&dir.join("r.csv"));
    assert_eq!(m["artifacts"]["results"]["sha256"], sha256(&dir.join("r.csv")));

    let common = ["--runs", "4", "--brs", "g.grid", "--model", "m.json", "--seed", "7", "--out", "bad.csv"];
    assert_eq!(code(&run(dir, &[&["eval", "--n", "4", "--n-fixed", "4"][..], &common].concat())), 1);
    assert_eq!(code(&run(dir, &[&["eval", "--n", "5"][..], &common].concat())), 1);
}

#[test]
fn simulate_single_vehicle_and_replot() {
    let dir = fixtures();
    let d = tempfile::tempdir().unwrap();
    let sc = ScenarioRecord {
        states: vec![[0.0, 0.0, 0.0]],
        goals: vec![[15.0, 0.0]],
        fixed: vec![false],
    };
    fs::write(d.path().join("one.json"), serde_json::to_string(&sc).unwrap()).unwrap();
    let g = dir.join("g.grid");
    let g = g.to_str().unwrap();
    ok(d.path(), &["simulate", "--brs", g, "--scenario", "one.json", "--svg", "one.svg", "--out", "one.csv"]);
    let csv = fs::read_to_string(d.path().join("one.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,vehicle,qx,qy,theta,mode,active"));
    let ts: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(ts.len() > 2);
    assert!(ts.windows(2).all(|w| (w[1] - w[0] - 0.1).abs() < 1e-9));

    ok(d.path(), &["plot", "--trajectory", "one.csv", "--scenario", "one.json", "--out", "again.svg"]);
    assert_eq!(fs::read(d.path().join("one.svg")).unwrap(), fs::read(d.path().join("again.svg")).unwrap());

    assert_eq!(code(&run(d.path(), &["simulate", "--brs", g, "--n", "4"])), 1);
    assert_eq!(code(&run(d.path(), &["simulate", "--brs", g])), 1);
}

#[test]
fn svg_marks_every_logged_violation() {
    let dir = fixtures();
    let d = tempfile::tempdir().unwrap();
    // start inside each other's danger zone, heading apart
    let sc = ScenarioRecord {
        states: vec![[0.0, 0.0, std::f64::consts::PI], [3.0, 0.0, 0.0], [0.0, 20.0, 0.0]],
        goals: vec![[-20.0, 0.0], [23.0, 0.0], [20.0, 20.0]],
        fixed: vec![false; 3],
    };
    fs::write(d.path().join("close.json"), serde_json::to_string(&sc).unwrap()).unwrap();
    let g = dir.join("g.grid");
    ok(d.path(), &["simulate", "--brs", g.to_str().unwrap(), "--scenario", "close.json", "--svg", "close.svg"]);

    let grid = read_grid(fs::read(&g).unwrap().as_slice()).unwrap();
    let res = run_simulation(&sc.to_scenario().unwrap(), &grid, &SimConfig::new(5.0, 5.0)).unwrap();
    assert!(res.violation_count > 0);
    let svg = fs::read_to_string(d.path().join("close.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="violation""#).count(), res.violation_count);
    assert_eq!(svg.matches(r#"class="goal""#).count(), 3);
    assert!(d.path().join("trajectory.csv").exists());
}
