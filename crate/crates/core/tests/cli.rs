use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

use minhgr::cli::{run, EXIT_DOMAIN, EXIT_INPUT, EXIT_NOT_TIGHT, EXIT_OK, SCHEMA};

const NONADDITIVE: &str = "x1,x2,y,prob\n0,0,0,0\n0,0,1,0.1\n1,0,0,0.2\n1,0,1,0.2\n0,1,0,0.1\n0,1,1,0.3\n1,1,0,0.1\n1,1,1,0\n";
const UNIFORM: &str = "x1,x2,y,prob\n0,0,0,.125\n0,0,1,.125\n1,0,0,.125\n1,0,1,.125\n0,1,0,.125\n0,1,1,.125\n1,1,0,.125\n1,1,1,.125\n";

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn report(&self) -> Value {
        serde_json::from_str(&self.stdout).expect("stdout is one JSON document")
    }

    fn results(&self) -> Value {
        self.report()["results"].clone()
    }
}

fn cli(args: &[&str]) -> Run {
    let argv: Vec<OsString> = std::iter::once("minhgr")
        .chain(args.iter().copied())
        .map(Into::into)
        .collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(argv, &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn file(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn report_envelope() {
    let dir = TempDir::new().unwrap();
    let j = file(&dir, "r2.csv", NONADDITIVE);
    let r = cli(&["oracle", "--joint", &j]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let rep = r.report();
    assert_eq!(rep["schema"], SCHEMA);
    assert_eq!(rep["command"]["name"], "oracle");
    assert_eq!(rep["input"][0]["kind"], "joint");
    assert_eq!(rep["input"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(rep["version"], env!("CARGO_PKG_VERSION"));
    assert!(rep["warnings"].as_array().unwrap().is_empty());
    let res = &rep["results"];
    assert!((f(&res["rho"]) - (0.065f64 / 0.24).sqrt()).abs() < 1e-12);
    assert!(f(&res["method_delta"]) < 1e-12);
    assert_eq!(r.stdout.lines().count(), 1);
}

#[test]
fn lower_bound_and_check_tight() {
    let dir = TempDir::new().unwrap();
    let j = file(&dir, "r2.csv", NONADDITIVE);
    let lb = cli(&["lower-bound", "--joint", &j]).results();
    assert!((f(&lb["gamma_lb"]) - 0.1775).abs() < 1e-12);
    assert!(f(&lb["gamma_delta"]) < 1e-12);
    assert!((f(&lb["p_y1"]) - 0.6).abs() < 1e-15);

    let r = cli(&["check-tight", "--joint", &j]);
    assert_eq!(r.code, EXIT_OK);
    assert_eq!(r.results()["verdict"], "NotTight");

    let u = file(&dir, "u.csv", UNIFORM);
    let r = cli(&["check-tight", "--joint", &u, "--tol", "1e-9"]);
    assert_eq!(r.results()["verdict"], "Tight");
}

#[test]
fn construct_on_uniform_writes_uniform() {
    let dir = TempDir::new().unwrap();
    let u = file(&dir, "u.csv", UNIFORM);
    let out = path(&dir, "star.csv");
    let r = cli(&["construct", "--joint", &u, "--out", s(&out)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let res = r.results();
    assert_eq!(res["base"], "input");
    assert!(f(&res["marginal_max_error"]) < 1e-12);
    assert!(f(&res["delta"]) < 1e-8);
    let written = fs::read_to_string(&out).unwrap();
    let probs: Vec<f64> = written
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(probs.len(), 8);
    assert!(probs.iter().all(|p| (p - 0.125).abs() < 1e-12));
}

#[test]
fn construct_not_tight_exits_four_with_certificate() {
    let dir = TempDir::new().unwrap();
    let j = file(&dir, "r2.csv", NONADDITIVE);
    let out = path(&dir, "star.csv");
    let r = cli(&["construct", "--joint", &j, "--out", s(&out)]);
    assert_eq!(r.code, EXIT_NOT_TIGHT);
    assert_eq!(r.results()["certificate"]["verdict"], "NotTight");
    assert!(!out.exists());
    assert!(r.stderr.contains("not tight"));
}

#[test]
fn marginals_then_construct_from_class() {
    let dir = TempDir::new().unwrap();
    let u = file(&dir, "u.csv", UNIFORM);
    let m = path(&dir, "m.json");
    let r = cli(&["marginals", "--joint", &u, "--out", s(&m)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let out = path(&dir, "star.csv");
    let r = cli(&["construct", "--marginals", s(&m), "--out", s(&out)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert_eq!(r.results()["base"], "feasibility_lp");
    assert!(f(&r.results()["marginal_max_error"]) < 1e-12);
}

#[test]
fn dataset_input() {
    let dir = TempDir::new().unwrap();
    // empirical distribution of these rows equals the non-additive joint scaled by 10
    let rows = [
        ("0,0,1", 1),
        ("1,0,0", 2),
        ("1,0,1", 2),
        ("0,1,0", 1),
        ("0,1,1", 3),
        ("1,1,0", 1),
    ];
    let mut body = String::from("x1,x2,y\n");
    for (row, n) in rows {
        for _ in 0..n {
            body.push_str(row);
            body.push('\n');
        }
    }
    let d = file(&dir, "d.csv", &body);
    let lb = cli(&["lower-bound", "--data", &d]).results();
    assert!((f(&lb["gamma_lb"]) - 0.1775).abs() < 1e-12);
}

#[test]
fn generic_oracle() {
    let dir = TempDir::new().unwrap();
    let g = file(&dir, "g.csv", "x,y,prob\n0,1,0.25\n1,2,0.25\n2,0,0.5\n");
    let r = cli(&["oracle", "--generic", &g]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let res = r.results();
    assert!((f(&res["rho"]) - 1.0).abs() < 1e-10);
    assert_eq!((res["nx"].as_u64(), res["ny"].as_u64()), (Some(3), Some(3)));
}

#[test]
fn gaussian_command() {
    let dir = TempDir::new().unwrap();
    let m = file(&dir, "m.json", r#"{"mu":[0,0],"lambda":[1,0.5,0.5,1]}"#);
    let r = cli(&["gaussian", "--moments", &m]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!((f(&r.results()["min_hgr"]) - 0.5).abs() < 1e-12);

    let m2 = file(
        &dir,
        "m2.json",
        r#"{"mu":[0,0,0],"lambda":[1,0.5,0.6,0.5,1,0.3,0.6,0.3,1]}"#,
    );
    assert!((f(&cli(&["gaussian", "--moments", &m2]).results()["min_hgr"]) - 0.6).abs() < 1e-12);

    let bad = file(&dir, "bad.json", r#"{"mu":[0,0],"lambda":[1,2,2,1]}"#);
    assert_eq!(cli(&["gaussian", "--moments", &bad]).code, EXIT_DOMAIN);
}

#[test]
fn probe_uniform_command() {
    let r = cli(&[
        "probe-uniform",
        "--p",
        "2",
        "--m",
        "2",
        "--eps",
        "0.01",
        "--trials",
        "10",
    ]);
    assert_eq!(r.code, EXIT_OK);
    let res = r.results();
    assert_eq!(res["trials"], 10);
    assert_eq!(f(&res["fraction"]), 1.0);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(cli(&["oracle"]).code, EXIT_INPUT);
    assert_eq!(cli(&["no-such-command"]).code, EXIT_INPUT);
    assert_eq!(
        cli(&["oracle", "--joint", "/nonexistent.csv"]).code,
        EXIT_INPUT
    );
    let garbage = file(&dir, "g.csv", "x1,y,prob\n0,0,abc\n");
    assert_eq!(cli(&["oracle", "--joint", &garbage]).code, EXIT_INPUT);
    let degenerate = file(&dir, "deg.csv", "x1,y,prob\n0,0,0.5\n1,0,0.5\n");
    let r = cli(&["lower-bound", "--joint", &degenerate]);
    assert_eq!(r.code, EXIT_DOMAIN);
    assert!(r.stdout.is_empty());
    assert!(!r.stderr.is_empty());
    let r = cli(&["check-tight", "--joint", &degenerate, "--tol=-1"]);
    assert_eq!(r.code, EXIT_DOMAIN);
    assert_eq!(
        cli(&["probe-uniform", "--p", "2", "--m", "2", "--eps=-0.1"]).code,
        EXIT_DOMAIN
    );
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let j = file(&dir, "r2.csv", NONADDITIVE);
    for args in [
        vec!["oracle", "--joint", j.as_str()],
        vec!["check-tight", "--joint", j.as_str()],
        vec![
            "probe-uniform",
            "--p",
            "3",
            "--m",
            "2",
            "--eps",
            "0.1",
            "--trials",
            "5",
            "--seed",
            "9",
        ],
    ] {
        assert_eq!(cli(&args).stdout, cli(&args).stdout);
    }
}

#[test]
fn binary_process_exit_code() {
    let dir = TempDir::new().unwrap();
    let j = file(&dir, "r2.csv", NONADDITIVE);
    let out = path(&dir, "star.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_minhgr"))
        .args(["construct", "--joint", &j, "--out", s(&out)])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_NOT_TIGHT));
    let v: Value = serde_json::from_slice(&status.stdout).unwrap();
    assert_eq!(v["results"]["certificate"]["verdict"], "NotTight");
}
