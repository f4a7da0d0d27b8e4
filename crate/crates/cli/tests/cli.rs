use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_colindep"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

/// A 300 x 12 block-correlated matrix written by the `simulate` command.
fn matrix(dir: &TempDir) -> PathBuf {
    let x = dir.path().join("x.csv");
    let draws = dir.path().join("draws.csv");
    let o = run(&[
        "simulate", "--model", "blocks", "--m", "300", "--n", "12", "--gamma", "1.0", "--reps", "1", "--seed", "5",
        "--out", draws.to_str().unwrap(), "--matrix-out", x.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    x
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["permtest"])), 1);
    assert_eq!(code(&run(&["permtest", "x.csv", "--stat", "bogus"])), 1);
}

#[test]
fn parse_error_exits_one_and_names_the_cell() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("bad.csv");
    fs::write(&f, "a,b,c\n1,2,3\n4,NA,6\n7,8,9\n").unwrap();
    let o = run(&["permtest", p(&f)]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("column 2"), "{err}");
}

#[test]
fn numerical_failure_exits_two() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("const.csv");
    // additive in rows and columns, so demeaning leaves all zeros
    fs::write(&f, "1,5,2\n2,6,3\n3,7,4\n4,8,5\n").unwrap();
    let o = run(&["standardize", p(&f)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn standardize_writes_a_doubly_standardized_matrix() {
    let dir = TempDir::new().unwrap();
    let x = matrix(&dir);
    let out = dir.path().join("std.csv");
    let log = dir.path().join("log.json");
    let o = run(&["standardize", p(&x), "--out", p(&out), "--log-out", p(&log)]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<f64>> =
        text.lines().map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 300);
    for row in &rows {
        let mean: f64 = row.iter().sum::<f64>() / 12.0;
        let ss: f64 = row.iter().map(|v| v * v).sum();
        assert!(mean.abs() < 1e-7 && (ss - 12.0).abs() < 1e-6);
    }
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(log).unwrap()).unwrap();
    assert!(log["iterations"].as_u64().unwrap() >= 1);
}

#[test]
fn permtest_reports_and_writes_null() {
    let dir = TempDir::new().unwrap();
    let x = matrix(&dir);
    let null = dir.path().join("null.csv");
    for stat in ["block", "trend", "trace"] {
        let o = run(&["permtest", p(&x), "--stat", stat, "--L", "300", "--null-out", p(&null)]);
        assert_eq!(code(&o), 0);
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["method"], format!("perm_{stat}"));
        assert_eq!(v["L"], 300);
        let pv = v["p_value"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&pv));
        assert_eq!(fs::read_to_string(&null).unwrap().lines().count(), 301);
    }
    let o = run(&["permtest", p(&x), "--L", "300", "--conservative", "--format", "text"]);
    let line = stdout(&o);
    let fields: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(fields.len(), 3);
    assert_eq!(fields[0], "perm_block");
}

#[test]
fn eigenratio_against_both_nulls() {
    let dir = TempDir::new().unwrap();
    let x = matrix(&dir);
    let o = run(&["eigenratio-test", p(&x), "--null", "wishart", "--reps", "40"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["method"], "eigenratio_wishart");
    let o = run(&["eigenratio-test", p(&x), "--null", "blocks", "--reps", "20", "--gamma", "1.0", "--null-m", "200"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["method"], "eigenratio_correlated_rows");
    assert_eq!(v["L"], 20);
}

#[test]
fn bilinear_needs_groups() {
    let dir = TempDir::new().unwrap();
    let x = matrix(&dir);
    assert_eq!(code(&run(&["bilinear", p(&x)])), 1);
    assert_eq!(code(&run(&["bilinear", p(&x), "--groups", "5,5"])), 1);
    let o = run(&["bilinear", p(&x), "--groups", "7,5", "--mtilde", "40"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["cv"].as_f64().unwrap() - 80f64.powf(-0.5)).abs() < 1e-12);
    assert!((v["w_norm_sq"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let labels = dir.path().join("groups.txt");
    fs::write(&labels, "a\nb\na\nb\na\nb\na\nb\na\nb\na\nb\n").unwrap();
    let o = run(&["bilinear", p(&x), "--groups-file", p(&labels)]);
    assert_eq!(code(&o), 0);
}

#[test]
fn fdr_scan_lists_every_pair_and_writes_bins() {
    let dir = TempDir::new().unwrap();
    let x = matrix(&dir);
    let bins = dir.path().join("bins.csv");
    let o = run(&["fdr-scan", p(&x), "--q", "0.1", "--null", "corr", "--mtilde", "auto", "--hist-out", p(&bins)]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let pairs = v["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 66);
    for key in ["j", "k", "r", "p", "significant"] {
        assert!(pairs[0].get(key).is_some(), "missing {key}");
    }
    assert!(v.get("threshold_r").is_some());
    let hist = fs::read_to_string(&bins).unwrap();
    assert_eq!(hist.lines().next().unwrap(), "lo,hi,count,null_count");
    assert_eq!(hist.lines().count(), 41);

    let gauss = run(&["fdr-scan", p(&x), "--null", "gauss"]);
    let g: serde_json::Value = serde_json::from_str(&stdout(&gauss)).unwrap();
    let rs = |v: &serde_json::Value| v["pairs"].as_array().unwrap().iter().map(|p| p["r"].as_f64().unwrap()).collect::<Vec<_>>();
    assert_eq!(rs(&v), rs(&g));
    assert_eq!(g["null_model"]["kind"], "gaussian");
}

#[test]
fn simulate_models() {
    let dir = TempDir::new().unwrap();
    for (model, header) in [
        ("wishart", "replicate,eigenratio,mean_diagonal,offdiag_var"),
        ("spiked", "replicate,eigenratio,c2,alpha_hat,m_tilde"),
        ("blocks", "replicate,eigenratio,c2,alpha_hat,m_tilde"),
    ] {
        let out = dir.path().join(format!("{model}.csv"));
        let o = run(&[
            "simulate", "--model", model, "--m", "60", "--n", "6", "--lambda", "2", "--gamma", "1", "--reps", "7",
            "--seed", "2", "--out", p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let text = fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().next().unwrap(), header);
        assert_eq!(text.lines().count(), 8);
    }
    assert_eq!(code(&run(&["simulate", "--model", "wishart", "--reps", "0"])), 1);
}

#[test]
fn audit_is_byte_identical_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let x = matrix(&dir);
    let before = fs::read(&x).unwrap();
    let args = |out: &Path| {
        vec![
            "audit".to_string(), p(&x).into(), "--seed".into(), "11".into(), "--L".into(), "300".into(), "--reps".into(),
            "30".into(), "--null-m-cap".into(), "200".into(), "--groups".into(), "6,6".into(), "--omit-timings".into(),
            "--out".into(), p(out).into(),
        ]
    };
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let c = dir.path().join("c.json");
    assert_eq!(code(&bin().args(args(&a)).output().unwrap()), 0);
    assert_eq!(code(&bin().args(args(&b)).output().unwrap()), 0);
    let o = bin().args(args(&c)).env("COLINDEP_THREADS", "1").output().unwrap();
    assert_eq!(code(&o), 0);
    let (a, b, c) = (fs::read(a).unwrap(), fs::read(b).unwrap(), fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(fs::read(&x).unwrap(), before);

    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["tests"].as_array().unwrap().len(), 5);
    assert!(v.get("timings").is_none());
    assert!(v["bilinear"].is_object());
}

#[test]
fn audit_text_and_config_errors() {
    let dir = TempDir::new().unwrap();
    let x = matrix(&dir);
    assert_eq!(code(&run(&["audit", p(&x), "--bilinear"])), 1);
    let o = run(&["audit", p(&x), "--format", "text", "--L", "200", "--reps", "20", "--null-m-cap", "200"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for name in ["perm_block", "perm_trend", "perm_trace", "eigenratio_wishart", "eigenratio_correlated_rows"] {
        let line = text.lines().find(|l| l.starts_with(name)).unwrap();
        assert_eq!(line.split_whitespace().count(), 3, "{line}");
    }
    let o = bin().args(["audit", p(&x)]).env("COLINDEP_THREADS", "zero").output().unwrap();
    assert_eq!(code(&o), 1);
}
