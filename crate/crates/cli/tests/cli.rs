use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gmrf::model::load_model;
use gmrf::oracle::dense_posterior;

fn gmrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmrf")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let o = gmrf(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn build_ar1(dir: &Path) -> String {
    let m = dir.join("model");
    let ms = m.to_str().unwrap().to_string();
    ok(&["build", "--set", &format!("model.dir={ms}")]);
    ms
}

fn column(csv: &str, col: usize) -> Vec<f64> {
    csv.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

#[test]
fn build_ar1_and_spacetime() {
    let t = tempfile::tempdir().unwrap();
    let m = build_ar1(t.path());
    let q = fs::read_to_string(Path::new(&m).join("Q_u.mtx")).unwrap();
    assert_eq!(q.lines().nth(1).unwrap().split_whitespace().take(2).collect::<Vec<_>>(), ["99", "99"]);
    let st = t.path().join("st");
    ok(&[
        "build",
        "--set",
        "model.kind=spacetime",
        "--set",
        "model.nx=2",
        "--set",
        "model.ny=2",
        "--set",
        "model.n_t=2",
        "--out",
        st.to_str().unwrap(),
    ]);
    let model = load_model(&st).unwrap();
    assert_eq!(model.q_u.n_rows(), 8);
    assert_eq!(model.layout.unwrap().n_s, 4);
    // idempotent
    let before = fs::read_to_string(Path::new(&m).join("y.csv")).unwrap();
    build_ar1(t.path());
    assert_eq!(fs::read_to_string(Path::new(&m).join("y.csv")).unwrap(), before);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(gmrf(&["build", "--set", "model.kind=sphere"]).status.code(), Some(2));
    assert_eq!(gmrf(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(gmrf(&["infer", "--set", "model.dir=/nonexistent/model"]).status.code(), Some(2));
    assert_eq!(gmrf(&["infer"]).status.code(), Some(2));
    assert_eq!(gmrf(&["--help"]).status.code(), Some(0));
}

#[test]
fn infer_matches_golden_file() {
    let t = tempfile::tempdir().unwrap();
    let m = build_ar1(t.path());
    let out = t.path().join("infer");
    ok(&[
        "infer",
        "--set",
        &format!("model.dir={m}"),
        "--set",
        "partition.J=2",
        "--set",
        "partition.l=10",
        "--set",
        "estimator.K=10",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    let got = fs::read_to_string(out.join("posterior.csv")).unwrap();
    let golden = include_str!("golden/ar1_j2_l10_k10_seed1.csv");
    assert_eq!(got, golden);

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    for phase in ["factorization", "sampling", "correction"] {
        assert!(report["timings"][phase].as_f64().unwrap() >= 0.0);
    }
    // the golden file also agrees with the dense posterior to MC accuracy
    let oracle = dense_posterior(&load_model(Path::new(&m)).unwrap()).unwrap();
    for (i, sd) in column(golden, 2).iter().enumerate() {
        assert!((sd * sd - oracle.exact_diag[i]).abs() <= 1e-3 * oracle.exact_diag[i]);
    }
}

#[test]
fn single_partition_is_exact() {
    let t = tempfile::tempdir().unwrap();
    let m = build_ar1(t.path());
    let out = t.path().join("exact");
    ok(&["infer", "--set", &format!("model.dir={m}"), "--set", "partition.J=1", "--out", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("posterior.csv")).unwrap();
    let oracle = dense_posterior(&load_model(Path::new(&m)).unwrap()).unwrap();
    for (i, (mu, sd)) in column(&csv, 1).iter().zip(column(&csv, 2)).enumerate() {
        let truth = oracle.exact_diag[i].sqrt();
        assert!((sd - truth).abs() <= 1e-9 * truth);
        assert!((mu - oracle.exact_mu[i]).abs() <= 1e-8 * oracle.exact_mu[i].abs().max(1.0));
    }
}

#[test]
fn compare_is_deterministic_and_exact_when_saturated() {
    let t = tempfile::tempdir().unwrap();
    let m = build_ar1(t.path());
    let run = |name: &str, extra: &[&str]| {
        let out = t.path().join(name);
        let mut args = vec!["compare", "--set", "estimator.K=20"];
        let md = format!("model.dir={m}");
        args.extend(["--set", &md, "--out", out.to_str().unwrap()]);
        args.extend(extra);
        ok(&args);
        (
            fs::read_to_string(out.join("errors.csv")).unwrap(),
            serde_json::from_str::<serde_json::Value>(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap(),
        )
    };
    let (a, _) = run("a", &["--seed", "3"]);
    let (b, _) = run("b", &["--seed", "3"]);
    assert_eq!(a, b);
    assert!(a.starts_with("node_id,estimate,truth,relative_error,distance,relative_rmse\n"));
    let (c, s) = run("c", &["--set", "partition.l=100"]);
    assert!(column(&c, 3).iter().all(|&e| e <= 1e-9));
    assert!(s["max_relative_error"].as_f64().unwrap() <= 1e-9);
    let (_, s) = run("d", &["--set", "replications=5"]);
    assert_eq!(s["replications"], 5);
    assert!(!s["buckets"].as_array().unwrap().is_empty());
    let decay = s["correlation_decay"].as_array().unwrap();
    assert!((decay[0]["max_abs_correlation"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn oracle_limit_is_enforced() {
    let t = tempfile::tempdir().unwrap();
    let m = build_ar1(t.path());
    let o = Command::new(env!("CARGO_BIN_EXE_gmrf"))
        .args(["compare", "--set", &format!("model.dir={m}"), "--out", t.path().join("x").to_str().unwrap()])
        .env("GMRF_ORACLE_LIMIT", "50")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("oracle size limit"));
}

#[test]
fn sample_writes_k_columns() {
    let t = tempfile::tempdir().unwrap();
    let m = build_ar1(t.path());
    let out = t.path().join("s");
    ok(&["sample", "--set", &format!("model.dir={m}"), "--set", "estimator.K=4", "--out", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("samples.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "s0,s1,s2,s3");
    assert_eq!(csv.lines().count(), 100);
}

#[test]
fn bench_results_identical_across_workers() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("bench");
    ok(&["bench", "--set", "bench.workers=1,2,4,8", "--set", "estimator.K=5", "--out", out.to_str().unwrap()]);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("bench.json")).unwrap()).unwrap();
    assert_eq!(r["identical"], true);
    assert_eq!(r["runs"].as_array().unwrap().len(), 4);
}
