use std::path::Path;
use std::process::{Command, Output};

use npl::inference::chisq_sf;
use npl::io::{read_dataset_path, CsvOptions, ResponseColumn};
use npl::model::ols;
use npl::optimizer::penalized_objective;
use npl::{GaussianModel, PenaltyKind, PenaltySpec};
use serde_json::Value;

fn npl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_npl"))
        .args(args)
        .env_remove("NPL_SEED")
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = npl(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

/// Writes replicate 0 of a small AR study and returns its path.
fn dataset(dir: &Path, n: &str) -> String {
    let path = dir.join("ar.csv");
    let p = path.to_str().unwrap().to_string();
    let out = npl(&["simulate", "--n", n, "--replicates", "2", "--serial", "--dump-dataset", &p]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    p
}

fn load(path: &str) -> GaussianModel {
    let options = CsvOptions {
        has_header: false,
        response: ResponseColumn::Index(0),
    };
    GaussianModel::new(read_dataset_path(Path::new(path), &options).unwrap())
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "--n", "100", "--replicates", "6", "--seed", "9"];
    let a = npl(&args);
    let b = npl(&args);
    let c = npl(&[&args[..], &["--serial"]].concat());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn seed_comes_from_environment() {
    let base = ["simulate", "--n", "100", "--replicates", "3"];
    let env = Command::new(env!("CARGO_BIN_EXE_npl"))
        .args(base)
        .env("NPL_SEED", "5")
        .output()
        .unwrap();
    let flag = npl(&[&base[..], &["--seed", "5"]].concat());
    assert_eq!(env.stdout, flag.stdout);
    let v: Value = serde_json::from_slice(&env.stdout).unwrap();
    assert_eq!(v["seed"], 5);
}

#[test]
fn zero_lambda_reproduces_least_squares() {
    let dir = tempfile::tempdir().unwrap();
    let path = dataset(dir.path(), "200");
    let v = ok_json(&["fit", "-i", &path, "--no-header", "--lambda", "0"]);
    let beta = floats(&v["beta"]);
    let expect = ols(load(&path).dataset()).unwrap().beta;
    assert_eq!(beta.len(), expect.len());
    for (b, e) in beta.iter().zip(&expect) {
        assert!((b - e).abs() < 1e-8 * e.abs().max(1.0), "{b} vs {e}");
    }
}

#[test]
fn objective_survives_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dataset(dir.path(), "200");
    let v = ok_json(&["fit", "-i", &path, "--no-header"]);
    let lambda = v["penalty"]["lambda"].as_f64().unwrap();
    let a = v["penalty"]["a"].as_f64().unwrap();
    let spec = PenaltySpec::new(PenaltyKind::Scad { a }, lambda).unwrap();
    let beta = floats(&v["beta"]);
    let model = load(&path);
    let q = penalized_objective(&model, &spec, &vec![lambda; beta.len()], &beta).unwrap();
    let reported = v["objective"].as_f64().unwrap();
    // Both β and Q are printed to nine significant digits.
    assert!((q - reported).abs() <= 1e-6 * reported.abs().max(1.0), "{q} vs {reported}");
}

#[test]
fn lr_test_reports_chi_square_tail() {
    let dir = tempfile::tempdir().unwrap();
    let path = dataset(dir.path(), "400");
    let v = ok_json(&["test", "-i", &path, "--no-header", "--zero", "beta6,beta7"]);
    assert_eq!(v["df"], 2);
    assert_eq!(v["tested"], serde_json::json!(["beta6", "beta7"]));
    let t = v["statistic"].as_f64().unwrap();
    let p = v["p_value"].as_f64().unwrap();
    assert!(t >= 0.0);
    assert!((p - chisq_sf(t, 2)).abs() < 1e-8);

    let by_index = ok_json(&["test", "-i", &path, "--no-header", "--zero", "6,7"]);
    assert_eq!(by_index["statistic"], v["statistic"]);
}

#[test]
fn gcv_csv_profile() {
    let dir = tempfile::tempdir().unwrap();
    let path = dataset(dir.path(), "200");
    let out = npl(&["gcv", "-i", &path, "--no-header", "--format", "csv", "--grid-points", "10"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(String::from_utf8_lossy(&out.stderr).contains("selected lambda"));
}

#[test]
fn diag_reports_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dataset(dir.path(), "200");
    let v = ok_json(&["diag", "-i", &path, "--no-header", "--lambda", "0.1"]);
    assert!(v["diagnostics"]["singular_at_origin"].as_bool().unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let usage = npl(&["fit"]);
    assert_eq!(usage.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&usage.stderr).starts_with("error[E_USAGE]"));

    let missing = npl(&["fit", "-i", "/definitely/not/here.csv"]);
    assert_eq!(missing.status.code(), Some(1));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "y,x\n1,2\n3,oops\n").unwrap();
    let parse = npl(&["fit", "-i", bad.to_str().unwrap(), "--lambda", "0.1"]);
    assert_eq!(parse.status.code(), Some(1));
    let err = String::from_utf8_lossy(&parse.stderr);
    assert!(err.starts_with("error["), "{err}");

    // X'X overflows, so the first ridge solve is singular.
    let overflow = dir.path().join("overflow.csv");
    std::fs::write(&overflow, "y,a\n1,1e308\n2,1e308\n3,-1e308\n").unwrap();
    let numeric = npl(&["fit", "-i", overflow.to_str().unwrap(), "--lambda", "0"]);
    assert_eq!(numeric.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&numeric.stderr).starts_with("error[E_SINGULAR]"));
}
