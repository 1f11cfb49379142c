use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn migan(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_migan"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn generate_impute_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("spec.json"), r#"{"n": 60, "p": 11, "predictors": [8, 9, 10], "seed": 4}"#).unwrap();

    let out = migan(&["generate", "--spec", "spec.json", "--out", "sim"], root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = csv_rows(&root.join("sim/data.csv"));
    let truth = csv_rows(&root.join("sim/truth.csv"));
    assert_eq!(data.len(), 60);
    assert_eq!(truth[0].len(), 11);
    assert!(data.iter().any(|r| r.iter().any(|c| c == "NA")));
    assert!(truth.iter().all(|r| r.iter().all(|c| c.parse::<f64>().is_ok())));

    let out = migan(&["impute", "--method", "colmean", "--data", "sim/data.csv", "--out", "imp"], root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let imputed = csv_rows(&root.join("imp/imp_1.csv"));
    for (row, original) in imputed.iter().zip(&data) {
        for (cell, raw) in row.iter().zip(original.iter()) {
            if raw != "NA" {
                assert_eq!(cell.parse::<f64>().unwrap(), raw.parse::<f64>().unwrap());
            }
        }
    }
    assert!(root.join("imp/provenance.json").exists());

    let out = migan(
        &[
            "evaluate", "--imputations", "imp", "--truth", "sim/truth.csv", "--data", "sim/data.csv", "--beta", "1,1,1",
            "--predictors", "8,9,10",
        ],
        root,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = csv_rows(&root.join("imp/metrics.csv"));
    assert_eq!(metrics.len(), 1);
    assert!(metrics[0].iter().take(6).all(|c| c == "NA" || c.parse::<f64>().is_ok()));
}

#[test]
fn exit_codes_distinguish_config_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("bad.json"), r#"{"n": 60, "p": 11, "unknown_field": 1}"#).unwrap();
    assert_eq!(migan(&["generate", "--spec", "bad.json", "--out", "o"], root).status.code(), Some(2));

    fs::write(root.join("data.csv"), "a,b\n1,\n,2\n").unwrap();
    let out = migan(&["impute", "--method", "colmean", "--data", "data.csv", "--out", "o"], root);
    assert!(out.status.success());

    fs::write(root.join("empty.csv"), "a,b\n1,\n2,\n").unwrap();
    let out = migan(&["impute", "--method", "colmean", "--data", "empty.csv", "--out", "o"], root);
    assert_eq!(out.status.code(), Some(3));

    let out = migan(&["impute", "--method", "colmean", "--data", "missing.csv", "--out", "o"], root);
    assert_eq!(out.status.code(), Some(3));
}
