use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_hybrid-choice");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn binary")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Synthetic labeled estimation set plus an unlabeled problem file.
fn workspace(rows: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "sample",
            "--count",
            rows,
            "--synthetic-labels",
            "--seed",
            "3",
            "--out",
            "est.csv",
        ],
    );
    ok(
        dir.path(),
        &["sample", "--count", "60", "--seed", "4", "--out", "new.csv"],
    );
    dir
}

#[test]
fn fit_scaler_writes_five_files_reproducibly() {
    let dir = workspace("30");
    let p = dir.path();
    ok(
        p,
        &["fit-scaler", "--data", "est.csv", "--bundle", "a", "--samples", "2000"],
    );
    ok(
        p,
        &["fit-scaler", "--data", "est.csv", "--bundle", "b", "--samples", "2000"],
    );
    for i in 1..=5 {
        let name = format!("scaler{i}.txt");
        let a = std::fs::read(p.join("a").join(&name)).unwrap();
        let b = std::fs::read(p.join("b").join(&name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
    assert_eq!(std::fs::read_dir(p.join("a")).unwrap().count(), 5);
}

#[test]
fn small_sample_count_is_rejected() {
    let dir = workspace("30");
    let out = run(dir.path(), &["fit-scaler", "--data", "est.csv", "--samples", "500"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("samples"));
}

#[test]
fn train_predict_evaluate_round_trip() {
    let dir = workspace("40");
    let p = dir.path();
    let est_before = std::fs::read(p.join("est.csv")).unwrap();
    std::fs::write(p.join("checks.toml"), include_str!("../data/anomaly_checks.toml")).unwrap();
    ok(
        p,
        &[
            "train",
            "--data",
            "est.csv",
            "--bundle",
            "bun",
            "--samples",
            "2000",
            "--folds",
            "4",
        ],
    );
    for f in [
        "block1.svr",
        "block5.svr",
        "scaler3.txt",
        "bundle.toml",
        "cv_report.csv",
    ] {
        assert!(p.join("bun").join(f).is_file(), "missing {f}");
    }
    let cv = std::fs::read_to_string(p.join("bun/cv_report.csv")).unwrap();
    assert_eq!(cv.lines().count(), 10);

    ok(
        p,
        &["predict", "--data", "new.csv", "--bundle", "bun", "--out", "pred.csv"],
    );
    let mut rdr = csv::Reader::from_path(p.join("pred.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let b_cols: Vec<usize> = ["B1", "B2", "B3", "B4", "B5"]
        .iter()
        .map(|c| headers.iter().position(|h| h == *c).unwrap())
        .collect();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 60);
    for r in &rows {
        for &c in &b_cols {
            let v: f64 = r[c].parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
            assert_eq!(r[c].split('.').nth(1).map(str::len), Some(6));
        }
    }

    // squared deviations appended for labeled input agree with evaluate
    ok(
        p,
        &["predict", "--data", "est.csv", "--bundle", "bun", "--out", "self.csv"],
    );
    let mut rdr = csv::Reader::from_path(p.join("self.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let sq: Vec<usize> = (1..=5)
        .map(|i| headers.iter().position(|h| h == format!("SqDev{i}")).unwrap())
        .collect();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let block1: f64 = rows.iter().map(|r| r[sq[0]].parse::<f64>().unwrap()).sum::<f64>() * 100.0 / rows.len() as f64;
    let report = ok(
        p,
        &[
            "evaluate",
            "--data",
            "est.csv",
            "--bundle",
            "bun",
            "--checks",
            "checks.toml",
            "--out",
            "eval.csv",
        ],
    );
    let reported: f64 = report
        .lines()
        .find(|l| l.starts_with("block 1 MSD"))
        .and_then(|l| l.split_whitespace().last())
        .unwrap()
        .parse()
        .unwrap();
    assert!((block1 - reported).abs() < 1e-3, "{block1} vs {reported}");
    assert!(report.contains("overall MSD"));
    assert!(report.contains("checks passed"));

    assert_eq!(std::fs::read(p.join("est.csv")).unwrap(), est_before);
}

#[test]
fn missing_label_column_is_named() {
    let dir = workspace("20");
    let p = dir.path();
    let text = std::fs::read_to_string(p.join("est.csv")).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            cells.remove(13);
            cells.join(",") + "\n"
        })
        .collect();
    std::fs::write(p.join("no_b3.csv"), stripped).unwrap();
    let out = run(p, &["train", "--data", "no_b3.csv", "--samples", "1000"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("B3"), "{}", stderr(&out));
}

#[test]
fn bad_lot_shape_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("bad.csv"),
        "Ha,pHa,La,Hb,pHb,Lb,LotNum,LotShape,Corr,Amb,B1,B2,B3,B4,B5\n\
         3,1,3,4,0.8,0,1,-,0,0,0.4,0.4,0.4,0.4,0.4\n\
         3,1,3,4,0.8,0,2,Sideways,0,0,0.4,0.4,0.4,0.4,0.4\n",
    )
    .unwrap();
    let out = run(p, &["train", "--data", "bad.csv", "--samples", "1000"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("line 3") && err.contains("LotShape"), "{err}");
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "sede = 4\n").unwrap();
    let out = run(dir.path(), &["sample", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("run.toml"));
}
