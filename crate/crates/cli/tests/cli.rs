use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn npmle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_npmle"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

#[test]
fn estimate_from_labels() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = npmle(&["estimate", "12231", "--labels", "--seed", "1", "--out", out]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let v = json(&dir.path().join("estimate.json"));
    assert_eq!(v["partition"], "2,2,1");
    assert_eq!(v["seed"], 1);
    let naive = floats(&v["naive"]["mass"]);
    for (a, b) in naive.iter().zip([0.4, 0.4, 0.2]) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((v["good_turing"].as_f64().unwrap() - 0.2).abs() < 1e-12);
}

#[test]
fn estimate_with_saem_splits_blob_and_head() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = npmle(&[
        "estimate",
        "3,1,1,1",
        "--saem",
        "--K",
        "6",
        "--iterations",
        "20000",
        "--seed",
        "3",
        "--out",
        out,
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let v = json(&dir.path().join("estimate.json"));
    let saem = &v["saem"];
    assert_eq!(saem["K"], 6);
    let head = floats(&saem["estimate"]["mass"])[0];
    assert!((head - 0.5).abs() < 0.05, "head {head}");
    assert!(dir.path().join("saem_trace.csv").exists());
}

#[test]
fn unsorted_partition_is_rejected() {
    let run = npmle(&["estimate", "2,3"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(!run.stderr.is_empty());
}

#[test]
fn oracle_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = npmle(&["oracle", "3,1,1,1", "--seed", "1", "--out", out]);
    assert!(run.status.success());
    let v = json(&dir.path().join("oracle.json"));
    assert!((v["estimate"]["deficit"].as_f64().unwrap() - 0.5).abs() <= 0.02);
    assert!((floats(&v["estimate"]["mass"])[0] - 0.5).abs() <= 0.02);

    let run = npmle(&["oracle", "5", "--out", out]);
    assert!(run.status.success());
    let v = json(&dir.path().join("oracle.json"));
    assert!((floats(&v["estimate"]["mass"])[0] - 1.0).abs() < 1e-6);

    let run = npmle(&["oracle", "1,1,1,1,1", "--out", out]);
    assert!(run.status.success());
    let v = json(&dir.path().join("oracle.json"));
    assert_eq!(v["estimate"]["deficit"].as_f64().unwrap(), 1.0);

    let run = npmle(&["oracle", "5,4", "--out", out]);
    assert!(!run.status.success());
}

#[test]
fn simulate_with_zero_reps_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = npmle(&[
        "simulate",
        "--family",
        "uniform:4",
        "--estimator",
        "naive",
        "--n",
        "50",
        "--reps",
        "0",
        "--seed",
        "2",
        "--out",
        out,
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("uniform-4_naive_n50-50_seed2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1, "{csv}");
}

#[test]
fn unknown_names_are_usage_errors() {
    let run = npmle(&[
        "simulate", "--family", "zipfish", "--n", "50", "--reps", "1",
    ]);
    assert_eq!(run.status.code(), Some(2));
    let run = npmle(&[
        "rates",
        "--estimator",
        "magic",
        "--n",
        "50,100",
        "--reps",
        "1",
    ]);
    assert_eq!(run.status.code(), Some(2));
    let run = npmle(&["bound", "--theorem", "7"]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!("seed = 9\nout = {:?}\n", out.to_str().unwrap()),
    )
    .unwrap();
    let run = npmle(&[
        "estimate",
        "3,1",
        "--seed",
        "1",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let v = json(&out.join("estimate.json"));
    assert_eq!(v["seed"], 9);

    std::fs::write(&cfg, "sead = 9\n").unwrap();
    let run = npmle(&["estimate", "3,1", "--config", cfg.to_str().unwrap()]);
    assert!(!run.status.success());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = dir.path().to_str().unwrap();
        let run = npmle(&[
            "rates",
            "--family",
            "geometric:0.5",
            "--estimator",
            "check",
            "--n",
            "50..200",
            "--reps",
            "4",
            "--seed",
            "11",
            "--out",
            out,
        ]);
        assert!(
            run.status.success(),
            "{}",
            String::from_utf8_lossy(&run.stderr)
        );
        let run = npmle(&[
            "estimate",
            "4,2,1,1",
            "--saem",
            "--iterations",
            "500",
            "--seed",
            "5",
            "--out",
            out,
        ]);
        assert!(run.status.success());
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 4, "{names:?}");
    for name in names {
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert_eq!(x, y, "{name:?} differs");
    }
}
