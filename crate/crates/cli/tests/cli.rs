use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn cardiowatch(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cardiowatch"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = cardiowatch(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A model trained on one synthetic record per morphology, shared by the
/// tests; its feature CSV sits next to it.
fn model() -> &'static PathBuf {
    static MODEL: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    &MODEL
        .get_or_init(|| {
            let dir = tempfile::tempdir().unwrap();
            let d = dir.path();
            for (i, m) in ["normal", "pvc", "pac", "mi"].iter().enumerate() {
                let seed = (i + 1).to_string();
                ok(
                    d,
                    &[
                        "synth",
                        "--morphology",
                        m,
                        "--beats",
                        "120",
                        "--name",
                        m,
                        "--out-dir",
                        "train",
                        "--seed",
                        &seed,
                    ],
                );
            }
            ok(
                d,
                &["features", "--dir", "train", "--lead", "III", "--out", "features.csv"],
            );
            ok(d, &["train", "--features", "features.csv", "--out", "model.json"]);
            let path = d.join("model.json");
            (dir, path)
        })
        .1
}

#[test]
fn synth_is_deterministic_per_seed() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    for out in ["a", "b", "c"] {
        let seed = if out == "c" { "8" } else { "7" };
        ok(
            p,
            &[
                "synth",
                "--morphology",
                "pac",
                "--noise-sigma",
                "0.03",
                "--out-dir",
                out,
                "--seed",
                seed,
            ],
        );
    }
    for f in [
        "synth.hea",
        "synth.dat",
        "synth.atr",
        "synth_fiducials.csv",
        "synth_annotations.csv",
    ] {
        assert_eq!(
            fs::read(p.join("a").join(f)).unwrap(),
            fs::read(p.join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        fs::read(p.join("a/synth.dat")).unwrap(),
        fs::read(p.join("c/synth.dat")).unwrap()
    );
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert_eq!(cardiowatch(p, &["bogus"]).status.code(), Some(1));
    assert_eq!(cardiowatch(p, &[]).status.code(), Some(1));
    assert_eq!(cardiowatch(p, &["synth", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(
        cardiowatch(p, &["synth", "--morphology", "afib"]).status.code(),
        Some(1)
    );
    assert_eq!(
        cardiowatch(p, &["run", "--record", "x", "--model", "m.json", "--r", "0"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(cardiowatch(p, &["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let missing = cardiowatch(p, &["delineate", "--record", "nowhere"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nowhere"));
    fs::write(p.join("bad.csv"), "record,lead\nx\n").unwrap();
    assert_eq!(
        cardiowatch(p, &["train", "--features", "bad.csv"]).status.code(),
        Some(2)
    );
    fs::write(p.join("model.json"), "{}").unwrap();
    ok(p, &["synth", "--out-dir", "."]);
    assert_eq!(
        cardiowatch(p, &["run", "--record", "synth", "--model", "model.json"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        cardiowatch(p, &["delineate", "--record", "synth", "--lead", "V9"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn command_line_overrides_config() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    fs::write(
        p.join("cw.conf"),
        "seed = 5 # applies everywhere\nwin = 10 # run only, ignored here\n\n[synth]\nbeats = 12\nnoise_sigma = 0.02\n",
    )
    .unwrap();
    let rows = |dir: &str| {
        fs::read_to_string(p.join(dir).join("synth_fiducials.csv"))
            .unwrap()
            .lines()
            .count()
            - 1
    };
    ok(p, &["--config", "cw.conf", "synth", "--out-dir", "from_config"]);
    assert_eq!(rows("from_config"), 12);
    ok(
        p,
        &[
            "synth",
            "--config",
            "cw.conf",
            "--beats",
            "14",
            "--out-dir",
            "overridden",
        ],
    );
    assert_eq!(rows("overridden"), 14);
    ok(
        p,
        &[
            "synth",
            "--beats",
            "12",
            "--noise-sigma",
            "0.02",
            "--seed",
            "5",
            "--out-dir",
            "explicit",
        ],
    );
    assert_eq!(
        fs::read(p.join("from_config/synth.dat")).unwrap(),
        fs::read(p.join("explicit/synth.dat")).unwrap()
    );
    fs::write(p.join("bad.conf"), "[synth]\nbeets = 3\n").unwrap();
    assert_eq!(
        cardiowatch(p, &["synth", "--config", "bad.conf"]).status.code(),
        Some(1)
    );
}

#[test]
fn normal_records_raise_no_alarm() {
    let model = model().to_str().unwrap();
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    for seed in 100..150 {
        let s = seed.to_string();
        ok(
            p,
            &[
                "synth",
                "--beats",
                "40",
                "--noise-sigma",
                "0.02",
                "--out-dir",
                ".",
                "--seed",
                &s,
            ],
        );
        let out = ok(p, &["run", "--record", "synth", "--model", model]);
        assert!(
            out.stdout.is_empty(),
            "seed {seed}: {}",
            String::from_utf8_lossy(&out.stdout)
        );
    }
}

#[test]
fn mi_record_raises_mi_alarms_and_writes_outputs() {
    let model = model().to_str().unwrap();
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(
        p,
        &[
            "synth",
            "--morphology",
            "mi",
            "--beats",
            "40",
            "--out-dir",
            ".",
            "--seed",
            "9",
        ],
    );
    let reference = Path::new(model).with_file_name("features.csv");
    let reference = reference.to_str().unwrap();
    let cold = cardiowatch(p, &["run", "--record", "synth", "--model", model]);
    assert_eq!(cold.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&cold.stderr).contains("--reference"));
    ok(
        p,
        &[
            "run",
            "--record",
            "synth.hea",
            "--model",
            model,
            "--reference",
            reference,
            "--policy",
            "windowed",
            "--out-dir",
            "out",
        ],
    );
    let alarms = fs::read_to_string(p.join("out/alarms.jsonl")).unwrap();
    assert_eq!(alarms.lines().count(), 2, "{alarms}");
    for line in alarms.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["class"], "MI");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["beats"], 40);
    assert_eq!(
        fs::read_to_string(p.join("out/verdicts.csv")).unwrap().lines().count(),
        41
    );
    assert!(p.join("out/model.json").exists());
}

#[test]
fn classify_reports_every_beat() {
    let model = model().to_str().unwrap();
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(
        p,
        &[
            "synth",
            "--morphology",
            "pvc",
            "--beats",
            "20",
            "--out-dir",
            ".",
            "--seed",
            "4",
        ],
    );
    ok(p, &["features", "--record", "synth", "--lead", "III", "--out", "f.csv"]);
    let out = ok(p, &["classify", "--model", model, "--features", "f.csv"]);
    let mut r = csv::Reader::from_reader(out.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 20);
    let agree = rows.iter().filter(|row| row[7] == row[8]).count();
    assert!(agree >= 19, "{agree}/20 predictions match the annotations");
    for row in &rows {
        let total: f64 = (3..7).map(|i| row[i].parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn evaluate_writes_metrics_and_roc() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(
        p,
        &[
            "evaluate",
            "--synthetic",
            "30",
            "--out",
            "metrics.csv",
            "--roc-dir",
            "roc",
        ],
    );
    let metrics = fs::read_to_string(p.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("Lead,Acc,Err,Class,Se,Far,Prec,Variant"));
    assert_eq!(metrics.lines().count(), 1 + 8);
    for class in ["PVC", "PAC", "MI"] {
        assert!(p.join(format!("roc/roc_III_{class}.csv")).exists());
    }
}
