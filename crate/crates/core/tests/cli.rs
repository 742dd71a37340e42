//! End-to-end runs of the `innpar` binary on a small model.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: [&str; 8] = [
    "--model.num_blocks",
    "2",
    "--model.mscm_filters",
    "[4,8,16]",
    "--model.signal_length",
    "32",
    "--data.sample_rate_hz",
    "32",
];

fn innpar(args: &[&str], precision: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_innpar"));
    cmd.args(args).env_remove("INNPAR_PRECISION");
    if let Some(p) = precision {
        cmd.env("INNPAR_PRECISION", p);
    }
    cmd.output().expect("run innpar")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_tiny(out: &Path, precision: Option<&str>, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--synth", "24", "--seed", "5", "--epochs", "2", "--batch-size", "8", "--out", s(out)];
    args.extend(TINY);
    args.extend(extra);
    innpar(&args, precision)
}

#[test]
fn train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = train_tiny(&run, None, &["--train.lr=1e-3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["checkpoint.bin", "runlog.jsonl", "config.json", "val.bin"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let cfg: Value = serde_json::from_str(&std::fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["model"]["num_blocks"], 2);
    assert_eq!(cfg["train"]["lr"], 1e-3);
    assert_eq!(cfg["train"]["epochs"], 2);
    let log = std::fs::read_to_string(run.join("runlog.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);

    let data = dir.path().join("test.bin");
    let o = innpar(&["synth", "--n", "6", "--seed", "9", "--length", "32", "--rate", "32", "--out", s(&data)], None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = dir.path().join("report.json");
    let o = innpar(
        &["eval", "--checkpoint", s(&run.join("checkpoint.bin")), "--data", s(&data), "--report", s(&report)],
        None,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["n_segments"], 6);
    assert!(r["waveform"]["mae"].as_f64().unwrap() > 0.0);
    assert!(r["sbp_mae"].as_f64().unwrap().is_finite());
    assert_eq!(r["per_segment"].as_array().unwrap().len(), 6);
    assert_eq!(r["config"]["model"]["signal_length"], 32);
}

#[test]
fn training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&train_tiny(&a, None, &[])), 0);
    assert_eq!(code(&train_tiny(&b, None, &[])), 0);
    let read = |p: &Path| std::fs::read(p.join("checkpoint.bin")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn audits_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(code(&train_tiny(&run, None, &[])), 0);
    let ckpt = run.join("checkpoint.bin");
    let o = innpar(&["audit", "--mode", "roundtrip", "--checkpoint", s(&ckpt)], None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = innpar(&["audit", "--mode", "roundtrip", "--checkpoint", s(&ckpt), "--tolerance", "1e-30"], None);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("audit failed"));
    let o = innpar(&["audit", "--mode", "gradcheck", "--checkpoint", s(&ckpt)], None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = innpar(&["audit", "--mode", "flops"], None);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("372316"));
}

#[test]
fn reconstruct_forward_then_inverse() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(code(&train_tiny(&run, Some("f64"), &[])), 0);
    let ckpt = run.join("checkpoint.bin");

    let ppg_csv = dir.path().join("ppg.csv");
    let rows: Vec<Vec<f64>> = (0..3)
        .map(|r| (0..32).map(|i| ((i as f64 * 0.4 + r as f64).sin() + 1.0) / 2.0).collect())
        .collect();
    let text: String = rows
        .iter()
        .map(|row| row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    std::fs::write(&ppg_csv, text).unwrap();

    let abp_csv = dir.path().join("abp.csv");
    let o = innpar(&["reconstruct", "--checkpoint", s(&ckpt), "--in", s(&ppg_csv), "--out", s(&abp_csv)], Some("f64"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sidecar: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("abp.csv.bp.json")).unwrap()).unwrap();
    assert_eq!(sidecar["rows"].as_array().unwrap().len(), 3);

    let back_csv = dir.path().join("back.csv");
    let o = innpar(
        &["reconstruct", "--direction", "inverse", "--checkpoint", s(&ckpt), "--in", s(&abp_csv), "--out", s(&back_csv)],
        Some("f64"),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let back = innpar::signal::parse_csv_rows(&std::fs::read_to_string(&back_csv).unwrap(), 64).unwrap();
    for (row, orig) in back.iter().zip(&rows) {
        for (a, b) in row[..32].iter().zip(orig) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(code(&train_tiny(&run, None, &[])), 0);
    let ckpt = run.join("checkpoint.bin");

    let short = dir.path().join("short.csv");
    std::fs::write(&short, format!("{}\n1,2,3\n", vec!["0.5"; 32].join(","))).unwrap();
    let o = innpar(&["reconstruct", "--checkpoint", s(&ckpt), "--in", s(&short), "--out", s(&dir.path().join("o.csv"))], None);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));

    let o = train_tiny(&dir.path().join("x"), None, &["--model.kernel", "4"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("model.kernel"), "{}", stderr(&o));

    let o = innpar(&["audit", "--mode", "flops"], Some("f16"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("INNPAR_PRECISION"));

    let o = innpar(&["eval", "--checkpoint", s(&dir.path().join("missing.bin")), "--data", s(&ckpt)], None);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&innpar(&["frobnicate"], None)), 2);
    assert_eq!(code(&innpar(&["--help"], None)), 0);
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = train_tiny(&dir.path().join("run"), None, &["--train.lr", "1e30"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));
}
