use std::path::Path;
use std::process::{Command, Output};

fn drsolve(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drsolve"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run drsolve")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn error_line(o: &Output) -> String {
    stderr(o)
        .lines()
        .filter(|l| l.starts_with("drsolve-error: "))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = drsolve(&["generate", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage:"));
    assert!(error_line(&o).starts_with("drsolve-error: usage: "));
    assert_eq!(error_line(&o).lines().count(), 1);
}

#[test]
fn missing_corpus_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = drsolve(&["xval", "--corpus", "absent.json"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(error_line(&o).starts_with("drsolve-error: data: "));
}

#[test]
fn bad_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"solver": {"grid": 2}}"#).unwrap();
    let o = drsolve(
        &[
            "generate", "--rt", "1", "--ct", "0", "--ss", "0", "--ot", "0", "--config", "cfg.json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = drsolve(
        &["train", "--corpus", "corpus.json", "--config", "cfg.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(error_line(&o).contains("grid"));
}

#[test]
fn diverging_training_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let cfg = r#"{"solver": {"models": {"rf_train": {"learning_rate": 1e300, "epochs": 3, "batch_size": 4, "seed": 1, "clip_norm": 1e308}, "synthetic_ot": 2}}}"#;
    std::fs::write(p.join("cfg.json"), cfg).unwrap();
    assert!(
        drsolve(&["generate", "--rt", "2", "--ct", "2", "--ss", "2", "--ot", "2"], p)
            .status
            .success()
    );
    let o = drsolve(&["train", "--corpus", "corpus.json", "--config", "cfg.json"], p);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(error_line(&o).starts_with("drsolve-error: divergence: "));
}

#[test]
fn generate_train_evaluate_solve() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let cfg = r#"{"solver": {"models": {"synthetic_ot": 10, "image_hidden": 4}}}"#;
    std::fs::write(p.join("cfg.json"), cfg).unwrap();
    let o = drsolve(
        &[
            "generate", "--rt", "4", "--ct", "4", "--ss", "4", "--ot", "4", "--seed", "3", "--out", "c.json",
        ],
        p,
    );
    assert!(o.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("c.json")).unwrap()).unwrap();
    assert_eq!(manifest["format_version"], 1);
    assert_eq!(manifest["problem_count"], 16);
    assert_eq!(manifest["seed"], 3);

    let o = drsolve(
        &[
            "train",
            "--corpus",
            "c.json",
            "--train-fraction",
            "0.5",
            "--config",
            "cfg.json",
            "--out",
            "m",
        ],
        p,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let split: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("m/split.json")).unwrap()).unwrap();
    assert_eq!(split["test"].as_array().unwrap().len(), 8);

    let o = drsolve(
        &["evaluate", "--corpus", "c.json", "--models", "m", "--format", "csv"],
        p,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = csv.lines().take(6).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, ["category", "RT", "CT", "SS", "OT", "Average"]);
    assert!(csv.lines().nth(5).unwrap().ends_with(",8"), "{csv}");
    assert!(csv.contains("confusion,RT,CT,SS,OT"));

    let o = drsolve(
        &[
            "evaluate", "--corpus", "c.json", "--models", "m", "--all", "--format", "json",
        ],
        p,
    );
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["records"].as_array().unwrap().len(), 16);

    let o = drsolve(
        &[
            "solve", "--models", "m", "--corpus", "c.json", "--id", "p0005", "--format", "json",
        ],
        p,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let d: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(d["id"], "p0005");
    assert!(["A", "B", "C", "D"].contains(&d["chosen"].as_str().unwrap()));

    let panels: Vec<String> = (1..=7).map(|k| format!("c_panels/p0005_{k}.pgm")).collect();
    let mut args = vec!["solve", "--models", "m", "--format", "json", "--panels"];
    args.extend(panels.iter().map(String::as_str));
    let o = drsolve(&args, p);
    assert!(o.status.success(), "{}", stderr(&o));
    let e: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(e["chosen"], d["chosen"]);
}

#[test]
fn gradcheck_reports_max_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = drsolve(&["gradcheck", "--trials", "3", "--seed", "9"], dir.path());
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    let last = out.lines().last().unwrap();
    let v: f64 = last.strip_prefix("max_rel_error ").unwrap().parse().unwrap();
    assert!(v < 1e-4);
}
