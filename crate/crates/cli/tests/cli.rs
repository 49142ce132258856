use std::fs;
use std::process::{Command, Output};

fn qmlp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmlp"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = qmlp(args);
    assert!(
        out.status.success(),
        "qmlp {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const SMALL: &[&str] = &[
    "--qubits",
    "3",
    "--depth",
    "1",
    "--hidden",
    "8",
    "--count",
    "40",
    "--resolution",
    "8",
    "--epochs",
    "2",
    "--seeds",
    "1,2",
    "--lr",
    "0.05",
    "--no-wall-time",
];

fn with<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(SMALL).chain(tail).copied().collect()
}

fn assert_header(text: &str) {
    assert!(text.starts_with("# qmlp artifact version "), "{text}");
    assert!(text.contains("# config_hash "));
    assert!(text.contains("# seeds "));
}

#[test]
fn help_lists_flags_with_units() {
    let text = String::from_utf8(ok(&["train", "--help"]).stdout).unwrap();
    for flag in [
        "--qubits <QUBITS>",
        "--depth <LAYERS>",
        "--hidden <UNITS>",
        "--classes",
        "--adr <RATE>",
        "--pdr <RATE>",
        "--shots",
        "--seeds",
        "--lr <RATE>",
        "--epochs",
        "--train-w1",
        "--config <PATH>",
        "--out <DIR>",
    ] {
        assert!(text.contains(flag), "missing {flag}");
    }
    let bounds = String::from_utf8(ok(&["bounds", "approx", "--help"]).stdout).unwrap();
    assert!(bounds.contains("--hidden <UNITS>") && bounds.contains("per layer"));
}

#[test]
fn paper_scale_circuit_count_is_logged() {
    let out = ok(&[
        "train",
        "--model",
        "vqc",
        "--qubits",
        "20",
        "--depth",
        "6",
        "--classes",
        "2",
        "--dry-run",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("trainable parameters: 402"));
}

#[test]
fn training_writes_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&with(&["train", "--out", a.to_str().unwrap()], &[]));
    ok(&with(&["train", "--out", b.to_str().unwrap()], &[]));
    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(metrics, fs::read_to_string(b.join("metrics.csv")).unwrap());
    assert_header(&metrics);
    // epochs 0..=2, two splits, two seeds
    let rows = metrics.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows, 3 * 2 * 2);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seeds"], serde_json::json!([1, 2]));
    assert!(summary["config_hash"].is_string() && summary["artifact_version"].is_string());

    let ck = a.join("checkpoints/seed-1.json");
    let ck_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&ck).unwrap()).unwrap();
    assert_eq!(ck_json["format"], "qmlp-checkpoint");
    assert_eq!(ck_json["provenance"]["config_hash"], summary["config_hash"]);

    let eval = stdout_json(&ok(&with(
        &["eval", "--checkpoint", ck.to_str().unwrap()],
        &[],
    )));
    assert!((0.0..=1.0).contains(&eval["accuracy"].as_f64().unwrap()));
    assert_eq!(eval["samples"], 4);
}

#[test]
fn sweep_writes_combined_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    ok(&with(
        &[
            "sweep",
            "--axis",
            "depth",
            "--values",
            "1,2",
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    ));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_header(&text);
    assert!(text.contains("depth,epoch,split,seed,loss,accuracy,wall_time_ms"));
    let keys: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(keys.iter().filter(|k| **k == "1").count(), 12);
    assert_eq!(keys.iter().filter(|k| **k == "2").count(), 12);

    let fit = stdout_json(&ok(&[
        "bounds",
        "fit-depth",
        "--input",
        out.join("sweep.csv").to_str().unwrap(),
    ]));
    assert_eq!(fit["fit"]["points"], 2);
}

#[test]
fn ntk_reports_kernels_and_variant_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ntk");
    ok(&with(
        &[
            "ntk",
            "--batch",
            "4",
            "--compare-v2",
            "--matrices",
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    ));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("ntk.json")).unwrap()).unwrap();
    assert_eq!(report["dominance_passes"], true);
    assert!(report["comparison"]["vqc-mlpnet"]["lambda_min_vm"].is_number());
    assert!(report["comparison"]["vqc-mlpnet-v2"]["lambda_min_vm"].is_number());
    assert_eq!(report["kernels"]["all"].as_array().unwrap().len(), 4);
    let eig = fs::read_to_string(out.join("eigenvalues.csv")).unwrap();
    assert_header(&eig);
    assert_eq!(eig.lines().filter(|l| l.starts_with("vqc,")).count(), 4);

    let single = dir.path().join("one");
    ok(&with(
        &[
            "ntk",
            "--batch",
            "1",
            "--matrices",
            "--out",
            single.to_str().unwrap(),
        ],
        &[],
    ));
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(single.join("ntk.json")).unwrap()).unwrap();
    assert!(r["kernels"]["all"][0][0].as_f64().unwrap() >= 0.0);
}

#[test]
fn bounds_mirror_library_examples() {
    let v = stdout_json(&ok(&[
        "bounds", "approx", "--hidden", "100", "--depth", "3", "--qubits", "4",
    ]));
    assert!((v["value"].as_f64().unwrap() - (0.1 + (-3f64).exp() + 0.25)).abs() < 1e-12);
    let v = stdout_json(&ok(&["bounds", "depth", "--tau", "0.05"]));
    assert_eq!(v["depth"], 3);
    let v = stdout_json(&ok(&[
        "bounds",
        "deviation",
        "--samples",
        "100",
        "--depth",
        "4",
        "--refined",
    ]));
    assert!((v["value"].as_f64().unwrap() - 0.4).abs() < 1e-12);
    let v = stdout_json(&ok(&[
        "bounds",
        "optimization",
        "--c0",
        "2",
        "--lambda-min",
        "0.5",
        "--t",
        "4",
    ]));
    assert!((v["value"].as_f64().unwrap() - 2.0 * (-2f64).exp()).abs() < 1e-12);
    assert!(!qmlp(&[
        "bounds", "approx", "--hidden", "1", "--depth", "1", "--qubits", "1", "--beta", "0.7"
    ])
    .status
    .success());
}

#[test]
fn fit_depth_recovers_decay_rate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let alpha = 0.35;
    let mut text = String::from("depth,loss\n");
    for l in 1..=6 {
        text.push_str(&format!("{l},{}\n", 1.7 * (-alpha * l as f64).exp()));
    }
    fs::write(&path, text).unwrap();
    let v = stdout_json(&ok(&[
        "bounds",
        "fit-depth",
        "--input",
        path.to_str().unwrap(),
    ]));
    let fitted = v["fit"]["alpha"].as_f64().unwrap();
    assert!((fitted - alpha).abs() / alpha < 0.05);
}

#[test]
fn gen_data_round_trips_through_file_task() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("dna.csv");
    ok(&[
        "gen-data",
        "--task",
        "dna",
        "--count",
        "12",
        "--seed",
        "4",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("label,f0,"));
    assert_eq!(text.lines().count(), 13);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 405);

    let dots = dir.path().join("dots.csv");
    ok(&[
        "gen-data",
        "--count",
        "40",
        "--resolution",
        "8",
        "--out",
        dots.to_str().unwrap(),
    ]);
    let out = ok(&with(
        &[
            "train",
            "--task",
            "file",
            "--data",
            dots.to_str().unwrap(),
            "--dry-run",
        ],
        &[],
    ));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trainable parameters:"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"model": "mlp", "hidden": 10, "data": {"count": 40, "resolution": 8}}"#,
    )
    .unwrap();
    let from_file = ok(&["train", "--config", cfg.to_str().unwrap(), "--dry-run"]);
    // 64·10 + 10 + 10·2 + 2
    assert!(String::from_utf8_lossy(&from_file.stderr).contains("trainable parameters: 672"));
    let overridden = ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--hidden",
        "4",
        "--dry-run",
    ]);
    assert!(String::from_utf8_lossy(&overridden.stderr).contains("trainable parameters: 270"));
}

#[test]
fn invalid_settings_fail_with_message() {
    let out = qmlp(&[
        "train",
        "--qubits",
        "2",
        "--hidden",
        "64",
        "--count",
        "40",
        "--resolution",
        "8",
        "--dry-run",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    let bad = qmlp(&["train", "--config", "/nonexistent/cfg.json"]);
    assert!(!bad.status.success());
}

#[test]
fn worker_count_is_validated() {
    let run = |w: &str| {
        Command::new(env!("CARGO_BIN_EXE_qmlp"))
            .args(["bounds", "depth", "--tau", "0.5"])
            .env("QMLP_WORKERS", w)
            .output()
            .unwrap()
            .status
            .success()
    };
    assert!(run("1"));
    assert!(!run("0"));
    assert!(!run("many"));
}
