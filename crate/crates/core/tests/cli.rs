use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uwb-heading"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn cli")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = r#"
seed = 11

[generate]
train_duration = 40.0
test_duration = 20.0

[search]
max_points = 150
refine_subsample = 150

[run]
monte_carlo_runs = 4
"#;

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let data = dir.path().join("data");
    let models = dir.path().join("models");
    let runs = dir.path().join("runs");
    let plots = dir.path().join("plots");

    let out = run(&["generate", "--config", s(&cfg), "--out", s(&data)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.join("train.csv").exists() && data.join("test.meta.json").exists());

    let out = run(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        s(&data.join("train.csv")),
        "--out",
        s(&models),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(models.join("training_summary.json").exists());

    let out = run(&[
        "run",
        "--config",
        s(&cfg),
        "--data",
        s(&data.join("test.csv")),
        "--models",
        s(&models),
        "--estimator",
        "gp-iekf,mag-iekf,deadreckon",
        "--runs",
        "3",
        "--seed",
        "4",
        "--out",
        s(&runs),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics.as_array().unwrap().len(), 3);
    assert_eq!(metrics[0]["runs"], 3);
    assert!(runs.join("trace_mag-iekf.csv").exists());

    let out = run(&["report", "--traces", s(&runs), "--out", s(&plots)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(plots.join("abs_error.csv").exists());
    assert!(plots.join("mahalanobis_gp-iekf.csv").exists());
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["generate"])), 1);
    assert_eq!(
        code(&run(&[
            "generate",
            "--config",
            "/nonexistent.toml",
            "--out",
            s(dir.path())
        ])),
        1
    );
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[run]\nmonte_carlo_runs = \"many\"\n").unwrap();
    assert_eq!(
        code(&run(&[
            "generate",
            "--config",
            s(&bad),
            "--out",
            s(dir.path())
        ])),
        1
    );
    let out = run(&[
        "run",
        "--data",
        "x.csv",
        "--estimator",
        "kalman",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = run(&[
        "run",
        "--data",
        s(&missing),
        "--estimator",
        "deadreckon",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), 2);

    let corrupt = dir.path().join("train.csv");
    std::fs::write(&corrupt, "t,foo\n0,1\n").unwrap();
    let out = run(&[
        "train",
        "--data",
        s(&corrupt),
        "--out",
        s(&dir.path().join("m")),
    ]);
    assert_eq!(code(&out), 2);

    let out = run(&[
        "report",
        "--traces",
        s(dir.path()),
        "--out",
        s(&dir.path().join("p")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gp_estimator_needs_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let data = dir.path().join("data");
    assert_eq!(
        code(&run(&["generate", "--config", s(&cfg), "--out", s(&data)])),
        0
    );
    let out = run(&[
        "run",
        "--data",
        s(&data.join("test.csv")),
        "--estimator",
        "gp-iekf",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
}
