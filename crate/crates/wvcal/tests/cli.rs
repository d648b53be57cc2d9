//! End-to-end tests of the wvcal binary: exit codes, file formats, pipeline
//! composition, and byte-stable golden outputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wvcal::fit::exact_estimate;
use wvcal::io::{write_model_json, write_wv_csv};
use wvcal::model::{CompositeModel, ProcessKind, ScaleGrid, VarianceConvention};
use wvcal::wv::WvEstimate;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wvcal"))
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn gyroish_model() -> CompositeModel {
    CompositeModel::from_pairs(&[(ProcessKind::Wn, 0.5), (ProcessKind::Rw, 1e-4)]).unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    for sub in ["simulate", "wv", "fit", "mc", "convert-units"] {
        assert_eq!(code(&run(&[sub, "--help"])), 0, "{sub} --help");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["wv", "--definitely-not-a-flag"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn simulate_writes_signal_sidecar_and_components() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    let model =
        CompositeModel::from_pairs(&[(ProcessKind::Wn, 1.0), (ProcessKind::Dr, 0.25)]).unwrap();
    write_model_json(&model_path, &model, VarianceConvention::Av).unwrap();
    let sig = dir.path().join("sig.csv");
    let out = run(&[
        "simulate",
        "--model",
        s(&model_path),
        "--T",
        "64",
        "--seed",
        "5",
        "--fs",
        "10",
        "--out",
        s(&sig),
        "--components",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let text = std::fs::read_to_string(&sig).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("value"));
    assert_eq!(lines.count(), 64);
    assert!(dir.path().join("sig.json").exists(), "sidecar");

    let dr = std::fs::read_to_string(dir.path().join("sig.DR.csv")).unwrap();
    let second: f64 = dr.lines().nth(1).unwrap().parse().unwrap();
    assert!((second - 0.25).abs() < 1e-15, "ramp starts at omega, got {second}");
    assert!(dir.path().join("sig.WN.csv").exists());
}

#[test]
fn in_and_wv_fit_paths_produce_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    write_model_json(&model_path, &gyroish_model(), VarianceConvention::Av).unwrap();
    let sig = dir.path().join("sig.csv");
    let out = run(&[
        "simulate", "--model", s(&model_path), "--T", "4096", "--seed", "3",
        "--fs", "100", "--out", s(&sig),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let direct = dir.path().join("direct.json");
    let out = run(&[
        "fit", "--in", s(&sig), "--model-template", s(&model_path),
        "--out", s(&direct),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let wv = dir.path().join("wv.csv");
    let out = run(&["wv", "--in", s(&sig), "--out", s(&wv)]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let via_wv = dir.path().join("via_wv.json");
    let out = run(&[
        "fit", "--wv", s(&wv), "--model-template", s(&model_path),
        "--out", s(&via_wv),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let a = std::fs::read(&direct).unwrap();
    let b = std::fs::read(&via_wv).unwrap();
    assert_eq!(a, b, "the 17-digit variance table must round-trip exactly");

    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["converged"], serde_json::Value::Bool(true));
    assert_eq!(report["units"], "per-sample");
    assert_eq!(report["method"]["f"], "identity");
}

#[test]
fn noiseless_variance_fit_recovers_truth_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let truth = gyroish_model();
    let model_path = dir.path().join("model.json");
    write_model_json(&model_path, &truth, VarianceConvention::Av).unwrap();

    let template = WvEstimate {
        grid: ScaleGrid::dyadic(1 << 12, 16).unwrap(),
        convention: VarianceConvention::Av,
        nu_hat: vec![],
        cov_hat: None,
        ci_lo: None,
        ci_hi: None,
        sample_rate_hz: 100.0,
    };
    let exact = exact_estimate(&truth, &template);
    let wv = dir.path().join("wv.csv");
    write_wv_csv(&wv, &exact).unwrap();

    let report_path = dir.path().join("report.json");
    let out = run(&[
        "fit", "--wv", s(&wv), "--model-template", s(&model_path),
        "--out", s(&report_path),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let wn = report["theta_hat"]["WN"].as_f64().unwrap();
    let rw = report["theta_hat"]["RW"].as_f64().unwrap();
    assert!((wn - 0.5).abs() < 0.5 * 1e-8, "WN = {wn}");
    assert!((rw - 1e-4).abs() < 1e-4 * 1e-8, "RW = {rw}");
    assert_eq!(report["converged"], serde_json::Value::Bool(true));
    assert_eq!(report["projected"], serde_json::Value::Bool(false));
}

#[test]
fn too_deep_level_is_an_identifiability_error() {
    let dir = tempfile::tempdir().unwrap();
    let sig = dir.path().join("tiny.csv");
    std::fs::write(&sig, "value\n0.1\n-0.2\n0.3\n0.05\n").unwrap();
    let out = run(&[
        "wv", "--in", s(&sig), "--fs", "10", "--levels", "3",
        "--out", s(&dir.path().join("wv.csv")),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr_of(&out));
    let err = stderr_of(&out);
    assert!(err.contains("level 3"), "stderr must name the level: {err}");
}

#[test]
fn conflicting_fit_inputs_are_usage_errors() {
    let out = run(&[
        "fit", "--in", "a.csv", "--wv", "b.csv",
        "--model-template", "m.json", "--out", "r.json",
    ]);
    assert_eq!(code(&out), 1);

    let out = run(&["fit", "--model-template", "m.json", "--out", "r.json"]);
    assert_eq!(code(&out), 1, "one of --in/--wv is required");
}

#[test]
fn missing_input_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "wv", "--in", s(&dir.path().join("absent.csv")), "--fs", "1",
        "--out", s(&dir.path().join("wv.csv")),
    ]);
    assert_eq!(code(&out), 4, "{}", stderr_of(&out));
}

#[test]
fn malformed_signal_row_is_an_io_error_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let sig = dir.path().join("bad.csv");
    std::fs::write(&sig, "value\n0.5\nnot-a-number\n0.25\n").unwrap();
    let out = run(&[
        "wv", "--in", s(&sig), "--fs", "1",
        "--out", s(&dir.path().join("wv.csv")),
    ]);
    assert_eq!(code(&out), 4);
    let err = stderr_of(&out);
    assert!(err.contains(":3:"), "line number expected in {err:?}");
}

#[test]
fn wv_explicit_levels_are_respected() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    write_model_json(
        &model_path,
        &CompositeModel::from_pairs(&[(ProcessKind::Wn, 1.0)]).unwrap(),
        VarianceConvention::Av,
    )
    .unwrap();
    let sig = dir.path().join("sig.csv");
    assert_eq!(
        code(&run(&[
            "simulate", "--model", s(&model_path), "--T", "256", "--seed", "1",
            "--fs", "1", "--out", s(&sig),
        ])),
        0
    );
    let wv = dir.path().join("wv.csv");
    let out = run(&["wv", "--in", s(&sig), "--levels", "1,3,5", "--out", s(&wv)]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let text = std::fs::read_to_string(&wv).unwrap();
    let levels: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(levels, ["1", "3", "5"]);
}

#[test]
fn convert_units_round_trips() {
    let out = run(&[
        "convert-units", "--value", "0.157", "--process", "wn",
        "--quantity", "gyro", "--unit", "deg/sqrt(hr)", "--fs", "250",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let per_sample: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    let expected = 0.157 / 60.0 * 250f64.sqrt();
    assert!(
        ((per_sample - expected) / expected).abs() < 1e-12,
        "got {per_sample}, expected {expected}"
    );

    let out = run(&[
        "convert-units", "--value", &per_sample.to_string(), "--process", "wn",
        "--quantity", "gyro", "--unit", "deg/sqrt(hr)", "--fs", "250",
        "--direction", "to-physical",
    ]);
    assert_eq!(code(&out), 0);
    let back: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(((back - 0.157) / 0.157).abs() < 1e-12, "got {back}");
}

#[test]
fn unknown_unit_is_a_usage_error_listing_support() {
    let out = run(&[
        "convert-units", "--value", "1.0", "--process", "wn",
        "--quantity", "gyro", "--unit", "furlong/fortnight", "--fs", "250",
    ]);
    assert_eq!(code(&out), 1);
    let err = stderr_of(&out);
    assert!(err.contains("deg/sqrt(hr)"), "supported units listed: {err}");
}

#[test]
fn invalid_thread_env_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    write_model_json(
        &model_path,
        &CompositeModel::from_pairs(&[(ProcessKind::Wn, 1.0)]).unwrap(),
        VarianceConvention::Av,
    )
    .unwrap();
    let out_path = dir.path().join("x.csv");
    let args = [
        "simulate", "--model", s(&model_path), "--T", "32", "--seed", "0",
        "--fs", "1", "--out", s(&out_path),
    ];
    let out = bin().args(args).env("WVCAL_THREADS", "zero").output().unwrap();
    assert_eq!(code(&out), 1, "{}", stderr_of(&out));

    let out = bin().args(args).env("WVCAL_THREADS", "1").output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
}

#[test]
fn mc_runs_are_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("exp.json");
    std::fs::write(
        &spec_path,
        r#"{
  "truth": {"WN": {"sigma2": 1.0}, "RW": {"gamma2": 0.05}},
  "T": 4096,
  "reps": 4,
  "seed": 12,
  "sample_rate_hz": 50.0,
  "methods": ["gmwm", "avsm"]
}"#,
    )
    .unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = run(&["mc", "--spec", s(&spec_path), "--out", s(out_dir)]);
        assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    }
    for name in ["summary.json", "rmse.csv", "boxplot.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} must be byte-identical across reruns");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["reps"], serde_json::json!(4));
    assert!(summary["methods"]["gmwm"]["parameters"]["WN"]["rmse"].is_f64());
    assert!(summary["methods"]["avsm"]["parameters"]["RW"].is_object());
}

#[test]
fn golden_pipeline_outputs_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let golden = golden_dir();
    let model = golden.join("model.json");
    let sig = dir.path().join("sig.csv");

    let out = run(&[
        "simulate", "--model", s(&model), "--T", "4096", "--seed", "11",
        "--fs", "100", "--out", s(&sig),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let wv = dir.path().join("wv.csv");
    let out = run(&[
        "wv", "--in", s(&sig), "--cov", "diag", "--confidence", "0.95",
        "--out", s(&wv),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let report = dir.path().join("report.json");
    let plot = dir.path().join("plot.csv");
    let out = run(&[
        "fit", "--wv", s(&wv), "--model-template", s(&model),
        "--out", s(&report), "--plot", s(&plot),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    for (actual, name) in [(&wv, "wv.csv"), (&report, "fit_report.json"), (&plot, "fit_plot.csv")] {
        let got = std::fs::read_to_string(actual).unwrap();
        let want = std::fs::read_to_string(golden.join(name))
            .unwrap_or_else(|e| panic!("golden fixture {name} unreadable: {e}"));
        if got != want {
            let diff_line = got
                .lines()
                .zip(want.lines())
                .position(|(a, b)| a != b)
                .map(|i| i + 1)
                .unwrap_or_else(|| got.lines().count().min(want.lines().count()) + 1);
            panic!("{name} deviates from the golden copy starting at line {diff_line}");
        }
    }
}
