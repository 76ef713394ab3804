//! Drives the `hesvm` binary on a small synthetic dataset.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const CONFIG: &str = r#"
[data]
path = "synth.csv"
label = "class"

[synth]
rows = 250
seed = 11

[run]
out = "out"
seed = 5
"#;

fn hesvm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hesvm"))
        .current_dir(dir)
        .args(["--config", "run.toml"])
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn hesvm")
}

fn ok(dir: &Path, args: &[&str]) {
    let o = hesvm(dir, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn code(dir: &Path, args: &[&str]) -> (i32, String) {
    let o = hesvm(dir, args);
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

#[test]
fn full_workflow() {
    let dir = setup(CONFIG);
    let d = dir.path();
    ok(d, &["gen-synth"]);
    ok(d, &["prepare"]);
    let out = d.join("out");
    let first = fs::read(out.join("prepared/train.csv")).unwrap();
    let pre = fs::read(out.join("prepared/preprocess.json")).unwrap();
    ok(d, &["prepare"]);
    assert_eq!(first, fs::read(out.join("prepared/train.csv")).unwrap());
    assert_eq!(pre, fs::read(out.join("prepared/preprocess.json")).unwrap());

    let (c, err) = code(d, &["infer"]);
    assert_eq!(c, 3, "{err}");
    assert!(err.contains("hesvm train"), "{err}");

    ok(d, &["train"]);
    let model = json(&out.join("model.json"));
    for key in ["scaler", "selection", "kernel", "support_vectors", "dual_coeffs", "bias", "C", "rbf_approx"] {
        assert!(model.get(key).is_some(), "model.json lacks {key}");
    }
    assert_eq!(model["rbf_approx"]["degree"], 2);

    let (c, err) = code(d, &["infer"]);
    assert_eq!(c, 3, "{err}");
    assert!(err.contains("hesvm keygen"), "{err}");

    ok(d, &["infer", "--plaintext"]);
    ok(d, &["keygen"]);
    let (c, err) = code(d, &["infer"]);
    assert_eq!(c, 3, "{err}");
    assert!(err.contains("hesvm encrypt"), "{err}");

    ok(d, &["encrypt"]);
    assert!(out.join("ct/test/000000.ct").exists());
    ok(d, &["infer"]);
    let one = json(&out.join("report.json"));
    let n = one["scores"].as_array().unwrap().len();
    assert_eq!(n, 50);
    assert_eq!(one["labels"].as_array().unwrap().len(), n);
    let budget: Vec<f64> =
        ["enc", "kernel", "thresh", "dec"].iter().map(|s| one["noise_bits"][s].as_f64().unwrap()).collect();
    assert!(budget.windows(2).all(|w| w[1] <= w[0]), "{budget:?}");
    assert!(budget[3] > 0.0);

    ok(d, &["infer", "--workers", "3"]);
    let three = json(&out.join("report.json"));
    assert_eq!(one["scores"], three["scores"]);
    assert_eq!(one["labels"], three["labels"]);

    ok(d, &["eval"]);
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    let models: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(models, ["PT-Linear", "PP-Linear", "PT-FinTech", "PP-FinTech"]);
    assert!(fs::read_to_string(out.join("report.md")).unwrap().starts_with("| Model | Encrypted |"));
    assert!(fs::read_to_string(out.join("roc.csv")).unwrap().starts_with("fpr,tpr"));
    let stages = fs::read_to_string(out.join("stages.csv")).unwrap();
    assert_eq!(stages.lines().count(), 5);
    let summary = json(&out.join("eval.json"));
    assert!(summary["agreement_approx"].as_f64().unwrap() >= 0.98, "{summary}");
    assert!(summary["auc"].as_f64().unwrap() > 0.7, "{summary}");

    let (c, err) = code(d, &["infer", "--paper-params"]);
    assert_eq!(c, 4, "{err}");
}

#[test]
fn missing_label_column_is_a_config_error() {
    let dir = setup(&CONFIG.replace("label = \"class\"", "label = \"outcome\""));
    let d = dir.path();
    ok(d, &["gen-synth"]);
    let (c, err) = code(d, &["prepare"]);
    assert_eq!(c, 2, "{err}");
    assert!(err.contains("outcome"), "{err}");
}

#[test]
fn config_errors_name_file_and_line() {
    let dir = setup(&format!("{CONFIG}\n[kernel]\nlambda1 = -1.0\n"));
    let (c, err) = code(dir.path(), &["prepare"]);
    assert_eq!(c, 2, "{err}");
    assert!(err.contains("run.toml:"), "{err}");
    assert!(err.contains("lambda1"), "{err}");
}

#[test]
fn missing_data_file() {
    let dir = setup(CONFIG);
    let (c, err) = code(dir.path(), &["prepare"]);
    assert_ne!(c, 0);
    assert!(err.contains("synth.csv"), "{err}");
}
