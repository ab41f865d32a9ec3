//! End-to-end checks of the `t4s` binary: exit codes, artifact layout, and
//! byte-identical reruns.

use std::fs;
use std::path::Path;
use std::process::Command;

fn t4s() -> Command {
    Command::new(env!("CARGO_BIN_EXE_t4s"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

const TINY_RANDOM: &str = r#"
scenario = "random-tensor"

[shape]
k = 2
n = 5
m = 4

[data]
n_s = 40
n_t = 30
validation_fraction = 0.2

[fit]
optimizer = "tr-rmgn"
n_chunk = 1
ratio_cap = 2.0
tau = 10.0
max_stages = 3
tr_max_iters = 15
sgd_max_iters = 150
"#;

const TINY_IMPLICIT: &str = r#"
scenario = "implicit-map"

[shape]
k = 2
n = 5
m = 4

[map]
dim_in = 10
dim_out = 8
gamma = 0.05

[sketch]
epsilon = 0.08
patience = 4

[data]
n_s = 40
n_t = 25
validation_fraction = 0.2

[fit]
optimizer = "mc-sgd"
n_chunk = 1
ratio_cap = 2.0
tau = 10.0
max_stages = 3
tr_max_iters = 15
sgd_max_iters = 120
"#;

#[test]
fn random_tensor_run_emits_reproducible_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY_RANDOM);
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");

    for out in [&out_a, &out_b] {
        let status = t4s()
            .arg("run")
            .arg(&config)
            .arg("--seed")
            .arg("11")
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["curve.csv", "trace.csv", "summary.json", "meta.json"] {
        assert!(out_a.join(name).exists(), "{name} missing");
    }
    // Payload artifacts are byte-identical across reruns; the trace and
    // metadata carry wall-clock values and are exempt.
    for name in ["curve.csv", "summary.json"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
    let curve = fs::read_to_string(out_a.join("curve.csv")).unwrap();
    assert!(curve.starts_with("# config_hash="));
    assert!(curve.contains("seed=11"));
    assert!(curve.contains("t3-svd"));

    // A different seed changes the artifacts.
    let out_c = tmp.path().join("c");
    let status = t4s()
        .arg("run")
        .arg(&config)
        .arg("--seed")
        .arg("12")
        .arg("--out")
        .arg(&out_c)
        .status()
        .unwrap();
    assert!(status.success());
    let a = fs::read(out_a.join("curve.csv")).unwrap();
    let c = fs::read(out_c.join("curve.csv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn implicit_map_run_builds_model_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY_IMPLICIT);
    let out = tmp.path().join("out");
    let status = t4s()
        .arg("run")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for name in [
        "errors.jsonl",
        "model.json",
        "training_data.jsonl",
        "summary.json",
        "trace.csv",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let medians = summary["median_normalized_error_by_order"]
        .as_array()
        .unwrap();
    assert_eq!(medians.len(), 3);
    // The constant model is the worst; adding Taylor terms helps.
    let order0 = medians[0].as_f64().unwrap();
    let order2 = medians[2].as_f64().unwrap();
    assert!(order2 < order0);

    // The emitted model is loadable.
    let model = t4s_core::model::T4sModel::load(&out.join("model.json")).unwrap();
    assert_eq!(model.order(), 2);
}

#[test]
fn config_errors_exit_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "scenario = \"random-tensor\"\ntypo = 1\n");
    let status = t4s().arg("run").arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(3));

    let missing = tmp.path().join("nope.toml");
    let status = t4s().arg("run").arg(&missing).status().unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn probe_subcommand_reports_solve_counts() {
    let output = t4s()
        .args(["probe", "--order", "3", "--mode", "rev", "--seed", "2"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    // Reverse order 3: two incremental states plus three adjoints.
    assert_eq!(parsed["incremental_state_solves"], 2);
    assert_eq!(parsed["incremental_adjoint_solves"], 3);
}

#[test]
fn verify_tables_passes_and_emits_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("tables");
    let status = t4s()
        .arg("verify-tables")
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let tables: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("tables.json")).unwrap()).unwrap();
    assert_eq!(tables["mismatches"].as_array().unwrap().len(), 0);
    assert_eq!(tables["forward_asym_terms"][9], 678570);
}
