//! End-to-end tests of the `uxnet` binary: exit-code contract, config
//! round-trips, and the synth → train → eval → infer chain on micro-scale
//! runs.

use std::path::Path;
use std::process::{Command, Output};

fn uxnet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uxnet"))
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

/// A four-stage micro model and three-step schedule that trains in
/// seconds; mirrors the dataset written by [`synth_micro`].
const MICRO_CONFIG: &str = r#"{
  "train": {
    "model": {
      "num_classes": 3,
      "stage_channels": [4, 8, 16, 32],
      "depths": [1, 1, 1, 1],
      "kernel_size": 3,
      "patch_embed_kernel": 3,
      "bottleneck_channels": null,
      "patch_size": 16
    },
    "steps": 3,
    "batch_size": 1,
    "crops_per_volume": 1,
    "eval_every": 3,
    "checkpoint_every": 3,
    "seed": 11
  }
}"#;

fn write_micro_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("micro.json");
    std::fs::write(&path, MICRO_CONFIG).unwrap();
    path
}

/// Generates a 5-case 16^3 dataset under `dir/ds` and returns its path.
fn synth_micro(dir: &Path, seed: u64) -> std::path::PathBuf {
    let ds = dir.join("ds");
    let out = uxnet()
        .args(["synth", "--volumes", "5", "--extent", "16", "--seed", &seed.to_string()])
        .arg("--out")
        .arg(&ds)
        .output()
        .unwrap();
    assert!(out.status.success(), "synth failed: {}", stderr_of(&out));
    ds
}

#[test]
fn exit_codes_follow_the_contract() {
    // No subcommand: usage error.
    let out = uxnet().output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    // Unknown flag: usage error (clap's default exit code is remapped).
    let out = uxnet().args(["analyze", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    // Help and version are not errors.
    let out = uxnet().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = uxnet().arg("--version").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    // Missing config file: usage error.
    let out = uxnet().args(["--config", "/no/such/config.json", "analyze"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn print_config_roundtrips_bytewise() {
    let dir = tempfile::tempdir().unwrap();
    let out = uxnet().arg("--print-config").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let first = stdout_of(&out);

    // Feeding the printed config back reproduces it exactly.
    let path = dir.path().join("config.json");
    std::fs::write(&path, &first).unwrap();
    let out = uxnet().arg("--config").arg(&path).arg("--print-config").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_of(&out), first);
}

#[test]
fn print_config_reflects_flag_overrides() {
    let out = uxnet()
        .args(["--seed", "99", "--deterministic", "--print-config", "synth", "--volumes", "7"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let config: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(config["train"]["seed"], 99);
    assert_eq!(config["train"]["deterministic"], true);
    assert_eq!(config["synth"]["cases"], 7);
}

#[test]
fn config_with_unknown_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"learning_rate": 0.1}"#).unwrap();
    let out = uxnet().arg("--config").arg(&path).arg("analyze").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("unknown field"));
}

#[test]
fn synth_same_seed_writes_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for target in [&a, &b] {
        let out = uxnet()
            .args(["synth", "--volumes", "4", "--extent", "16", "--seed", "5"])
            .arg("--out")
            .arg(target)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"manifest.json".to_string()));
    for name in &names {
        let bytes_a = std::fs::read(a.join(name)).unwrap();
        let bytes_b = std::fs::read(b.join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} differs between same-seed runs");
    }
}

#[test]
fn synth_rejects_zero_extent() {
    let dir = tempfile::tempdir().unwrap();
    let out = uxnet()
        .args(["synth", "--extent", "0"])
        .arg("--out")
        .arg(dir.path().join("ds"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("extent"));
}

#[test]
fn train_smoke_runs_and_deterministic_logs_match() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_micro(dir.path(), 7);
    let config = write_micro_config(dir.path());

    let mut logs = Vec::new();
    for run in ["run1", "run2"] {
        let out_dir = dir.path().join(run);
        let out = uxnet()
            .arg("--config")
            .arg(&config)
            .args(["--seed", "1", "--deterministic", "train"])
            .arg("--data")
            .arg(&ds)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
        assert!(out_dir.join("last.ckpt").is_file());
        assert!(stdout_of(&out).contains("trained 3 steps"));
        logs.push(std::fs::read(out_dir.join("metrics.jsonl")).unwrap());
    }
    assert_eq!(logs[0], logs[1], "deterministic runs wrote different metrics");
}

#[test]
fn train_without_manifest_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_micro_config(dir.path());
    let out = uxnet()
        .arg("--config")
        .arg(&config)
        .arg("train")
        .arg("--data")
        .arg(dir.path().join("empty"))
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("manifest"));
}

#[test]
fn eval_prints_dice_json_and_rejects_class_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_micro(dir.path(), 7);
    let config = write_micro_config(dir.path());
    let run = dir.path().join("run");
    let out = uxnet()
        .arg("--config")
        .arg(&config)
        .arg("train")
        .arg("--data")
        .arg(&ds)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));

    let out = uxnet()
        .arg("--config")
        .arg(&config)
        .arg("eval")
        .arg("--checkpoint")
        .arg(run.join("last.ckpt"))
        .arg("--data")
        .arg(&ds)
        .args(["--split", "val"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(report["per_class"].as_array().unwrap().len(), 3);
    assert!(report["foreground_mean"].as_f64().unwrap() >= 0.0);
    assert_eq!(report["cases"], 1);

    // Unknown split name is a usage error.
    let out = uxnet()
        .arg("eval")
        .arg("--checkpoint")
        .arg(run.join("last.ckpt"))
        .arg("--data")
        .arg(&ds)
        .args(["--split", "validation"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // A checkpoint whose class count disagrees with the dataset is named
    // in the error.
    let four = dir.path().join("four");
    let out = uxnet()
        .args(["synth", "--volumes", "4", "--extent", "16", "--classes", "4", "--seed", "9"])
        .arg("--out")
        .arg(&four)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let out = uxnet()
        .arg("eval")
        .arg("--checkpoint")
        .arg(run.join("last.ckpt"))
        .arg("--data")
        .arg(&four)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("classes"), "stderr: {}", stderr_of(&out));
}

#[test]
fn infer_preserves_shape_and_rejects_unknown_extension() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_micro(dir.path(), 7);
    let config = write_micro_config(dir.path());
    let run = dir.path().join("run");
    let out = uxnet()
        .arg("--config")
        .arg(&config)
        .arg("train")
        .arg("--data")
        .arg(&ds)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));

    let pred = dir.path().join("pred.uxv");
    let out = uxnet()
        .arg("--config")
        .arg(&config)
        .arg("infer")
        .arg("--checkpoint")
        .arg(run.join("last.ckpt"))
        .arg("--input")
        .arg(ds.join("case_000_img.uxv"))
        .arg("--output")
        .arg(&pred)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("pred.uxv.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["extents"], serde_json::json!([16, 16, 16]));
    assert_eq!(sidecar["kind"], "label");
    assert_eq!(sidecar["num_classes"], 3);

    let out = uxnet()
        .arg("infer")
        .arg("--checkpoint")
        .arg(run.join("last.ckpt"))
        .arg("--input")
        .arg(dir.path().join("image.txt"))
        .arg("--output")
        .arg(dir.path().join("pred2.uxv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("extension"));
}

#[test]
fn analyze_emits_parsable_tables() {
    // JSON rows parse and the kernel sweep is monotone in parameters.
    let out = uxnet()
        .args(["analyze", "--sweep-kernel", "3,5,7,9,11,13", "--format", "json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rows: Vec<serde_json::Value> = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(rows.len(), 6);
    let params: Vec<u64> = rows.iter().map(|r| r["params"].as_u64().unwrap()).collect();
    assert!(params.windows(2).all(|w| w[0] < w[1]), "params not monotone: {params:?}");

    // The optimized preset lands on the published parameter count.
    let out = uxnet()
        .args(["analyze", "--variant", "optimized", "--format", "json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rows: Vec<serde_json::Value> = serde_json::from_str(&stdout_of(&out)).unwrap();
    let params = rows[0]["params"].as_u64().unwrap() as f64;
    assert!((params - 32.1e6).abs() / 32.1e6 < 0.10, "optimized params {params}");

    // Markdown is the default format and carries a header row.
    let out = uxnet().arg("analyze").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout_of(&out).starts_with("| variant |"));

    // An even kernel in the sweep is reported per row and fails the run.
    let out = uxnet().args(["analyze", "--sweep-kernel", "3,4"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("k=4"));
}

#[test]
fn gradcheck_scoped_passes_and_negative_control_fails() {
    let out = uxnet().args(["gradcheck", "gelu"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("gelu"));
    assert!(stdout_of(&out).contains("pass"));

    let out = uxnet().args(["gradcheck", "no_such_op"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // The deliberately mis-scaled backward rule must be caught.
    let out = uxnet().args(["gradcheck", "gelu", "--negative-control"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout_of(&out).contains("FAIL"));
    assert!(stderr_of(&out).contains("negative_control"));
}
