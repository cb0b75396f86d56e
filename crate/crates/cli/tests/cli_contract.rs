//! Command-line contract: exit codes, determinism of emitted artifacts,
//! sweep output shape, and the config-hash guard. Everything runs on a
//! miniature configuration so the whole file stays in test-suite budget.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_aptsep")
}

fn workspace() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli_contract");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn mini_config(out_name: &str) -> PathBuf {
    let dir = workspace();
    let out_dir = dir.join(out_name);
    let config = serde_json::json!({
        "master_seed": 11,
        "out_dir": out_dir,
        "corpus": { "samples_per_class": 8, "sample_rate": 8000, "clip_seconds": 1.0 },
        "dsp": { "sample_rate": 8000, "n_fft": 256, "hop": 64, "n_mels": 32 },
        "embed_dim": 16,
        "pretrain": { "sed_epochs": 2, "uss_epochs": 2, "lr": 0.0003, "batch": 4 },
        "tune": { "lr": 0.0003, "batch": 4, "epochs": 1 },
        "fewshot": [1, 2, 3, "full"],
        "seeds": 1
    });
    let path = dir.join(format!("{out_name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Shared mini pipeline (corpus + backbones), built once.
fn prepared_config() -> &'static Path {
    static PREPARED: OnceLock<PathBuf> = OnceLock::new();
    PREPARED
        .get_or_init(|| {
            let config = mini_config("shared");
            run_ok(&["gen-corpus", "--config", config.to_str().unwrap()]);
            run_ok(&["pretrain", "--config", config.to_str().unwrap()]);
            config
        })
        .as_path()
}

#[test]
fn unknown_subcommand_exits_one() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_config_exits_one_with_message() {
    let out = run(&["gen-corpus", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/config.json"), "{err}");
}

#[test]
fn eval_missing_bank_exits_one_with_path() {
    let config = prepared_config();
    let out = run(&[
        "eval",
        "--config",
        config.to_str().unwrap(),
        "--bank",
        "/no/such/bank.json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/no/such/bank.json"), "{err}");
}

#[test]
fn tune_twice_emits_identical_bank_files() {
    let config = prepared_config();
    let cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config).unwrap()).unwrap();
    let out_dir = PathBuf::from(cfg["out_dir"].as_str().unwrap());

    run_ok(&["init-prompts", "--config", config.to_str().unwrap(), "--shots", "2"]);
    run_ok(&["tune", "--config", config.to_str().unwrap(), "--shots", "2"]);
    let bank_path = out_dir.join("banks/tuned_2_s11.json");
    let first = std::fs::read(&bank_path).unwrap();
    run_ok(&["tune", "--config", config.to_str().unwrap(), "--shots", "2"]);
    let second = std::fs::read(&bank_path).unwrap();
    assert_eq!(first, second, "re-running tune changed the bank bytes");
}

#[test]
fn eval_refuses_hash_mismatch_without_force() {
    let config = prepared_config();
    let cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config).unwrap()).unwrap();
    let out_dir = PathBuf::from(cfg["out_dir"].as_str().unwrap());

    run_ok(&["init-prompts", "--config", config.to_str().unwrap(), "--shots", "1"]);
    let bank = out_dir.join("banks/initial_1_s11.json");
    // perturb the recorded config hash
    let mut bank_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&bank).unwrap()).unwrap();
    bank_json["config_hash"] = serde_json::Value::String("0000".into());
    let forged = out_dir.join("banks/forged.json");
    std::fs::write(&forged, serde_json::to_string(&bank_json).unwrap()).unwrap();

    let out = run(&["eval", "--config", config.to_str().unwrap(), "--bank", forged.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--force"), "{err}");

    run_ok(&[
        "eval",
        "--config",
        config.to_str().unwrap(),
        "--bank",
        forged.to_str().unwrap(),
        "--force",
    ]);
}

#[test]
fn fewshot_sweep_emits_one_report_pair_per_setting() {
    let config = prepared_config();
    let cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config).unwrap()).unwrap();
    let base_out = PathBuf::from(cfg["out_dir"].as_str().unwrap());
    // run the sweep in its own output directory to count files cleanly,
    // reusing the shared corpus and checkpoints
    let sweep_out = workspace().join("sweep_out");
    std::fs::create_dir_all(sweep_out.join("checkpoints")).unwrap();
    std::fs::create_dir_all(sweep_out.join("corpus")).unwrap();
    fs_extra_copy(&base_out.join("corpus"), &sweep_out.join("corpus"));
    for ckpt in ["sed.ckpt", "uss.ckpt"] {
        std::fs::copy(base_out.join("checkpoints").join(ckpt), sweep_out.join("checkpoints").join(ckpt))
            .unwrap();
    }

    let out = run(&[
        "fewshot-sweep",
        "--config",
        config.to_str().unwrap(),
        "--out",
        sweep_out.to_str().unwrap(),
        "--set",
        &format!("out_dir=\"{}\"", sweep_out.display()),
    ]);
    // --out override happens after --set; both point at sweep_out
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let reports: Vec<_> = std::fs::read_dir(sweep_out.join("reports"))
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json") && n != "sweep_summary.json")
        .collect();
    assert_eq!(reports.len(), 8, "4 settings x (baseline, tuned): {reports:?}");
    assert!(sweep_out.join("reports/sweep_summary.json").exists());

    // every run appended a line to the machine-readable log
    let log = std::fs::read_to_string(sweep_out.join("runs.jsonl")).unwrap();
    assert!(log.trim().lines().count() >= 8, "run log lines:\n{log}");
    for line in log.trim().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["command", "config_hash", "seed", "wall_time_s", "headline_metric"] {
            assert!(v.get(key).is_some(), "missing {key} in {line}");
        }
    }
}

fn fs_extra_copy(src: &Path, dst: &Path) {
    for entry in std::fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let to = dst.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            std::fs::create_dir_all(&to).unwrap();
            fs_extra_copy(&entry.path(), &to);
        } else {
            std::fs::copy(entry.path(), &to).unwrap();
        }
    }
}
