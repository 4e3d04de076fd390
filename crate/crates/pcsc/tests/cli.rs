//! End-to-end CLI checks on a miniature dataset: generate, train, eval,
//! sweep, plus the documented error behavior (exit code 2 with a message).

use std::path::Path;
use std::process::Command;

fn pcsc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pcsc"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn pcsc");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).to_string()
}

#[test]
fn full_pipeline_on_tiny_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");

    run_ok(pcsc()
        .args(["gen", "--per-class", "4", "--seed", "7"])
        .arg("--out")
        .arg(&data));
    assert!(data.join("manifest.csv").exists());
    assert!(data.join("reference.ply").exists());
    let manifest = std::fs::read_to_string(data.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 25); // header + 24 rows

    let stdout = run_ok(pcsc()
        .args([
            "train",
            "--latent-dim",
            "64",
            "--epochs",
            "1",
            "--seed",
            "3",
            "--task",
            "object",
            "--sampling",
            "random",
            "--background-removal",
            "on",
        ])
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&run));
    assert!(stdout.contains("epoch   0"));
    assert!(run.join("checkpoint.bin").exists());
    assert!(run.join("history.csv").exists());
    assert!(run.join("config.txt").exists());
    let history = std::fs::read_to_string(run.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,loss_total,loss_rec_sum,loss_rec_mean,loss_cls,train_acc"));
    assert_eq!(history.lines().count(), 2);

    let stdout = run_ok(pcsc()
        .args(["eval", "--snr", "4", "--eval-seed", "11"])
        .arg("--model")
        .arg(&run)
        .arg("--data")
        .arg(&data));
    assert!(stdout.contains("chamfer_mean="), "{stdout}");

    let csv = run.join("metrics.csv");
    run_ok(pcsc()
        .args(["sweep", "--snr", "0:8:4", "--eval-seed", "11", "--plot"])
        .arg("--model")
        .arg(&run)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&csv)
        .arg("--baseline-out")
        .arg(run.join("baseline.csv")));
    let first = std::fs::read(&csv).unwrap();
    let text = String::from_utf8_lossy(&first);
    assert!(text.starts_with("snr_db,chamfer_mean,chamfer_sum,accuracy,n_samples,fingerprint"));
    assert_eq!(text.lines().count(), 4); // header + 3 SNR points
    assert!(run.join("baseline.csv").exists());
    assert!(run.join("metrics_chamfer.svg").exists());
    assert!(run.join("metrics_accuracy.svg").exists());

    // Same eval seed, same bytes.
    run_ok(pcsc()
        .args(["sweep", "--snr", "0:8:4", "--eval-seed", "11"])
        .arg("--model")
        .arg(&run)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&csv));
    assert_eq!(std::fs::read(&csv).unwrap(), first);
}

#[test]
fn config_file_drives_training() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    run_ok(pcsc()
        .args(["gen", "--per-class", "4", "--seed", "5"])
        .arg("--out")
        .arg(&data));

    let cfg_path = tmp.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        "latent_dim = 64\nepochs = 1\ntask = clamp\nseed = 2\nbatch_size = 8\n",
    )
    .unwrap();
    let run = tmp.path().join("run");
    run_ok(pcsc()
        .arg("train")
        .arg("--config")
        .arg(&cfg_path)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&run));
    let stored = std::fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(stored.contains("task = clamp"));
    assert!(stored.contains("latent_dim = 64"));
}

#[test]
fn errors_exit_with_code_2() {
    // Unknown flag: clap usage error.
    let out = pcsc().args(["gen", "--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Missing dataset directory.
    let tmp = tempfile::tempdir().unwrap();
    let out = pcsc()
        .args(["train", "--epochs", "1"])
        .arg("--data")
        .arg(tmp.path().join("nope"))
        .arg("--out")
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    // Inconsistent configuration (batch size below 2).
    let out = pcsc()
        .args(["train", "--batch-size", "1"])
        .arg("--data")
        .arg(tmp.path())
        .arg("--out")
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pcsc_seed_env_is_the_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    run_ok(pcsc()
        .args(["gen", "--per-class", "1"])
        .env("PCSC_SEED", "123")
        .arg("--out")
        .arg(&a));
    run_ok(pcsc()
        .args(["gen", "--per-class", "1", "--seed", "123"])
        .arg("--out")
        .arg(&b));
    run_ok(pcsc()
        .args(["gen", "--per-class", "1", "--seed", "124"])
        .arg("--out")
        .arg(&c));
    let read = |d: &Path| std::fs::read(d.join("manifest.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}
