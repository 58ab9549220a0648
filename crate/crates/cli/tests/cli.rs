//! End-to-end subcommand tests against the built binary, at miniature scale.

use std::path::{Path, PathBuf};
use std::process::Command;
use tempfile::tempdir;

fn adlp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adlp"))
}

fn write_mini_config(dir: &Path) -> PathBuf {
    let path = dir.join("mini.cfg");
    std::fs::write(
        &path,
        "\
# miniature config for CLI smoke tests
run.seed = 5
run.checkpoint_interval = 2
run.threads = 1
policy.d_emb = 8
policy.d_hid = 12
task.n_min = 2
task.n_max = 3
task.redundancy_min = 1
task.redundancy_max = 2
pretrain.steps = 60
pretrain.batch_size = 8
pretrain.lr = 0.01
pretrain.target_accuracy = 0
pretrain.holdout_problems = 8
train.batch_size = 4
train.group_size = 4
train.total_steps = 4
sample.train.max_len = 32
sample.eval.max_len = 32
eval.num_problems = 8
eval.samples_per_problem = 2
",
    )
    .unwrap();
    path
}

#[test]
fn train_eval_plot_pipeline() {
    let dir = tempdir().unwrap();
    let cfg = write_mini_config(dir.path());
    let run_dir = dir.path().join("run");

    let out = adlp()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(run_dir.join("metrics.csv").is_file());
    assert!(run_dir.join("base.json").is_file());
    assert!(run_dir.join("checkpoints/final.json").is_file());

    let out = adlp()
        .args(["eval", "--config"])
        .arg(&cfg)
        .arg("--checkpoint")
        .arg(run_dir.join("checkpoints/final.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("accuracy = "), "kv record expected: {text}");
    assert!(text.contains("mean_len = "));

    let plot_dir = dir.path().join("plots");
    let out = adlp()
        .args(["plot", "--out"])
        .arg(&plot_dir)
        .arg(run_dir.join("metrics.csv"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(plot_dir.join("lambda_vs_step.svg").is_file());
    assert!(plot_dir.join("accuracy_vs_length.svg").is_file());
}

#[test]
fn pretrain_then_train_from_base() {
    let dir = tempdir().unwrap();
    let cfg = write_mini_config(dir.path());
    let pre_dir = dir.path().join("pre");
    let out = adlp()
        .args(["pretrain", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&pre_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "pretrain failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let base = pre_dir.join("base.json");
    assert!(base.is_file());

    let run_dir = dir.path().join("run");
    let out = adlp()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--base")
        .arg(&base)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(run_dir.join("eval.csv").is_file());
}

#[test]
fn set_overrides_apply_and_validation_errors_exit_1() {
    let dir = tempdir().unwrap();
    let cfg = write_mini_config(dir.path());

    // Unknown key.
    let out = adlp()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--set", "controller.gamma=1", "--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("controller.gamma"));

    // Out-of-range value names the key.
    let out = adlp()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--set", "controller.eta=-1", "--out"])
        .arg(dir.path().join("y"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("controller.eta"));

    // Missing config file is a runtime error (exit 2).
    let out = adlp()
        .args(["train", "--config", "/nonexistent/nope.cfg"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_runs_a_tiny_grid() {
    let dir = tempdir().unwrap();
    let cfg = write_mini_config(dir.path());
    let sweep_dir = dir.path().join("sweep");
    let out = adlp()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&sweep_dir)
        .args([
            "--axis",
            "controller.eta=0.01,0.001",
            "--seeds",
            "1",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "sweep failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = std::fs::read_to_string(sweep_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(sweep_dir.join("cell000_rep0/metrics.csv").is_file());
    assert!(sweep_dir.join("cell001_rep0/metrics.csv").is_file());
}
