//! End-to-end checks through the actual compiled binary.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ptr-ppo"))
}

fn run_train(dir: &Path, seed: u64) {
    let status = bin()
        .args([
            "train",
            "--env",
            "chain",
            "--scheme",
            "reward",
            "--steps",
            "512",
            "--memory",
            "32",
            "--seed",
            &seed.to_string(),
            "--set",
            "eval_interval=256",
            "--set",
            "eval_episodes=2",
            "--out-dir",
        ])
        .arg(dir)
        .status()
        .expect("binary should launch");
    assert!(status.success(), "train exited with {status}");
}

#[test]
fn train_eval_render_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    run_train(&run_dir, 7);

    for file in ["config.cfg", "metrics.csv", "heatmap.csv", "checkpoint_final.txt"] {
        assert!(run_dir.join(file).exists(), "missing {file}");
    }
    // --memory 32 shows up as 32 heatmap columns.
    let heatmap = std::fs::read_to_string(run_dir.join("heatmap.csv")).unwrap();
    assert_eq!(heatmap.lines().next().unwrap().split(',').count(), 32);

    let output = bin()
        .args(["eval", "--checkpoint"])
        .arg(run_dir.join("checkpoint_final.txt"))
        .args(["--env", "chain", "--episodes", "5", "--seed", "3"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("over 5 episodes"), "unexpected eval output: {text}");

    let png = dir.path().join("heatmap.png");
    let status = bin()
        .args(["heatmap-render", "--input"])
        .arg(run_dir.join("heatmap.csv"))
        .arg("--output")
        .arg(&png)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(png.exists());
}

#[test]
fn same_seed_gives_byte_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_train(&a, 7);
    run_train(&b, 7);
    assert_eq!(
        std::fs::read(a.join("metrics.csv")).unwrap(),
        std::fs::read(b.join("metrics.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("heatmap.csv")).unwrap(),
        std::fs::read(b.join("heatmap.csv")).unwrap()
    );
}

#[test]
fn invalid_configuration_fails_with_nonzero_exit() {
    let output = bin()
        .args(["train", "--env", "nowhere"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("nowhere"), "error should name the value: {stderr}");

    let output = bin()
        .args(["train", "--env", "chain", "--set", "bogus_key=1"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("bogus_key"), "error should name the key: {stderr}");
}

#[test]
fn compare_writes_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "compare",
            "--env",
            "chain",
            "--steps",
            "256",
            "--set",
            "memory_capacity=16",
            "--set",
            "eval_episodes=2",
            "--algorithms",
            "ptr-mean,ppo",
            "--seeds",
            "1,2",
            "--out-dir",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let table = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "algorithm,seeds,mean_final_return,std_final_return");
    assert_eq!(lines.len(), 3);
}
