use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sic(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sic"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn unknown_subcommand_prints_usage_and_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sic(&["frobnicate"], tmp.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
}

#[test]
fn missing_config_fails_without_creating_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sic(&["train", "--config", "nope.toml", "--out", "run"], tmp.path());
    assert!(!out.status.success());
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn invalid_value_is_rejected_before_training() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "[train]\nlr = -1.0\n").unwrap();
    let out = sic(&["train", "--config", "bad.toml", "--out", "run"], tmp.path());
    assert!(!out.status.success());
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn train_then_probe_a_one_step_run() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("run.toml"),
        "scenario = \"rpsw-1step\"\nalgorithm = \"sic-re\"\nmetrics_every = 50\n",
    )
    .unwrap();
    let out = sic(&["train", "--config", "run.toml", "--episodes", "300", "--seed", "4", "--out", "run"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let run = tmp.path().join("run");
    for f in ["config.toml", "metrics.csv", "timing.csv", "final.ckpt", "summary.txt"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 7);

    let out = sic(&["probe", "--checkpoint", "run/final.ckpt", "--signals", "200", "--out", "probe"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let partition = fs::read_to_string(tmp.path().join("probe/partition.csv")).unwrap();
    assert!(partition.starts_with("z1,z2,joint_action"));
    assert_eq!(partition.lines().count(), 201);
}

#[test]
fn probe_rejects_a_signal_free_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("ind.toml"), "algorithm = \"ind-re\"\nepisodes = 50\n").unwrap();
    let out = sic(&["train", "--config", "ind.toml", "--out", "ind"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let out = sic(&["probe", "--checkpoint", "ind/final.ckpt"], tmp.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("signal"), "{}", stderr(&out));
}

#[test]
fn theory_check_reports_the_pinned_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sic(&["theory-check", "--signals", "20000"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("error 0.500000"));
}

#[test]
fn sweep_rejects_negative_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("pp.toml"), "scenario = \"predator-prey\"\n").unwrap();
    let out = sic(&["sweep", "--config", "pp.toml", "--dims=-1,5", "--out", "sweep"], tmp.path());
    assert!(!out.status.success());
    assert!(!tmp.path().join("sweep").exists());
}
