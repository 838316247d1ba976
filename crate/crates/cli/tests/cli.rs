use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use msrs_core::env::{self, EnvConfig, TraceRecord};

fn msrs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msrs")).args(args).env_remove("MSRS_SEED").output().expect("run msrs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &[&str] = &[
    "--modules", "3", "--epochs", "2", "--episodes-per-epoch", "2", "--batch-number", "3", "--batch-size", "8",
    "--hidden", "8", "--buffer-capacity", "1000",
];

fn train_tiny(dir: &Path, seed: &str) -> String {
    let out = dir.join(seed);
    let mut args = vec!["train", "--seed", seed, "--out", out.to_str().unwrap()];
    args.extend_from_slice(TINY);
    let o = msrs(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::read_to_string(out.join("metrics.csv")).unwrap()
}

#[test]
fn training_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = train_tiny(&dir.path().join("a"), "7");
    let b = train_tiny(&dir.path().join("b"), "7");
    assert_eq!(a, b);
    assert_ne!(a, train_tiny(&dir.path().join("c"), "8"));
    let mut lines = a.lines();
    assert_eq!(lines.next(), Some("# msrs-metrics v1"));
    assert!(a.contains("# modules = 3\n") && a.contains("# seed = 7\n") && a.contains("# epochs = 2\n"));
    let columns = a.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(columns.starts_with("epoch,env_steps,actor_loss,critic_loss,alpha,policy_entropy"));
    assert_eq!(a.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

fn dry_run(args: &[&str], seed_var: Option<&str>) -> String {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_msrs"));
    cmd.arg("train").arg("--dry-run").args(args).env_remove("MSRS_SEED");
    if let Some(s) = seed_var {
        cmd.env("MSRS_SEED", s);
    }
    let o = cmd.output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    stdout(&o)
}

#[test]
fn reference_defaults_per_module_count() {
    let four = dry_run(&["--modules", "4"], None);
    for line in ["epochs = 500", "batch-number = 200", "batch-size = 512", "buffer-capacity = 20000000", "initial-log-alpha = -2"] {
        assert!(four.lines().any(|l| l == line), "missing {line} in\n{four}");
    }
    let six = dry_run(&["--modules", "6"], None);
    for line in ["epochs = 1200", "batch-number = 500", "batch-size = 256", "buffer-capacity = 1000000", "initial-log-alpha = -1"] {
        assert!(six.lines().any(|l| l == line), "missing {line} in\n{six}");
    }
}

#[test]
fn seed_comes_from_flag_then_file_then_environment() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    std::fs::write(&file, "# desk run\nmodules = 3\nseed = 11\nbatch_size = 32\n").unwrap();
    let f = file.to_str().unwrap();
    assert!(dry_run(&[], Some("5")).contains("seed = 5\n"));
    assert!(dry_run(&["--config", f], Some("5")).contains("seed = 11\n"));
    let both = dry_run(&["--config", f, "--seed", "12", "--batch-size", "16"], Some("5"));
    assert!(both.contains("seed = 12\n") && both.contains("batch-size = 16\n") && both.contains("modules = 3\n"));
}

#[test]
fn invalid_config_keys_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.cfg");
    std::fs::write(&file, "epochs = 3\nlearning_rate = 0.1\n").unwrap();
    let o = msrs(&["train", "--dry-run", "--config", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning-rate"), "{}", stderr(&o));
    let o = msrs(&["train", "--dry-run", "--tau", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tau"));
    let o = msrs(&["train", "--dry-run", "--target-entropy", "lots"]);
    assert!(stderr(&o).contains("target-entropy"));
}

/// A small n=2 agent trained once and shared by the tests below.
fn trained_two() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let o = msrs(&[
            "train", "--modules", "2", "--seed", "0", "--epochs", "50", "--hidden", "64,64", "--batch-size", "128",
            "--batch-number", "100", "--buffer-capacity", "100000", "--target-entropy", "valid:0.3", "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        dir
    })
    .path()
}

fn checkpoint() -> String {
    trained_two().join("checkpoint.bin").to_str().unwrap().to_string()
}

#[test]
fn trained_pair_solves_every_goal() {
    let ck = checkpoint();
    let o = msrs(&["eval", "--checkpoint", &ck, "--goals", "6", "--rounds", "3", "--modules", "2", "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["format"], "msrs-eval v1");
    assert_eq!(report["success_rate"], 1.0);
    assert_eq!(report["per_round"].as_array().unwrap().len(), 3);
}

#[test]
fn eval_defaults_and_reproducibility() {
    let ck = checkpoint();
    let a = msrs(&["eval", "--checkpoint", &ck, "--seed", "4"]);
    let b = msrs(&["eval", "--checkpoint", &ck, "--seed", "4"]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    let text = stdout(&a);
    assert!(text.contains("goals = 100, rounds = 20"));
    assert_eq!(text.lines().filter(|l| l.starts_with("round")).count(), 20);
}

#[test]
fn eval_rejects_mismatched_checkpoints() {
    let ck = checkpoint();
    let o = msrs(&["eval", "--checkpoint", &ck, "--modules", "3"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("trained for 2 modules"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, b"not a checkpoint at all").unwrap();
    let o = msrs(&["eval", "--checkpoint", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("checkpoint"));
}

#[test]
fn plan_emits_a_replayable_trace() {
    let ck = checkpoint();
    let o = msrs(&["plan", "--checkpoint", &ck, "--goal", "[[0,0,0],[0,1,0]]", "--ascii"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let records: Vec<TraceRecord> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 1);
    assert!(records[0].done);
    assert_eq!(records[0].reward, env::DONE_REWARD);
    assert!(env::replay_trace(&records, &EnvConfig::new(2)).unwrap());
    assert!(stderr(&o).contains("z = 0"));

    for goal in ["[[0,0,0],[0,0,-1]]", "[[0,0,0],[-1,0,0]]", "[[0,0,0],[0,-1,0]]"] {
        let o = msrs(&["plan", "--checkpoint", &ck, "--goal", goal]);
        let records: Vec<TraceRecord> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert!(env::replay_trace(&records, &EnvConfig::new(2)).unwrap());
        assert_eq!(o.status.success(), records.last().unwrap().done);
    }
}

#[test]
fn plan_validates_goals_before_rolling_out() {
    let ck = checkpoint();
    for (goal, needle) in [
        ("[[0,0,0],[1,0,0]]", "equals the start"),
        ("[[0,0,0],[2,0,0]]", "invalid goal"),
        ("[[1,0,0],[2,0,0]]", "invalid goal"),
        ("[[0,0,0]]", "1 cells"),
        ("[0,0,0]", "JSON array"),
    ] {
        let o = msrs(&["plan", "--checkpoint", &ck, "--goal", goal]);
        assert!(!o.status.success(), "{goal}");
        assert!(stdout(&o).is_empty());
        assert!(stderr(&o).contains(needle), "{goal}: {}", stderr(&o));
    }
}

#[test]
fn check_reports_counts_and_seed() {
    let o = msrs(&["check", "--quick", "--seed", "17"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.starts_with("seed 17\n"));
    assert_eq!(text.lines().filter(|l| l.starts_with("ok ")).count(), 4);
}

#[test]
fn check_catches_a_corrupted_sweep_table() {
    let o = msrs(&["check", "--quick", "--corrupt-sweep"]);
    assert!(!o.status.success());
    let text = stdout(&o);
    assert!(text.contains("FAIL sweep"));
    assert!(text.contains("rerun with --seed 0"));
}
