use std::path::Path;
use std::process::{Command, Output};

fn dlpa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlpa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn train_with_zero_steps_writes_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dlpa(&[
        "train",
        "--set",
        "total_steps=0",
        "--set",
        "run.env=catch_point",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&dir.path().join("metrics.csv"));
    assert_eq!(
        csv,
        "step,episode,episode_return,loss_total,loss_T,loss_R,loss_c,plan_entropy,plan_sigma_mean,wall_ms\n"
    );
    let echo = read(&dir.path().join("config.ini"));
    assert!(echo.contains("env = catch_point\n"));
    assert!(echo.contains("total_steps = 0\n"));
}

#[test]
fn plan_on_oracle_emits_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dlpa(&[
        "plan",
        "--oracle",
        "--set",
        "env=hard_move",
        "--set",
        "iterations=4",
        "--set",
        "population=64",
        "--set",
        "elites=16",
        "--seed",
        "3",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&dir.path().join("plan.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "iteration,best_return,mean_return,entropy,sigma_mean"
    );
    assert_eq!(lines.len(), 1 + 4);
    assert_eq!(String::from_utf8_lossy(&o.stdout), csv);
}

#[test]
fn plan_accepts_an_explicit_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dlpa(&[
        "plan",
        "--oracle",
        "--state",
        "-0.5,0.5,0.2,0.1",
        "--set",
        "env=hard_move",
        "--set",
        "population=32",
        "--set",
        "elites=8",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = dlpa(&[
        "plan",
        "--oracle",
        "--state",
        "1,2,3",
        "--set",
        "env=hard_move",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diagnose_on_exact_model_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dlpa(&[
        "diagnose",
        "--oracle",
        "--set",
        "env=linear",
        "--set",
        "lipschitz_samples=500",
        "--set",
        "rollouts=100",
        "--set",
        "regret_starts=2",
        "--set",
        "population=50",
        "--set",
        "elites=10",
        "--set",
        "iterations=2",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(&dir.path().join("bound_report.txt"));
    assert!(text.ends_with("verdict pass\n"), "{text}");
    assert!(
        read(&dir.path().join("bound_report.csv")).starts_with("kind,name,empirical,bound,pass\n")
    );
}

#[test]
fn eval_on_oracle_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dlpa(&[
        "eval",
        "--oracle",
        "--set",
        "env=hard_move",
        "--set",
        "eval_episodes=2",
        "--set",
        "population=64",
        "--set",
        "elites=16",
        "--set",
        "iterations=3",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&read(&dir.path().join("eval.json"))).unwrap();
    assert_eq!(v["episodes"], 2);
    assert_eq!(v["returns"].as_array().unwrap().len(), 2);
    assert!(v["success_rate"].as_f64().is_some());
}

#[test]
fn train_then_eval_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let common = [
        "--set",
        "env=catch_point",
        "--set",
        "population=16",
        "--set",
        "elites=4",
        "--set",
        "iterations=2",
        "--set",
        "hidden=8",
        "--set",
        "latent_dim=4",
        "--set",
        "batch_size=8",
        "--set",
        "eval_episodes=1",
    ];
    let mut args = vec![
        "train",
        "--set",
        "total_steps=30",
        "--set",
        "warmup_steps=10",
        "--set",
        "eval_interval=0",
        "--out",
        out,
    ];
    args.extend(common);
    let o = dlpa(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = dir.path().join("model.ckpt");
    assert_eq!(read(&dir.path().join("metrics.csv")).lines().count(), 31);
    let mut args = vec!["eval", "--checkpoint", ckpt.to_str().unwrap(), "--out", out];
    args.extend(common);
    let o = dlpa(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // a checkpoint for another env is rejected
    let o = dlpa(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--set",
        "env=platform",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("checkpoint"));
}

#[test]
fn config_errors_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dlpa(&["train", "--set", "elites=2000", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr)
        .contains("elites (2000) must not exceed population (1000)"));
    let o = dlpa(&["train", "--set", "colour=red", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key `colour`"));
    let o = dlpa(&["ablate", "--axis", "colour", "--out", out]);
    assert!(!o.status.success());
    let cfg = dir.path().join("run.ini");
    std::fs::write(&cfg, "[planner]\nhorizon = 8\n").unwrap();
    let o = dlpa(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "total_steps=0",
        "--out",
        out,
    ]);
    assert!(o.status.success());
    assert!(read(&dir.path().join("config.ini")).contains("horizon = 8\n"));
}

#[test]
fn ablate_reward_heads_runs_matched_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dlpa(&[
        "ablate",
        "--axis",
        "reward-heads",
        "--set",
        "env=catch_point",
        "--set",
        "total_steps=40",
        "--set",
        "warmup_steps=10",
        "--set",
        "eval_interval=20",
        "--set",
        "eval_episodes=1",
        "--set",
        "population=16",
        "--set",
        "elites=4",
        "--set",
        "iterations=2",
        "--set",
        "hidden=8",
        "--set",
        "latent_dim=4",
        "--set",
        "batch_size=8",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&dir.path().join("ablate_reward_heads.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,separate,unified");
    assert_eq!(lines.len(), 3);
    assert!(read(&dir.path().join("unified/config.ini")).contains("unify_reward = true"));
    assert!(read(&dir.path().join("separate/config.ini")).contains("unify_reward = false"));
}
