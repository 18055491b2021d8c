use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn agebandit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agebandit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_preset(out: &Path) -> Output {
    agebandit(&[
        "run",
        "--preset",
        "abrupt2",
        "--horizon",
        "1200",
        "--runs",
        "4",
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn run_is_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(run_preset(a.path()).status.success());
    assert!(run_preset(b.path()).status.success());
    for f in ["regret.csv", "throughput.csv", "tslr.csv", "summary.csv"] {
        let x = fs::read(a.path().join(f)).unwrap();
        assert_eq!(x, fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let header = |f: &str| {
        fs::read_to_string(a.path().join(f))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(header("regret.csv"), "policy,t,mean,se");
    assert_eq!(header("throughput.csv"), "policy,arm,t,mean,se");
    assert_eq!(header("tslr.csv"), "policy,arm,t,mean,se");
    assert!(
        header("summary.csv").starts_with("policy,run,seed,final_reward,final_regret,max_qlen,")
    );
}

#[test]
fn oracle_prints_static_policy() {
    let out = agebandit(&["oracle", "--preset", "abrupt2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.contains("sigma_star     [0.888889, 0.111111]"),
        "{text}"
    );
}

#[test]
fn errors_exit_nonzero() {
    assert!(!agebandit(&["run", "--preset", "nope"]).status.success());
    assert!(!agebandit(&["bounds", "--preset", "abrupt2"])
        .status
        .success());
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,ch1\n1,0\n2,7\n").unwrap();
    let out = agebandit(&[
        "validate-trace",
        "--file",
        bad.to_str().unwrap(),
        "--schema",
        "binary",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv:3:"));
}

#[test]
fn preset_round_trips_through_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("iid6.toml");
    let out = agebandit(&["preset", "iid6", "--horizon", "500"]);
    assert!(out.status.success());
    fs::write(&cfg, &out.stdout).unwrap();
    let bounds = agebandit(&["bounds", "--config", cfg.to_str().unwrap()]);
    assert!(
        bounds.status.success(),
        "{}",
        String::from_utf8_lossy(&bounds.stderr)
    );
}
