use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsb-sim"))
        .args(args)
        .env("LSB_OUT", out)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

#[test]
fn oracles_print_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["oracle", "detect-prob", "--ptv", "20"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o), "0.2");
    let o = sim(&["oracle", "detect-prob", "--ptv", "100", "--verifiers", "3"], dir.path());
    assert_eq!(stdout(&o), "1");
    let o = sim(&["oracle", "eq1", "--alpha", "0.625", "--m", "13", "--rate", "32"], dir.path());
    assert_eq!(stdout(&o), "2.539");
    let o = sim(&["oracle", "mutate-chain", "--len", "10"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("survivors 0 clean_chain_ok true"), "{}", stdout(&o));
}

#[test]
fn invalid_scenario_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["run", "scenarios/invalid.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("invalid").exists());
    let o = sim(&["run", "scenarios/missing.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = sim(&["exp", "no_such_experiment"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn results_land_under_the_env_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["exp", "agreement", "--seeds", "2"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for s in [1, 2] {
        let seed_dir = dir.path().join("agreement").join(format!("seed_{s}"));
        assert!(std::fs::read_dir(&seed_dir).unwrap().count() > 0);
    }
    let other = tempfile::tempdir().unwrap();
    let flag = other.path().to_str().unwrap();
    let o = sim(&["--out", flag, "run", "default"], dir.path());
    assert!(o.status.success());
    let summary = std::fs::read_to_string(other.path().join("default").join("summary.csv")).unwrap();
    assert!(summary.starts_with("name,seed,"));
}
