use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const TINY: &str = r#"
seed = 3

[model]
root_distribution = [1.0]

[[model.offspring]]
family = "deterministic"
counts = [2]

[displacement.heavy]
joint = "iid_axes"
marginal = { family = "two_sided_pareto", alpha = 1.0, beta = 1.0, scale = 1.0 }

[run]
n = 5
replicas = 40
n_grid = [3, 4]
k_list = [1, 2]
b_list = [1, 2]
trees = 10
w_depth = 5
w_samples = 100
limit_samples = 200
laplace_samples = 2000
dump_samples = 2
"#;

fn brwx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brwx"))
        .args(args)
        .current_dir(dir)
        .env_remove("BRWX_OUT_DIR")
        .output()
        .unwrap()
}

fn setup(text: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), text).unwrap();
    dir
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn validate_reports_spectral_data() {
    let dir = setup(TINY);
    let out = brwx(dir.path(), &["validate", "--config", "run.toml", "--out", "o"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_str(&read(&dir.path().join("o"), "validate.json")).unwrap();
    assert_eq!(v["seed"], 3);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    let b = &v["report"]["branching"];
    assert!((b["rho"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(b["spectral"]["sigma"], serde_json::json!([1.0]));
    assert_eq!(v["report"]["accepted"], true);
}

#[test]
fn rejected_model_still_writes_the_report() {
    let dir = setup(&TINY.replace("counts = [2]", "counts = [0]"));
    let out = brwx(dir.path(), &["validate", "--config", "run.toml", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    let v: Value = serde_json::from_str(&read(&dir.path().join("o"), "validate.json")).unwrap();
    assert_eq!(v["report"]["accepted"], false);
}

#[test]
fn simulate_is_reproducible_and_stamped() {
    let dir = setup(TINY);
    assert!(brwx(dir.path(), &["simulate", "--config", "run.toml", "--out", "a"]).status.success());
    assert!(brwx(dir.path(), &["simulate", "--config", "run.toml", "--out", "b", "--threads", "1"]).status.success());
    let a = read(&dir.path().join("a"), "simulate.csv");
    assert_eq!(a, read(&dir.path().join("b"), "simulate.csv"));
    assert!(a.starts_with("# config_hash="));
    assert!(a.lines().next().unwrap().ends_with(" seed=3"));
    assert_eq!(a.lines().filter(|l| !l.starts_with('#')).count(), 41);

    assert!(brwx(dir.path(), &["simulate", "--config", "run.toml", "--out", "c", "--seed", "4"]).status.success());
    let c = read(&dir.path().join("c"), "simulate.csv");
    assert!(c.lines().next().unwrap().ends_with(" seed=4"));
    assert_ne!(a, c);
}

#[test]
fn bad_configs_exit_with_two() {
    let dir = setup(&format!("{TINY}\nunknown_key = 1\n"));
    assert_eq!(brwx(dir.path(), &["simulate", "--config", "run.toml"]).status.code(), Some(2));
    let dir = setup(&TINY.replace("n = 5", "n = 0"));
    assert_eq!(brwx(dir.path(), &["simulate", "--config", "run.toml"]).status.code(), Some(2));
    assert_eq!(brwx(dir.path(), &["simulate"]).status.code(), Some(2));
}

#[test]
fn missing_config_file_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(brwx(dir.path(), &["simulate", "--config", "nope.toml"]).status.code(), Some(4));
}

#[test]
fn population_cap_aborts_exit_with_three_and_keep_artifacts() {
    let dir = setup(&TINY.replace("dump_samples = 2", "dump_samples = 2\npopulation_cap = 4"));
    let out = brwx(dir.path(), &["simulate", "--config", "run.toml", "--out", "o"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("o/simulate.csv").exists());
    assert!(dir.path().join("o/simulate_summary.json").exists());
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = setup(TINY);
    let out = Command::new(env!("CARGO_BIN_EXE_brwx"))
        .args(["validate", "--config", "run.toml"])
        .current_dir(dir.path())
        .env("BRWX_OUT_DIR", "from_env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from_env/validate.json").exists());
}

#[test]
fn every_subcommand_stamps_its_artifacts() {
    let dir = setup(TINY);
    for cmd in ["validate", "simulate", "limit", "maxdist", "onejump", "convergence", "superpose"] {
        let out = brwx(dir.path(), &[cmd, "--config", "run.toml", "--out", cmd]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let listed = String::from_utf8(out.stdout).unwrap();
        assert!(!listed.is_empty());
        for path in listed.lines() {
            let text = std::fs::read_to_string(dir.path().join(path)).unwrap();
            if path.ends_with(".csv") {
                assert!(text.starts_with("# config_hash="), "{path}");
            } else {
                let v: Value = serde_json::from_str(&text).unwrap();
                assert_eq!(v["seed"], 3, "{path}");
                assert!(v["config_hash"].is_string(), "{path}");
            }
        }
    }
}
