use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn chaoslab(args: &[&str], cfg: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_chaoslab"));
    cmd.args(args).env_remove("CHAOSLAB_THREADS").current_dir(dir);
    if let Some(text) = cfg {
        fs::write(dir.join("cfg.json"), text).unwrap();
        cmd.args(["--config", "cfg.json"]);
    }
    cmd.output().unwrap()
}

const SMALL_COMBINATORICS: &str = r#"{"experiment":{"kind":"combinatorics_verify","q_max":4,"p_max":4,
    "p_n_max":3,"p_k_max":1,"compositions_q_max":4,"compositions_p_max":2,"u_k_max":2,
    "v_n_max":2,"v_k_max":2,"multinomial_l_max":2,"multinomial_p_max":3}}"#;

#[test]
fn passing_run_writes_csv_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = chaoslab(
        &["combinatorics-verify", "--seed", "1", "--out", "a"],
        Some(SMALL_COMBINATORICS),
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("a/combinatorics.csv")).unwrap();
    assert!(csv.starts_with("lemma,parameters,exact,formula,bound,pass\n"));
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("a/run.json")).unwrap()).unwrap();
    assert_eq!(run["failures"], 0);
    assert_eq!(run["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn injected_fault_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SMALL_COMBINATORICS.replace("\"q_max\":4", "\"q_max\":4,\"inject_wrong_formula\":true");
    let out = chaoslab(&["combinatorics-verify", "--seed", "1", "--out", "b"], Some(&cfg), tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn empty_grid_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"seed":3,"experiment":{"kind":"combinatorics_verify","q_max":0,"p_n_max":0,
        "compositions_q_max":0,"u_k_max":0,"v_n_max":0,"multinomial_l_max":0}}"#;
    let out = chaoslab(&["combinatorics-verify", "--out", "c"], Some(cfg), tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("c/combinatorics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    // no seed
    assert_eq!(chaoslab(&["expmoment"], None, tmp.path()).status.code(), Some(2));
    // unknown field
    let bad = r#"{"seed":1,"experiment":{"kind":"expmoment","bogus":true}}"#;
    assert_eq!(chaoslab(&["expmoment"], Some(bad), tmp.path()).status.code(), Some(2));
    // unsorted N list
    let bad = r#"{"seed":1,"experiment":{"n_list":[32,8]}}"#;
    assert_eq!(chaoslab(&["expmoment"], Some(bad), tmp.path()).status.code(), Some(2));
    // kind does not match the subcommand
    let bad = r#"{"seed":1,"experiment":{"kind":"weakstrong"}}"#;
    assert_eq!(chaoslab(&["expmoment"], Some(bad), tmp.path()).status.code(), Some(2));
    // CFL violation caught before running
    let bad = r#"{"seed":1,"experiment":{"grid":{"gx":256,"dt":0.01}}}"#;
    assert_eq!(chaoslab(&["vlasov-run"], Some(bad), tmp.path()).status.code(), Some(2));
    assert_eq!(chaoslab(&["expmoment", "--seed", "x"], None, tmp.path()).status.code(), Some(2));
    assert_eq!(chaoslab(&["expmoment", "--seed", "1", "--threads", "0"], None, tmp.path()).status.code(), Some(2));
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_chaoslab"));
    let out = cmd
        .args(["expmoment", "--seed", "1"])
        .env("CHAOSLAB_THREADS", "many")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn same_seed_reproduces_csv_bytes_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"experiment":{"kind":"expmoment","n_list":[4,16],"samples":2000}}"#;
    let a = chaoslab(&["expmoment", "--seed", "5", "--out", "a", "--threads", "1"], Some(cfg), tmp.path());
    let b = chaoslab(&["expmoment", "--seed", "5", "--out", "b", "--threads", "3"], Some(cfg), tmp.path());
    let c = chaoslab(&["expmoment", "--seed", "6", "--out", "c"], Some(cfg), tmp.path());
    for o in [&a, &b, &c] {
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    }
    let read = |d: &str| fs::read(tmp.path().join(d).join("expmoment.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn default_output_dir_uses_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"experiment":{"kind":"expmoment","n_list":[4],"samples":100}}"#;
    let out = chaoslab(&["expmoment", "--seed", "1"], Some(cfg), tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let runs: Vec<_> = fs::read_dir(tmp.path().join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let name = runs[0].as_ref().unwrap().file_name().into_string().unwrap();
    assert!(name.starts_with("expmoment-") && name.len() == "expmoment-".len() + 12, "{name}");
}
