//! End-to-end checks of the binary: the exit-code contract, report
//! determinism modulo the timestamp, byte-identical generation per seed, and
//! the file read-back paths shared by extract and fuzz.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksplit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

/// Per-test scratch path; the temp dir outlives the assertions.
fn scratch(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("ksplit-cli-{}-{name}", std::process::id()))
}

#[test]
fn passing_campaign_exits_zero_with_a_full_report() {
    let out = run(&[
        "verify",
        "wedge",
        "--depth",
        "2",
        "--branching",
        "2",
        "--seed",
        "9",
    ]);
    assert_eq!(code(&out), 0);
    let rep = report(&out);
    assert_eq!(rep["pass"], Value::Bool(true));
    assert_eq!(rep["target"], "wedge");
    assert_eq!(rep["name"], "wedge");
    assert_eq!(rep["seed"], 9);
    assert_eq!(rep["params"]["depth"], 2);
    assert!(rep["timestamp"].as_u64().is_some());
}

#[test]
fn reports_rerun_identically_below_the_timestamp() {
    let args = ["verify", "equiv-base", "--k", "2", "--seed", "7"];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(code(&first), 0);
    assert_eq!(code(&second), 0);
    let strip = |out: &Output| -> Vec<String> {
        let text = String::from_utf8(out.stdout.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap().contains("\"timestamp\""));
        text.lines().skip(2).map(str::to_string).collect()
    };
    assert_eq!(strip(&first), strip(&second));
}

#[test]
fn campaign_runs_identically_with_and_without_parallelism() {
    let serial = run(&[
        "verify",
        "indiscernibility",
        "--instances",
        "6",
        "--seed",
        "3",
    ]);
    let parallel = run(&[
        "verify",
        "indiscernibility",
        "--instances",
        "6",
        "--seed",
        "3",
        "--parallel",
    ]);
    assert_eq!(code(&serial), 0);
    assert_eq!(code(&parallel), 0);
    let mut a = report(&serial);
    let mut b = report(&parallel);
    for rep in [&mut a, &mut b] {
        rep.as_object_mut().unwrap().remove("timestamp");
        rep.as_object_mut().unwrap().remove("params");
    }
    assert_eq!(a, b);
}

#[test]
fn failed_check_exits_one() {
    let path = scratch("broken.json");
    std::fs::write(&path, "this is not json {").unwrap();
    let out = run(&["verify", "fuzz", "--input", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let rep = report(&out);
    assert_eq!(rep["pass"], Value::Bool(false));
    assert_eq!(rep["body"]["stage"], "parse");
}

#[test]
fn exhausted_budget_exits_two() {
    let out = run(&["verify", "equiv-base", "--budget", "5"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn usage_errors_exit_three() {
    for args in [
        vec!["verify", "no-such-target"],
        vec!["verify", "equiv-chain", "--k", "99", "--stages", "2"],
        vec!["verify", "wedge", "--depth", "0"],
        vec!["verify", "grid-profile", "--size", "0"],
        vec!["extract", "/no/such/file.json", "2"],
    ] {
        let out = run(&args);
        assert_eq!(code(&out), 3, "args {args:?} should be a usage error");
    }
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["verify", "--help"])), 0);
}

#[test]
fn generated_files_are_byte_identical_per_seed() {
    let a = scratch("gen-a.json");
    let b = scratch("gen-b.json");
    let args = |p: &PathBuf| {
        vec![
            "generate".into(),
            "equiv-random".into(),
            "--n".into(),
            "7".into(),
            "--seed".into(),
            "5".into(),
            "--out".into(),
            p.to_str().unwrap().to_string(),
        ]
    };
    let run_owned = |argv: Vec<String>| {
        Command::new(env!("CARGO_BIN_EXE_ksplit"))
            .args(argv)
            .output()
            .expect("binary runs")
    };
    assert_eq!(code(&run_owned(args(&a))), 0);
    assert_eq!(code(&run_owned(args(&b))), 0);
    let bytes_a = std::fs::read(&a).unwrap();
    assert_eq!(bytes_a, std::fs::read(&b).unwrap());

    let mut other = args(&b);
    other[5] = "6".into();
    assert_eq!(code(&run_owned(other)), 0);
    assert_ne!(
        bytes_a,
        std::fs::read(&b).unwrap(),
        "a fresh seed changes the structure"
    );
}

#[test]
fn generated_files_feed_extract_and_fuzz() {
    let path = scratch("round-trip.json");
    let gen = run(&[
        "generate",
        "equiv-random",
        "--n",
        "8",
        "--colors",
        "3",
        "--seed",
        "11",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&gen), 0);

    let extract = run(&["extract", path.to_str().unwrap(), "2"]);
    assert_eq!(code(&extract), 0);
    let rep = report(&extract);
    assert_eq!(rep["pass"], Value::Bool(true));
    assert!(rep["body"]["kept"].as_u64().unwrap() >= 2);

    let fuzz = run(&[
        "verify",
        "fuzz",
        "--input",
        path.to_str().unwrap(),
        "--probes",
        "5",
    ]);
    assert_eq!(code(&fuzz), 0);
    assert_eq!(report(&fuzz)["pass"], Value::Bool(true));
}
