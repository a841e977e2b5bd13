use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_auditgame");

const REFERENCE: &str = r#"
types = ["L", "H"]
prior = ["1/2", "1/2"]
alloc = { L = 50, H = 105 }
audit_cost = 25
fine = 100
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, name: &str, extra: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, format!("{REFERENCE}{extra}")).unwrap();
    path.display().to_string()
}

#[test]
fn solve_reports_exact_misreport_probability() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", "");
    let out = run(&["solve", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("5/26"));
}

#[test]
fn solve_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", "");
    let a = run(&["solve", "--config", &cfg]);
    let b = run(&["solve", "--config", &cfg]);
    assert_eq!(a.stdout, b.stdout);
    let s1 = run(&["sweep", "--workers", "1"]);
    let s4 = run(&["sweep", "--workers", "4"]);
    assert_eq!(s1.stdout, s4.stdout);
}

#[test]
fn preset_sweep_rows_all_dominate() {
    let out = run(&["sweep"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "dominates").unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 1782);
    assert!(rows.iter().all(|r| r.split(',').nth(col) == Some("true")));
}

#[test]
fn probe_certifies_every_profile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pair.toml", "num_users = 2\nbudget = 3\n");
    let out = run(&["probe", "--config", &cfg, "--resolution", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["fraction"].as_f64(), Some(1.0), "{report}");
}

#[test]
fn exit_codes_distinguish_regime_and_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let pair = write_config(dir.path(), "pair.toml", "num_users = 2\nbudget = 3\n");
    assert_eq!(run(&["solve", "--config", &pair]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "types = [\"L\"]\nprior = [2]\nalloc = { L = 1 }\naudit_cost = 1\nfine = 1\n").unwrap();
    let out = run(&["solve", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert_eq!(run(&["solve", "--config", "/nonexistent.toml"]).status.code(), Some(1));
}

#[test]
fn ledger_flow_through_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).display().to_string();
    let seed = ["--seed", "7"];
    let ledger = p("ledger");
    let ok = |args: Vec<&str>| {
        let out = run(&args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        stdout(&out)
    };
    ok([&["ledger", "keygen", "--scheme", "toy", "--dir", &ledger][..], &seed].concat());
    let key = p("alice.key");
    ok([&["ledger", "keygen", "--scheme", "toy", "--key-out", &key][..], &seed].concat());
    let pubkey = format!("{key}.pub");
    let coin = ok(["ledger", "mint", "--dir", &ledger, "--recipient", &pubkey, "--coin-id", "1"].into());
    fs::write(p("coin.json"), coin).unwrap();

    let spend = |tag: &str| -> Output {
        let coin_path = p("coin.json");
        let request = ok(["ledger", "spend", "begin", "--dir", &ledger, "--coin", &coin_path, "--goods", tag, "--price", "10"].into());
        let req_path = p(&format!("{tag}.req.json"));
        fs::write(&req_path, request).unwrap();
        let receipt = ok([&["ledger", "spend", "sign", "--key", &key, "--request", &req_path][..], &seed].concat());
        let rec_path = p(&format!("{tag}.receipt.json"));
        fs::write(&rec_path, receipt).unwrap();
        run(&["ledger", "spend", "finalize", "--dir", &ledger, "--receipt", &rec_path])
    };
    let first = spend("bread");
    assert!(first.status.success());
    assert_eq!(serde_json::from_str::<Value>(&stdout(&first)).unwrap()["approved"], true);
    let second = spend("milk");
    assert_eq!(second.status.code(), Some(1));
    let v: Value = serde_json::from_str(&stdout(&second)).unwrap();
    assert_eq!(v["approved"], false);

    let audit: Value = serde_json::from_str(&ok(["ledger", "audit-log", "--dir", &ledger].into())).unwrap();
    assert_eq!(audit["receipts"], 1);
    assert_eq!(audit["all_valid"], true);
}
