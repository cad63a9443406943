use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const CALL: &str = r#"
horizon = 1
arithmetic = "exact"

[market]
mu = 0
sigma = "1/2"
r = 0
s0 = 1

[probability]
p = "1/2"

[schedule]
kind = "classical"

[claim]
kind = "call"
strike = 1
"#;

const DROP: &str = r#"
horizon = 4

[market]
mu = "1/20"
sigma = "1/5"
r = "1/100"
s0 = 100

[probability]
p = 0.5

[schedule]
kind = "drop-k"
k = 2

[claim]
kind = "put"
strike = 100
"#;

fn scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_binfilt")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn one_step_call_prices_at_a_quarter() {
    let dir = TempDir::new().unwrap();
    let s = scenario(dir.path(), "call.toml", CALL);
    let out = dir.path().join("out");
    let o = run(&["price", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("V_0 cash price: 1/4"), "{text}");
    assert!(text.contains("phi_1 = 1/2, psi_1 = -1/4"), "{text}");
    let csv = fs::read_to_string(out.join("valuation.csv")).unwrap();
    assert_eq!(csv, "level,word,discounted_price,cash_price,phi,psi,visible\n0,,1/4,1/4,1/2,-1/4,true\n1,0,0,0,,,\n1,1,1/2,1/2,,,\n");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("valuation.json")).unwrap()).unwrap();
    assert_eq!(json["cash_price"], "1/4");
}

#[test]
fn validate_flags_arbitrage_regime() {
    let dir = TempDir::new().unwrap();
    let s = scenario(dir.path(), "a.toml", &CALL.replace("mu = 0", "mu = 0.6").replace("sigma = \"1/2\"", "sigma = 0.5"));
    let o = run(&["validate", "--scenario", s.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("arbitrage regime"), "{}", stdout(&o));

    let legal = run(&["validate", "--scenario", scenario(dir.path(), "c.toml", CALL).to_str().unwrap()]);
    assert_eq!(legal.status.code(), Some(0));
    assert!(stdout(&legal).contains("fully legal"));
}

#[test]
fn drop_validate_warns_and_risk_neutral_reports_the_defect() {
    let dir = TempDir::new().unwrap();
    let s = scenario(dir.path(), "drop.toml", DROP);
    let o = run(&["validate", "--scenario", s.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("warning: step 2 loses information"), "{}", stdout(&o));

    let out = dir.path().join("rn");
    let o = run(&["risk-neutral", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap(), "--exact"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("note: levels [1] cannot satisfy the condition"), "{}", stdout(&o));
    for n in 0..=4 {
        assert!(out.join(format!("q_level_{n}.csv")).exists());
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
    assert_eq!(json["diagnostics"]["unsatisfiable_levels"], serde_json::json!([1]));
    assert_eq!(json["q"][2]["01"], "0");
}

#[test]
fn errors_exit_two_and_write_nothing() {
    let dir = TempDir::new().unwrap();
    let s = scenario(dir.path(), "bad.toml", &CALL.replace("sigma = \"1/2\"", "sigma = \"-1/2\""));
    let out = dir.path().join("out");
    let o = run(&["price", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.toml:7:9: market.sigma"), "{}", stderr(&o));
    assert!(!out.exists());

    let o = run(&["risk-neutral", "--scenario", scenario(dir.path(), "arb.toml", &CALL.replace("r = 0", "r = 2")).to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no risk-neutral measure"), "{}", stderr(&o));

    let o = run(&["validate", "--scenario", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exact_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let s = scenario(dir.path(), "drop.toml", DROP);
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("run{i}"));
        let o = run(&["price", "--scenario", s.to_str().unwrap(), "--exact", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push((fs::read(out.join("valuation.csv")).unwrap(), fs::read(out.join("valuation.json")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn check_martingale_processes() {
    let dir = TempDir::new().unwrap();
    let s = scenario(dir.path(), "call.toml", CALL);
    let s = s.to_str().unwrap();
    assert_eq!(run(&["check-martingale", "--scenario", s]).status.code(), Some(0));
    let o = run(&["check-martingale", "--scenario", s, "--process", "stock", "--under", "p"]);
    assert_eq!(o.status.code(), Some(0), "mu = 0 makes the stock fair under p = 1/2");

    let biased = scenario(dir.path(), "biased.toml", &CALL.replace("p = \"1/2\"", "p = \"3/4\""));
    let o = run(&["check-martingale", "--scenario", biased.to_str().unwrap(), "--under", "p"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));

    let csv = dir.path().join("constant.csv");
    fs::write(&csv, "n,word,value\n0,,5\n1,0,5\n1,1,5\n").unwrap();
    let arg = format!("csv:{}", csv.display());
    let o = run(&["check-martingale", "--scenario", s, "--process", &arg, "--under", "p"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = run(&["check-martingale", "--scenario", s, "--process", "volume"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn arbitrage_writes_a_strategy() {
    let dir = TempDir::new().unwrap();
    let s = scenario(dir.path(), "a.toml", &CALL.replace("r = 0", "r = \"-1/2\"").replace("horizon = 1", "horizon = 2"));
    let out = dir.path().join("out");
    let o = run(&["arbitrage", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("arbitrage found"), "{}", stdout(&o));
    let strategy = fs::read_to_string(out.join("strategy.csv")).unwrap();
    assert!(strategy.starts_with("n,word,phi,psi\n1,,1,-1\n"), "{strategy}");

    let o = run(&["arbitrage", "--scenario", scenario(dir.path(), "c.toml", CALL).to_str().unwrap()]);
    assert!(stdout(&o).trim_end().ends_with("none"), "{}", stdout(&o));
}

#[test]
fn free_value_override_changes_only_free_entries() {
    let dir = TempDir::new().unwrap();
    let s = scenario(dir.path(), "drop.toml", &DROP.replace("k = 2", "k = 1"));
    let table = dir.path().join("free.csv");
    fs::write(&table, "word,value\n101,1/3\n").unwrap();
    let mut solutions = Vec::new();
    for policy in ["zero".to_string(), format!("table:{}", table.display())] {
        let out = dir.path().join(policy.len().to_string());
        let o =
            run(&["risk-neutral", "--scenario", s.to_str().unwrap(), "--exact", "--free-value", &policy, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1));
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
        solutions.push(json);
    }
    assert_eq!(solutions[0]["Q"], solutions[1]["Q"]);
    assert_eq!(solutions[0]["q"][3]["101"], "0");
    assert_eq!(solutions[1]["q"][3]["101"], "1/3");
}
