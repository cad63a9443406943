//! Command bodies. Each returns its verdict plus the files to write; nothing
//! touches the disk until every computation has succeeded.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use binfilt::export::{read_process_csv, solution_json, write_measure_csv, write_process_csv, write_strategy_csv, write_valuation_csv};
use binfilt::market::DETECT_MAX_T;
use binfilt::*;
use serde_json::{json, Value};

use crate::scenario::{ClaimSpec, Scenario};

pub struct Outcome {
    pub ok: bool,
    pub report: String,
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn new(ok: bool, report: String) -> Self {
        Outcome { ok, report, files: Vec::new() }
    }

    fn file(&mut self, name: impl Into<String>, write: impl FnOnce(&mut Vec<u8>) -> binfilt::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.files.push((name.into(), buf));
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.files.push((name.to_string(), text.into_bytes()));
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProcessArg {
    DiscountedStock,
    Stock,
    Bond,
    Csv(PathBuf),
}

impl std::str::FromStr for ProcessArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "discounted-stock" => Ok(ProcessArg::DiscountedStock),
            "stock" => Ok(ProcessArg::Stock),
            "bond" => Ok(ProcessArg::Bond),
            _ => match s.strip_prefix("csv:") {
                Some(path) if !path.is_empty() => Ok(ProcessArg::Csv(PathBuf::from(path))),
                _ => Err(format!("unknown process {s:?}: expected discounted-stock, stock, bond or csv:PATH")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Under {
    P,
    Q,
}

fn regime_line<S: Scalar>(params: &MarketParams<S>) -> String {
    let gap = params.gap();
    match params.regime() {
        Regime::NoArbitrage => format!("|mu - r| = {} < sigma = {}: no-arbitrage precondition holds", num(&gap), num(&params.sigma)),
        Regime::LongStock => {
            format!("|mu - r| = {} >= sigma = {}: arbitrage regime (mu - sigma >= r, hold the stock)", num(&gap), num(&params.sigma))
        }
        Regime::ShortStock => {
            format!("|mu - r| = {} >= sigma = {}: arbitrage regime (mu + sigma <= r, short the stock)", num(&gap), num(&params.sigma))
        }
    }
}

fn require_band<S: Scalar>(params: &MarketParams<S>) -> Result<()> {
    if params.regime() != Regime::NoArbitrage {
        bail!("no risk-neutral measure exists: {}", regime_line(params));
    }
    Ok(())
}

fn physical<S: Scalar>(sc: &Scenario<S>) -> Result<Vec<FiniteMeasure<S>>> {
    Ok(product_measures(&sc.p, sc.horizon)?)
}

/// Exact values as fractions; floats in short form, scientific when tiny.
fn num<S: Scalar>(x: &S) -> String {
    if S::EXACT {
        return x.to_string();
    }
    let v = x.to_f64();
    if v == 0.0 {
        "0".into()
    } else if v.abs() < 1e-4 || v.abs() >= 1e9 {
        format!("{v:.6e}")
    } else {
        format!("{}", (v * 1e12).round() / 1e12)
    }
}

fn claim_label<S: Scalar>(kind: &ClaimKind<S>) -> String {
    match kind {
        ClaimKind::Call { strike } => format!("call, strike {}", num(strike)),
        ClaimKind::Put { strike } => format!("put, strike {}", num(strike)),
        ClaimKind::Digital { strike } => format!("digital, strike {}", num(strike)),
        ClaimKind::Custom => "custom payoff table".into(),
    }
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn word(w: &Option<BinWord>) -> String {
    match w {
        Some(w) if w.is_empty() => "(root)".into(),
        Some(w) => w.to_string(),
        None => "-".into(),
    }
}

pub fn validate<S: Scalar>(sc: &Scenario<S>) -> Result<Outcome> {
    let measures = physical(sc)?;
    let report = validate_schedule(&sc.schedule, &measures, &sc.tol)?;
    let non_trivial = sc.p.is_non_trivial(sc.horizon);
    let regime = sc.params.regime();
    let mut out = String::new();
    writeln!(out, "schedule: {:?}, T = {}", sc.schedule.kind(), sc.horizon)?;
    for s in &report.steps {
        writeln!(
            out,
            "  step {} ({}): null-preserving under P: {}{}",
            s.step,
            s.kind,
            yes(s.null_preserving),
            s.preserving_witness.as_ref().map(|w| format!(" (null target {w} has a charged preimage)")).unwrap_or_default()
        )?;
        if !s.null_reflecting {
            writeln!(
                out,
                "    warning: step {} loses information: target {} is charged but its preimage is P-null; pricing proceeds under the risk-neutral measure",
                s.step,
                word(&s.reflecting_witness)
            )?;
        }
    }
    writeln!(out, "schedule legal under P: {}", yes(report.is_legal()))?;
    writeln!(out, "p non-trivial (some p_i strictly between 0 and 1): {}", yes(non_trivial))?;
    writeln!(out, "{}", regime_line(&sc.params))?;
    let ok = report.is_legal() && non_trivial && regime == Regime::NoArbitrage;
    writeln!(out, "verdict: {}", if ok { "fully legal" } else { "not fully legal" })?;
    let mut outcome = Outcome::new(ok, out);
    let json = json!({
        "legal": report.is_legal(),
        "reflecting": report.is_reflecting(),
        "steps": report.steps,
        "p_non_trivial": non_trivial,
        "regime": format!("{regime:?}"),
        "fully_legal": ok,
    });
    outcome.json("validate.json", &json)?;
    Ok(outcome)
}

pub fn risk_neutral<S: Scalar>(sc: &Scenario<S>) -> Result<Outcome> {
    require_band(&sc.params)?;
    let solution = solve_schedule(&sc.params, &sc.schedule, &sc.policy)?;
    let condition = martingale_condition_check(&solution.measures, &sc.schedule, &sc.params, &sc.tol)?;
    let c = solution.coefficients();
    let mut out = String::new();
    writeln!(out, "risk-neutral up-probability on constrained branches: {}", num(&risk_neutral_up(&sc.params)))?;
    writeln!(out, "coefficients: c1 = {}, c0 = {}", num(&c.c1), num(&c.c0))?;
    let d = &solution.diagnostics;
    writeln!(out, "kernel entries: {} constrained, {} forced by the schedule, {} free", d.constrained, d.forced, d.free)?;
    writeln!(out, "max martingale-condition violation: {}", num(&condition.max_violation()))?;
    for level in condition.levels.iter().filter(|l| !l.max_violation.is_negligible(condition.tolerance)) {
        writeln!(out, "  level {}: violation {} at {}", level.level, num(&level.max_violation), word(&level.worst_atom))?;
    }
    if !d.unsatisfiable_levels.is_empty() {
        writeln!(
            out,
            "note: levels {:?} cannot satisfy the condition for any measure; a forgotten branch forces a zero up-probability one step later",
            d.unsatisfiable_levels
        )?;
    }
    let mut outcome = Outcome::new(condition.holds(), out);
    let p = physical(sc)?;
    outcome.json("solution.json", &solution_json(&solution, Some(&p), &sc.tol)?)?;
    for (n, m) in solution.measures.iter().enumerate() {
        outcome.file(format!("q_level_{n}.csv"), |b| write_measure_csv(b, m))?;
    }
    Ok(outcome)
}

pub fn price<S: Scalar>(sc: &Scenario<S>) -> Result<Outcome> {
    let spec = sc.claim.as_ref().context("the scenario has no [claim] block")?;
    require_band(&sc.params)?;
    let solution = solve_schedule(&sc.params, &sc.schedule, &sc.policy)?;
    let legality = check_c_legality(&solution.measures, &sc.schedule, &sc.tol)?;
    if !legality.is_legal() {
        bail!("the risk-neutral filtration is not legal: steps {:?} are not null-preserving under Q", legality.failing_steps());
    }
    let claim = match spec {
        ClaimSpec::OnStock(kind) => Claim::on_stock(kind.clone(), &stock_process(&sc.params, &sc.schedule)?)?,
        ClaimSpec::Payoff(payoff) => Claim::custom(payoff.clone()),
    };
    let result = replicate(&claim, &solution, &sc.schedule, &sc.tol)?;
    let check = verify_replication(&result, &claim, &solution, &sc.schedule, &sc.tol)?;
    let v0 = result.prices.cash.get(0).at(0).clone();
    let mut out = String::new();
    writeln!(out, "claim: {}", claim_label(&claim.kind))?;
    writeln!(out, "V_0 cash price: {}", num(&v0))?;
    writeln!(out, "initial hedge: phi_1 = {}, psi_1 = {}", num(result.strategy.phi(1).at(0)), num(result.strategy.psi(1).at(0)))?;
    let worst = if check.terminal_error > S::zero() { format!(" at {}", word(&check.terminal_worst_atom)) } else { String::new() };
    writeln!(out, "replication: terminal error {}{worst}, price error {}", num(&check.terminal_error), num(&check.price_error))?;
    writeln!(out, "self-financing on visible atoms: {}", yes(check.self_financing.holds))?;
    if !check.vacuous_atoms.is_empty() {
        writeln!(out, "note: {} terminal atoms carry no Q-mass and are not replicated", check.vacuous_atoms.len())?;
    }
    let mut outcome = Outcome::new(check.holds(), out);
    outcome.file("valuation.csv", |b| write_valuation_csv(b, &result))?;
    let json = json!({
        "cash_price": v0.to_json(),
        "discounted_price": result.prices.discounted.get(0).at(0).to_json(),
        "replication": {
            "holds": check.holds(),
            "terminal_error": check.terminal_error.to_json(),
            "price_error": check.price_error.to_json(),
            "self_financing": check.self_financing.holds,
            "vacuous_atoms": check.vacuous_atoms.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
        },
    });
    outcome.json("valuation.json", &json)?;
    Ok(outcome)
}

pub fn arbitrage<S: Scalar>(sc: &Scenario<S>) -> Result<Outcome> {
    let measures = physical(sc)?;
    let (up, down) = sc.params.excess_returns();
    let sign = |x: &S| {
        if *x > S::zero() {
            "positive"
        } else if *x < S::zero() {
            "negative"
        } else {
            "zero"
        }
    };
    let mut out = String::new();
    writeln!(
        out,
        "one-step gain per share bought: mu + sigma - r = {} ({}) after an up move, mu - sigma - r = {} ({}) after a down move",
        num(&up),
        sign(&up),
        num(&down),
        sign(&down)
    )?;
    writeln!(out, "{}", regime_line(&sc.params))?;
    let certificate = if sc.params.regime() != Regime::NoArbitrage {
        construct_arbitrage(&sc.params, &sc.schedule, &measures, &sc.tol)?
    } else if sc.horizon <= DETECT_MAX_T {
        detect_arbitrage_small(&sc.params, &sc.schedule, &measures, &sc.tol)?
    } else {
        writeln!(out, "exhaustive search skipped: T = {} exceeds {DETECT_MAX_T}", sc.horizon)?;
        None
    };
    let mut outcome = Outcome::new(true, String::new());
    match certificate {
        Some(cert) if cert.is_arbitrage() => {
            let w = cert.witness.as_ref().expect("an arbitrage has a witness");
            writeln!(
                out,
                "arbitrage found: min gain {} >= 0; gain {} at step {}, atom {}, with probability {}",
                num(&cert.min_gain),
                num(&w.gain),
                w.step,
                word(&Some(w.atom)),
                num(&w.probability)
            )?;
            outcome.file("strategy.csv", |b| write_strategy_csv(b, &cert.strategy))?;
            outcome.file("gains.csv", |b| write_process_csv(b, &cert.gains))?;
        }
        Some(cert) => {
            writeln!(
                out,
                "none: the candidate strategy never loses (min gain {}) but no positive gain has positive probability under P",
                num(&cert.min_gain)
            )?;
        }
        None => writeln!(out, "none")?,
    }
    outcome.report = out;
    Ok(outcome)
}

pub fn check_martingale<S: Scalar>(sc: &Scenario<S>, process: &ProcessArg, under: Under) -> Result<Outcome> {
    let x = match process {
        ProcessArg::DiscountedStock => discounted_stock(&sc.params, &sc.schedule)?,
        ProcessArg::Stock => stock_process(&sc.params, &sc.schedule)?,
        ProcessArg::Bond => bond_process(&sc.params, &sc.schedule)?,
        ProcessArg::Csv(path) => {
            let input = std::fs::File::open(path).with_context(|| format!("cannot open process {}", path.display()))?;
            read_process_csv(input, sc.horizon).with_context(|| format!("in {}", path.display()))?
        }
    };
    let measures = match under {
        Under::P => physical(sc)?,
        Under::Q => {
            require_band(&sc.params)?;
            solve_schedule(&sc.params, &sc.schedule, &sc.policy)?.measures
        }
    };
    let report = is_martingale(&x, &sc.schedule, &measures, &sc.tol)?;
    let mut out = String::new();
    let mut csv = String::from("step,max_deviation,worst_atom,holds\n");
    writeln!(out, "{:>4}  {:>24}  {:>12}  status", "step", "max deviation", "worst atom")?;
    for s in &report.steps {
        let status = match &s.error {
            Some(e) => format!("error: {e}"),
            None => (if s.holds { "ok" } else { "FAIL" }).to_string(),
        };
        writeln!(out, "{:>4}  {:>24}  {:>12}  {status}", s.step, num(&s.max_deviation), word(&s.worst_atom))?;
        let atom = s.worst_atom.as_ref().map(|w| w.to_string()).unwrap_or_default();
        writeln!(csv, "{},{},{},{}", s.step, s.max_deviation, atom, s.holds)?;
    }
    writeln!(out, "martingale under {}: {}", if under == Under::P { "P" } else { "Q" }, yes(report.holds()))?;
    let mut outcome = Outcome::new(report.holds(), out);
    outcome.files.push(("martingale.csv".into(), csv.into_bytes()));
    Ok(outcome)
}
