//! CSV and JSON interchange.
//!
//! Headers are fixed:
//!
//! | table          | columns                                                        |
//! |----------------|----------------------------------------------------------------|
//! | measure        | `word,weight`                                                  |
//! | random variable| `word,value`                                                   |
//! | process        | `n,word,value`                                                 |
//! | strategy       | `n,word,phi,psi` (word on level `n - 1`)                       |
//! | valuation      | `level,word,discounted_price,cash_price,phi,psi,visible`       |
//!
//! The empty word (level 0) is written as an empty field. Numbers use the
//! backend's `Display`, so exact runs print fractions such as `3/10`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde_json::{json, Map, Value};

use crate::binword::{atom_count, BinWord};
use crate::condexp::{AdaptedProcess, RandomVariable};
use crate::error::{Error, Result};
use crate::market::Strategy;
use crate::measure::FiniteMeasure;
use crate::riskneutral::RiskNeutralSolution;
use crate::scalar::{Scalar, Tolerances};
use crate::valuation::ValuationResult;

fn word_label(level: usize, index: usize) -> String {
    BinWord::from_index(level, index).expect("in range").to_string()
}

pub fn write_measure_csv<S: Scalar>(out: impl Write, measure: &FiniteMeasure<S>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["word", "weight"])?;
    for (i, x) in measure.weights().iter().enumerate() {
        w.write_record([word_label(measure.level(), i), x.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_random_variable_csv<S: Scalar>(out: impl Write, v: &RandomVariable<S>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["word", "value"])?;
    for (i, x) in v.values().iter().enumerate() {
        w.write_record([word_label(v.level(), i), x.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_process_csv<S: Scalar>(out: impl Write, process: &AdaptedProcess<S>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "word", "value"])?;
    for (n, v) in process.entries().iter().enumerate() {
        for (i, x) in v.values().iter().enumerate() {
            w.write_record([n.to_string(), word_label(n, i), x.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_strategy_csv<S: Scalar>(out: impl Write, strategy: &Strategy<S>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "word", "phi", "psi"])?;
    for n in 1..=strategy.horizon() {
        let (phi, psi) = (strategy.phi(n), strategy.psi(n));
        for i in 0..atom_count(n - 1) {
            w.write_record([n.to_string(), word_label(n - 1, i), phi.at(i).to_string(), psi.at(i).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per atom and level. `phi`/`psi` are the holdings chosen at that
/// node (empty at the horizon).
pub fn write_valuation_csv<S: Scalar>(out: impl Write, result: &ValuationResult<S>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "word", "discounted_price", "cash_price", "phi", "psi", "visible"])?;
    let horizon = result.strategy.horizon();
    for n in 0..=horizon {
        let (disc, cash) = (result.prices.discounted.get(n), result.prices.cash.get(n));
        for i in 0..atom_count(n) {
            let (phi, psi, visible) = if n < horizon {
                (
                    result.strategy.phi(n + 1).at(i).to_string(),
                    result.strategy.psi(n + 1).at(i).to_string(),
                    result.visible[n][i].to_string(),
                )
            } else {
                (String::new(), String::new(), String::new())
            };
            w.write_record([n.to_string(), word_label(n, i), disc.at(i).to_string(), cash.at(i).to_string(), phi, psi, visible])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn level_map<S: Scalar>(level: usize, values: &[S]) -> Value {
    let map: Map<String, Value> = values.iter().enumerate().map(|(i, x)| (word_label(level, i), x.to_json())).collect();
    Value::Object(map)
}

/// `{"q": [...], "Q": [...], "free_parameters": [...], "diagnostics": {...}}`.
///
/// Both `q` and `Q` are indexed by level; `q[0]` is empty since the kernel
/// starts at level 1.
pub fn solution_json<S: Scalar>(solution: &RiskNeutralSolution<S>, p: Option<&[FiniteMeasure<S>]>, tol: &Tolerances) -> Result<Value> {
    let horizon = solution.horizon();
    let mut q = vec![Value::Object(Map::new())];
    q.extend((1..=horizon).map(|k| level_map(k, solution.kernel.q(k).values())));
    let measures: Vec<Value> = solution.measures.iter().map(|m| level_map(m.level(), m.weights())).collect();
    let free: Vec<Value> = solution
        .free_parameters
        .iter()
        .map(|f| json!({"level": f.level, "atom": f.atom.to_string(), "value": f.value.to_json(), "provenance": f.provenance.as_str()}))
        .collect();
    let d = &solution.diagnostics;
    let mut diagnostics = json!({
        "constrained_entries": d.constrained,
        "forced_entries": d.forced,
        "free_entries": d.free,
        "unsatisfiable_levels": d.unsatisfiable_levels,
    });
    if let Some(p) = p {
        let levels: Vec<Value> = solution
            .equivalence_report(p, tol)?
            .iter()
            .map(|l| {
                json!({
                    "level": l.level,
                    "equivalent": l.equivalent(),
                    "p_positive_q_zero": l.p_only.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
                    "q_positive_p_zero": l.q_only.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
                })
            })
            .collect();
        diagnostics["equivalence"] = Value::Array(levels);
    }
    Ok(json!({"q": q, "Q": measures, "free_parameters": free, "diagnostics": diagnostics}))
}

/// Reads `word,value` rows.
pub fn read_word_values<S: Scalar>(input: impl Read) -> Result<Vec<(BinWord, S)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::InvalidClaim(format!("expected columns word,value; got {:?}", headers.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = line + 2;
        let word: BinWord = record.get(0).unwrap_or("").parse().map_err(|e| Error::InvalidClaim(format!("row {row}: {e}")))?;
        let value = S::parse_literal(record.get(1).unwrap_or("")).map_err(|e| Error::InvalidClaim(format!("row {row}: {e}")))?;
        rows.push((word, value));
    }
    Ok(rows)
}

/// A full table on one level; every atom must appear exactly once.
pub fn read_random_variable_csv<S: Scalar>(input: impl Read, level: usize) -> Result<RandomVariable<S>> {
    fill_level(level, read_word_values::<S>(input)?)
}

/// `n,word,value` rows covering every atom of every level `0..=horizon`.
pub fn read_process_csv<S: Scalar>(input: impl Read, horizon: usize) -> Result<AdaptedProcess<S>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.len() < 3 {
        return Err(Error::InvalidClaim(format!("expected columns n,word,value; got {:?}", headers.iter().collect::<Vec<_>>())));
    }
    let mut levels: Vec<Vec<(BinWord, S)>> = vec![Vec::new(); horizon + 1];
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = line + 2;
        let bad = |e: String| Error::InvalidClaim(format!("row {row}: {e}"));
        let n: usize = record.get(0).unwrap_or("").parse().map_err(|e| bad(format!("bad step: {e}")))?;
        if n > horizon {
            return Err(bad(format!("step {n} exceeds horizon {horizon}")));
        }
        let word: BinWord = record.get(1).unwrap_or("").parse().map_err(|e| bad(format!("{e}")))?;
        let value = S::parse_literal(record.get(2).unwrap_or("")).map_err(|e| bad(e.to_string()))?;
        levels[n].push((word, value));
    }
    let entries = levels.into_iter().enumerate().map(|(n, rows)| fill_level(n, rows)).collect::<Result<_>>()?;
    AdaptedProcess::new(entries)
}

fn fill_level<S: Scalar>(level: usize, rows: Vec<(BinWord, S)>) -> Result<RandomVariable<S>> {
    let mut values: Vec<Option<S>> = vec![None; atom_count(level)];
    for (word, value) in rows {
        if word.len() != level {
            return Err(Error::InvalidClaim(format!("word {word} has length {}, expected {level}", word.len())));
        }
        if values[word.index()].replace(value).is_some() {
            return Err(Error::InvalidClaim(format!("word {word} listed twice")));
        }
    }
    let missing: Vec<String> = values.iter().enumerate().filter(|(_, v)| v.is_none()).map(|(i, _)| word_label(level, i)).take(5).collect();
    if !missing.is_empty() {
        return Err(Error::InvalidClaim(format!("missing words on level {level}, e.g. {}", missing.join(", "))));
    }
    RandomVariable::new(level, values.into_iter().map(Option::unwrap).collect())
}

/// A partial `word,value` table keyed by word; duplicates are rejected.
pub fn read_word_table<S: Scalar>(input: impl Read) -> Result<BTreeMap<BinWord, S>> {
    let mut table = BTreeMap::new();
    for (word, value) in read_word_values(input)? {
        if table.insert(word, value).is_some() {
            return Err(Error::InvalidClaim(format!("word {word} listed twice")));
        }
    }
    Ok(table)
}
