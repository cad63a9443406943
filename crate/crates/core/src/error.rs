use thiserror::Error;

use crate::binword::BinWord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("level {level} exceeds the dense capacity of {max} binary digits")]
    Capacity { level: usize, max: usize },

    #[error("level mismatch: expected {expected}, found {found}")]
    LevelMismatch { expected: usize, found: usize },

    #[error("invalid binary digit {0} (expected 0 or 1)")]
    InvalidDigit(u8),

    #[error("cannot parse {0:?} as a binary word")]
    ParseWord(String),

    #[error("cannot parse {0:?} as a number")]
    ParseNumber(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid probability p_{index} = {value} (must lie in [0, 1])")]
    InvalidProbability { index: usize, value: String },

    #[error("probability sequence has {available} entries but level {requested} was requested")]
    SequenceTooShort { available: usize, requested: usize },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("cannot compose maps: {0}")]
    BrokenChain(String),

    #[error("map B_{from} -> B_{to} is not null-preserving: target atom {atom:?} is null but its preimage is not")]
    NotNullPreserving { from: usize, to: usize, atom: BinWord },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid market parameters: {0}")]
    InvalidParams(String),

    #[error("no risk-neutral measure: |mu - r| = {gap} >= sigma = {sigma} (arbitrage regime)")]
    NoRiskNeutral { gap: String, sigma: String },

    #[error("schedule step {step} is {kind}; the risk-neutral solver supports full and drop steps only")]
    UnsupportedStep { step: usize, kind: String },

    #[error("infeasible kernel at level {level}, parent atom {atom:?}: both children are invisible")]
    Infeasible { level: usize, atom: BinWord },

    #[error("schedule step {step} does not factor through truncation (f(a0) != f(a1) at {atom:?})")]
    NonFactorizable { step: usize, atom: BinWord },

    #[error("risk-neutral filtration is not a legal Prob-functor: step {step} fails null preservation at {atom:?}")]
    IllegalFiltration { step: usize, atom: BinWord },

    #[error("horizon mismatch: expected T = {expected}, found {found}")]
    HorizonMismatch { expected: usize, found: usize },

    #[error("invalid claim: {0}")]
    InvalidClaim(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
