//! Binomial asset pricing over generalized filtrations.
//!
//! Time `n` carries the finite space `B_n = {0,1}^n` of price paths with a
//! probability measure, and consecutive times are linked by maps
//! `f_n : B_{n+1} → B_n`. The usual truncation map gives the textbook
//! binomial model. Other maps model an agent who forgets part of the history,
//! for example the digit observed at one step.
//!
//! Every numeric routine is generic over [`Scalar`], so the same code runs in
//! `f64` and in exact rational arithmetic ([`Exact`]).

pub mod binword;
pub mod condexp;
pub mod error;
pub mod exec;
pub mod export;
pub mod filtration;
pub mod market;
pub mod measure;
pub mod riskneutral;
pub mod scalar;
pub mod valuation;

pub use binword::{atom_count, enumerate, BinWord, DEFAULT_T_LIMIT, MAX_T};
pub use condexp::{cond_exp, cond_exp_indicator, import_via, is_martingale, xi_process, AdaptedProcess, MartingaleReport, RandomVariable};
pub use error::{Error, Result};
pub use filtration::{
    compose, is_measure_preserving, is_null_preserving, is_null_reflecting, validate_schedule, FiltMap, FiltrationSchedule, MapKind,
    ScheduleKind, ScheduleReport,
};
pub use market::{
    bond_process, construct_arbitrage, detect_arbitrage_small, discounted_stock, gain_process, is_self_financing, stock_process,
    value_process, ArbitrageCertificate, MarketParams, Regime, Strategy,
};
pub use measure::{product_measure, product_measures, FiniteMeasure, ProbSequence};
pub use riskneutral::{
    check_c_legality, check_u_compatibility, discounted_stock_martingale, martingale_condition_check, risk_neutral_up, solve_classical,
    solve_drop_k, solve_schedule, FreeValuePolicy, RiskNeutralSolution, TransitionKernel,
};
pub use scalar::{Exact, Scalar, Tolerances};
pub use valuation::{price_claim, replicate, verify_replication, Claim, ClaimKind, ValuationResult};
