//! The binomial stock/bond market over a filtration schedule.
//!
//! `S_0 = s_0`, `S_{n+1} = (S_n ∘ f_n)(1 + μ + σ ξ_{n+1})` and
//! `b_{n+1} = (b_n ∘ f_n)(1 + r)`. A strategy holds `φ_n` shares and `ψ_n`
//! bonds over `(n-1, n]`, decided on `B_{n-1}`.

use crate::binword::{atom_count, BinWord};
use crate::condexp::{AdaptedProcess, RandomVariable};
use crate::error::{Error, Result};
use crate::exec;
use crate::filtration::FiltrationSchedule;
use crate::measure::FiniteMeasure;
use crate::scalar::{Scalar, Tolerances};

/// Largest horizon accepted by [`detect_arbitrage_small`].
pub const DETECT_MAX_T: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams<S> {
    pub mu: S,
    pub sigma: S,
    pub r: S,
    pub s0: S,
}

/// Where `r` sits relative to the band `(μ - σ, μ + σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `|μ - r| < σ`.
    NoArbitrage,
    /// `r <= μ - σ`: borrow and hold the stock.
    LongStock,
    /// `r >= μ + σ`: short the stock and lend.
    ShortStock,
}

impl<S: Scalar> MarketParams<S> {
    pub fn new(mu: S, sigma: S, r: S, s0: S) -> Result<Self> {
        let params = MarketParams { mu, sigma, r, s0 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let one = S::one();
        if self.sigma <= S::zero() {
            return Err(Error::InvalidParams(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.mu <= self.sigma.clone() - one.clone() {
            return Err(Error::InvalidParams(format!(
                "mu must exceed sigma - 1 to keep prices positive, got mu = {}, sigma = {}",
                self.mu, self.sigma
            )));
        }
        if self.r <= -one {
            return Err(Error::InvalidParams(format!("r must exceed -1, got {}", self.r)));
        }
        if self.s0 <= S::zero() {
            return Err(Error::InvalidParams(format!("s0 must be positive, got {}", self.s0)));
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        if self.r <= self.mu.clone() - self.sigma.clone() {
            Regime::LongStock
        } else if self.r >= self.mu.clone() + self.sigma.clone() {
            Regime::ShortStock
        } else {
            Regime::NoArbitrage
        }
    }

    /// `|μ - r|`.
    pub fn gap(&self) -> S {
        (self.mu.clone() - self.r.clone()).abs()
    }

    /// One-period excess returns `μ + σξ - r` for `ξ = +1` and `ξ = -1`.
    pub fn excess_returns(&self) -> (S, S) {
        let base = self.mu.clone() - self.r.clone();
        (base.clone() + self.sigma.clone(), base - self.sigma.clone())
    }

    /// `1 + μ + σξ` for the digit `d` (`ξ = 2d - 1`).
    pub fn growth(&self, d: u8) -> S {
        let shock = if d == 1 { self.sigma.clone() } else { -self.sigma.clone() };
        S::one() + self.mu.clone() + shock
    }

    pub fn to_f64(&self) -> MarketParams<f64> {
        MarketParams { mu: self.mu.to_f64(), sigma: self.sigma.to_f64(), r: self.r.to_f64(), s0: self.s0.to_f64() }
    }
}

fn check_horizon<S: Scalar>(process: &AdaptedProcess<S>, schedule: &FiltrationSchedule) -> Result<()> {
    if process.horizon() != schedule.horizon() {
        return Err(Error::HorizonMismatch { expected: schedule.horizon(), found: process.horizon() });
    }
    Ok(())
}

pub fn stock_process<S: Scalar>(params: &MarketParams<S>, schedule: &FiltrationSchedule) -> Result<AdaptedProcess<S>> {
    params.validate()?;
    scaled_recursion(params.s0.clone(), params.growth(1), params.growth(0), schedule)
}

/// Computed through the recursion; the result is `(1 + r)^n` under any maps.
pub fn bond_process<S: Scalar>(params: &MarketParams<S>, schedule: &FiltrationSchedule) -> Result<AdaptedProcess<S>> {
    let growth = S::one() + params.r.clone();
    let mut entries = vec![RandomVariable::constant(0, S::one())?];
    for (n, f) in schedule.maps().iter().enumerate() {
        let prev = &entries[n];
        let values = exec::tabulate(atom_count(n + 1), |b| prev.at(f.apply_index(b)).clone() * growth.clone());
        entries.push(RandomVariable::new(n + 1, values)?);
    }
    AdaptedProcess::new(entries)
}

/// `S'_n = S_n / b_n`, built by the same recursion with discounted growth
/// factors so that no per-atom division is needed.
pub fn discounted_stock<S: Scalar>(params: &MarketParams<S>, schedule: &FiltrationSchedule) -> Result<AdaptedProcess<S>> {
    params.validate()?;
    let denom = S::one() + params.r.clone();
    scaled_recursion(params.s0.clone(), params.growth(1) / denom.clone(), params.growth(0) / denom, schedule)
}

fn scaled_recursion<S: Scalar>(start: S, up: S, down: S, schedule: &FiltrationSchedule) -> Result<AdaptedProcess<S>> {
    let mut entries = vec![RandomVariable::constant(0, start)?];
    for (n, f) in schedule.maps().iter().enumerate() {
        let prev = &entries[n];
        let values = exec::tabulate(atom_count(n + 1), |b| {
            let g = if b & 1 == 1 { &up } else { &down };
            prev.at(f.apply_index(b)).clone() * g.clone()
        });
        entries.push(RandomVariable::new(n + 1, values)?);
    }
    AdaptedProcess::new(entries)
}

/// `(φ_n, ψ_n)` for `n = 1..=T`; both live on `B_{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy<S> {
    phi: Vec<RandomVariable<S>>,
    psi: Vec<RandomVariable<S>>,
}

impl<S: Scalar> Strategy<S> {
    pub fn new(phi: Vec<RandomVariable<S>>, psi: Vec<RandomVariable<S>>) -> Result<Self> {
        if phi.len() != psi.len() {
            return Err(Error::HorizonMismatch { expected: phi.len(), found: psi.len() });
        }
        for (i, (x, y)) in phi.iter().zip(&psi).enumerate() {
            for v in [x, y] {
                if v.level() != i {
                    return Err(Error::LevelMismatch { expected: i, found: v.level() });
                }
            }
        }
        Ok(Strategy { phi, psi })
    }

    pub fn zero(horizon: usize) -> Result<Self> {
        let zeros: Vec<_> = (0..horizon).map(RandomVariable::zero).collect::<Result<_>>()?;
        Ok(Strategy { phi: zeros.clone(), psi: zeros })
    }

    pub fn horizon(&self) -> usize {
        self.phi.len()
    }

    /// `φ_n`, 1-based.
    pub fn phi(&self, n: usize) -> &RandomVariable<S> {
        &self.phi[n - 1]
    }

    /// `ψ_n`, 1-based.
    pub fn psi(&self, n: usize) -> &RandomVariable<S> {
        &self.psi[n - 1]
    }

    pub fn phi_mut(&mut self, n: usize) -> &mut RandomVariable<S> {
        &mut self.phi[n - 1]
    }
}

fn check_market<S: Scalar>(
    strategy: &Strategy<S>,
    stock: &AdaptedProcess<S>,
    bond: &AdaptedProcess<S>,
    schedule: &FiltrationSchedule,
) -> Result<()> {
    check_horizon(stock, schedule)?;
    check_horizon(bond, schedule)?;
    if strategy.horizon() != schedule.horizon() {
        return Err(Error::HorizonMismatch { expected: schedule.horizon(), found: strategy.horizon() });
    }
    Ok(())
}

/// Holdings `S_n φ_{n+1} + b_n ψ_{n+1}` bought at time `n`; zero at `n = T`.
fn cost<S: Scalar>(strategy: &Strategy<S>, stock: &AdaptedProcess<S>, bond: &AdaptedProcess<S>, n: usize) -> Vec<S> {
    if n == strategy.horizon() {
        return vec![S::zero(); atom_count(n)];
    }
    let (phi, psi) = (strategy.phi(n + 1), strategy.psi(n + 1));
    exec::tabulate(atom_count(n), |a| stock.get(n).at(a).clone() * phi.at(a).clone() + bond.get(n).at(a).clone() * psi.at(a).clone())
}

/// `V_0 = S_0 φ_1 + b_0 ψ_1`, `V_n = S_n (φ_n ∘ f_{n-1}) + b_n (ψ_n ∘ f_{n-1})`.
pub fn value_process<S: Scalar>(
    strategy: &Strategy<S>,
    stock: &AdaptedProcess<S>,
    bond: &AdaptedProcess<S>,
    schedule: &FiltrationSchedule,
) -> Result<AdaptedProcess<S>> {
    check_market(strategy, stock, bond, schedule)?;
    let horizon = schedule.horizon();
    let mut entries = Vec::with_capacity(horizon + 1);
    if horizon == 0 {
        entries.push(RandomVariable::zero(0)?);
    } else {
        entries.push(RandomVariable::new(0, cost(strategy, stock, bond, 0))?);
    }
    for n in 1..=horizon {
        let f = schedule.map(n - 1);
        let (phi, psi) = (strategy.phi(n), strategy.psi(n));
        let values = exec::tabulate(atom_count(n), |x| {
            let b = f.apply_index(x);
            stock.get(n).at(x).clone() * phi.at(b).clone() + bond.get(n).at(x).clone() * psi.at(b).clone()
        });
        entries.push(RandomVariable::new(n, values)?);
    }
    AdaptedProcess::new(entries)
}

/// `G_0 = -V_0`, `G_n = V_n - (S_n φ_{n+1} + b_n ψ_{n+1})` with `φ_{T+1} = ψ_{T+1} = 0`.
pub fn gain_process<S: Scalar>(
    strategy: &Strategy<S>,
    stock: &AdaptedProcess<S>,
    bond: &AdaptedProcess<S>,
    schedule: &FiltrationSchedule,
) -> Result<AdaptedProcess<S>> {
    let value = value_process(strategy, stock, bond, schedule)?;
    let horizon = schedule.horizon();
    let mut entries = vec![value.get(0).map(|v| -v.clone())];
    for n in 1..=horizon {
        let c = cost(strategy, stock, bond, n);
        let v = value.get(n);
        entries.push(RandomVariable::new(n, v.values().iter().zip(c).map(|(x, y)| x.clone() - y).collect())?);
    }
    AdaptedProcess::new(entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfFinancingStep<S> {
    pub step: usize,
    pub max_deviation: S,
    pub worst_atom: Option<BinWord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfFinancingReport<S> {
    pub steps: Vec<SelfFinancingStep<S>>,
    pub holds: bool,
}

/// Checks `S_n φ_{n+1} + b_n ψ_{n+1} = V_n` for `n = 1..T-1`.
///
/// `mask[n][a]`, when given, restricts the check at level `n` to the marked atoms.
pub fn is_self_financing<S: Scalar>(
    strategy: &Strategy<S>,
    stock: &AdaptedProcess<S>,
    bond: &AdaptedProcess<S>,
    schedule: &FiltrationSchedule,
    mask: Option<&[Vec<bool>]>,
    tol: &Tolerances,
) -> Result<SelfFinancingReport<S>> {
    let value = value_process(strategy, stock, bond, schedule)?;
    let horizon = schedule.horizon();
    let mut steps = Vec::new();
    for n in 1..horizon {
        let c = RandomVariable::new(n, cost(strategy, stock, bond, n))?;
        let (max_deviation, worst_atom) = c.max_deviation(value.get(n), |a| mask.is_none_or(|m| m[n][a]));
        steps.push(SelfFinancingStep { step: n, max_deviation, worst_atom });
    }
    let holds = steps.iter().all(|s| s.max_deviation.is_negligible(tol.equality));
    Ok(SelfFinancingReport { steps, holds })
}

/// An atom where a gain is strictly positive with positive probability.
#[derive(Debug, Clone, PartialEq)]
pub struct GainWitness<S> {
    pub step: usize,
    pub atom: BinWord,
    pub gain: S,
    pub probability: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArbitrageCertificate<S> {
    pub strategy: Strategy<S>,
    pub gains: AdaptedProcess<S>,
    /// Smallest gain over every atom and time `0..=T`.
    pub min_gain: S,
    /// Smallest gain over atoms of positive probability.
    pub min_gain_charged: S,
    pub witness: Option<GainWitness<S>>,
    /// Gains are only inspected up to this time.
    pub horizon_checked: usize,
}

impl<S: Scalar> ArbitrageCertificate<S> {
    /// Gains are almost surely non-negative and some gain is positive with
    /// positive probability, for times up to `horizon_checked`.
    pub fn is_arbitrage(&self) -> bool {
        self.witness.is_some() && self.min_gain_charged >= S::zero()
    }

    fn from_gains(strategy: Strategy<S>, gains: AdaptedProcess<S>, measures: &[FiniteMeasure<S>], tol: &Tolerances) -> Self {
        let mut min_gain: Option<S> = None;
        let mut min_gain_charged: Option<S> = None;
        let mut witness = None;
        for (n, g) in gains.entries().iter().enumerate() {
            for (a, v) in g.values().iter().enumerate() {
                if min_gain.as_ref().is_none_or(|m| v < m) {
                    min_gain = Some(v.clone());
                }
                if measures[n].is_null_atom(a, tol) {
                    continue;
                }
                if min_gain_charged.as_ref().is_none_or(|m| v < m) {
                    min_gain_charged = Some(v.clone());
                }
                if witness.is_none() && *v > S::zero() && !v.is_negligible(tol.null) {
                    witness = Some(GainWitness {
                        step: n,
                        atom: BinWord::from_index(n, a).expect("in range"),
                        gain: v.clone(),
                        probability: measures[n].weight_at(a).clone(),
                    });
                }
            }
        }
        let horizon_checked = gains.horizon();
        ArbitrageCertificate {
            strategy,
            gains,
            min_gain: min_gain.unwrap_or_else(S::zero),
            min_gain_charged: min_gain_charged.unwrap_or_else(S::zero),
            witness,
            horizon_checked,
        }
    }
}

fn check_measures<S: Scalar>(schedule: &FiltrationSchedule, measures: &[FiniteMeasure<S>]) -> Result<()> {
    if measures.len() != schedule.horizon() + 1 {
        return Err(Error::HorizonMismatch { expected: schedule.horizon() + 1, found: measures.len() });
    }
    for (n, m) in measures.iter().enumerate() {
        if m.level() != n {
            return Err(Error::LevelMismatch { expected: n, found: m.level() });
        }
    }
    Ok(())
}

/// Zero-cost strategy `ψ_{n+1} = -(S_n / b_n) φ_{n+1}` for the given share holdings.
fn zero_cost_strategy<S: Scalar>(phi: Vec<RandomVariable<S>>, stock: &AdaptedProcess<S>, bond: &AdaptedProcess<S>) -> Result<Strategy<S>> {
    let psi = phi
        .iter()
        .enumerate()
        .map(|(n, p)| {
            let ratio = stock.get(n).zip_with(bond.get(n), |s, b| s.clone() / b.clone())?;
            p.zip_with(&ratio, |x, y| -(x.clone() * y.clone()))
        })
        .collect::<Result<_>>()?;
    Strategy::new(phi, psi)
}

/// The borrow-and-buy (or short-and-lend) strategy for `|μ - r| >= σ`.
///
/// Returns `None` inside the no-arbitrage band. The certificate records the
/// realised gains; `is_arbitrage` additionally needs a positive-probability
/// positive gain, which can fail for degenerate `p`.
pub fn construct_arbitrage<S: Scalar>(
    params: &MarketParams<S>,
    schedule: &FiltrationSchedule,
    measures: &[FiniteMeasure<S>],
    tol: &Tolerances,
) -> Result<Option<ArbitrageCertificate<S>>> {
    params.validate()?;
    check_measures(schedule, measures)?;
    let sign = match params.regime() {
        Regime::NoArbitrage => return Ok(None),
        Regime::LongStock => S::one(),
        Regime::ShortStock => -S::one(),
    };
    let stock = stock_process(params, schedule)?;
    let bond = bond_process(params, schedule)?;
    let phi = (0..schedule.horizon()).map(|n| RandomVariable::constant(n, sign.clone())).collect::<Result<_>>()?;
    let strategy = zero_cost_strategy(phi, &stock, &bond)?;
    let gains = gain_process(&strategy, &stock, &bond, schedule)?;
    Ok(Some(ArbitrageCertificate::from_gains(strategy, gains, measures, tol)))
}

/// Exhaustive search over zero-cost strategies with `φ ∈ {-1, 0, 1}` per atom.
///
/// For such strategies `G_n` on `f_{n-1}^{-1}(b)` is `(μ + σξ_n - r) S_{n-1}(b) φ_n(b)`,
/// so the gain on each block depends on one holding only. An arbitrage exists
/// in the family iff some single block does, which keeps the search linear
/// in the number of atoms. The returned strategy is re-evaluated through
/// [`gain_process`].
pub fn detect_arbitrage_small<S: Scalar>(
    params: &MarketParams<S>,
    schedule: &FiltrationSchedule,
    measures: &[FiniteMeasure<S>],
    tol: &Tolerances,
) -> Result<Option<ArbitrageCertificate<S>>> {
    params.validate()?;
    check_measures(schedule, measures)?;
    let horizon = schedule.horizon();
    if horizon > DETECT_MAX_T {
        return Err(Error::Capacity { level: horizon, max: DETECT_MAX_T });
    }
    let stock = stock_process(params, schedule)?;
    let bond = bond_process(params, schedule)?;
    let (up, down) = params.excess_returns();
    for n in 1..=horizon {
        let f = schedule.map(n - 1);
        for b in 0..atom_count(n - 1) {
            let charged: Vec<&S> = f
                .preimage_indices(b)
                .iter()
                .filter(|&&x| !measures[n].is_null_atom(x as usize, tol))
                .map(|&x| if x & 1 == 1 { &up } else { &down })
                .collect();
            for sign in [S::one(), -S::one()] {
                let gains: Vec<S> = charged.iter().map(|&e| e.clone() * sign.clone() * stock.get(n - 1).at(b).clone()).collect();
                let nonneg = gains.iter().all(|g| *g >= S::zero() || g.is_negligible(tol.null));
                let positive = gains.iter().any(|g| *g > S::zero() && !g.is_negligible(tol.null));
                if nonneg && positive {
                    let mut phi: Vec<RandomVariable<S>> = (0..horizon).map(RandomVariable::zero).collect::<Result<_>>()?;
                    let mut values = phi[n - 1].clone().into_values();
                    values[b] = sign.clone();
                    phi[n - 1] = RandomVariable::new(n - 1, values)?;
                    let strategy = zero_cost_strategy(phi, &stock, &bond)?;
                    let gains = gain_process(&strategy, &stock, &bond, schedule)?;
                    return Ok(Some(ArbitrageCertificate::from_gains(strategy, gains, measures, tol)));
                }
            }
        }
    }
    Ok(None)
}
