//! Pricing claims under a solved risk-neutral filtration, and replicating them.
//!
//! A claim `Y` on `B_T` has discounted price `Y_n = E(b_T^{-1} Y)` along the
//! composite arrow `B_T → B_n`, computed step by step. Replication works
//! backwards with one-step hedges. Every schedule step is written as
//! `f_n = g_n ∘ f_full`, and hedges are only determined on the visible
//! region `g_n(B_n)`.

use crate::binword::{atom_count, BinWord};
use crate::condexp::{cond_exp, AdaptedProcess, RandomVariable};
use crate::error::{Error, Result};
use crate::exec;
use crate::filtration::FiltrationSchedule;
use crate::market::{bond_process, is_self_financing, stock_process, value_process, SelfFinancingReport, Strategy};
use crate::riskneutral::{check_c_legality, RiskNeutralSolution};
use crate::scalar::{Scalar, Tolerances};

/// How a payoff was specified. Only used for reporting.
#[derive(Debug, Clone, PartialEq)]
pub enum ClaimKind<S> {
    /// `max(S_T - K, 0)`.
    Call {
        strike: S,
    },
    /// `max(K - S_T, 0)`.
    Put {
        strike: S,
    },
    /// `1` if `S_T >= K`, else `0`.
    Digital {
        strike: S,
    },
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Claim<S> {
    pub payoff: RandomVariable<S>,
    pub kind: ClaimKind<S>,
}

impl<S: Scalar> Claim<S> {
    pub fn horizon(&self) -> usize {
        self.payoff.level()
    }

    /// Builds a vanilla payoff from the terminal stock price.
    pub fn on_stock(kind: ClaimKind<S>, stock: &AdaptedProcess<S>) -> Result<Self> {
        let s_t = stock.get(stock.horizon());
        let payoff = match &kind {
            ClaimKind::Call { strike } => s_t.map(|s| max0(s.clone() - strike.clone())),
            ClaimKind::Put { strike } => s_t.map(|s| max0(strike.clone() - s.clone())),
            ClaimKind::Digital { strike } => s_t.map(|s| if s >= strike { S::one() } else { S::zero() }),
            ClaimKind::Custom => return Err(Error::InvalidClaim("custom claims need an explicit payoff table".into())),
        };
        Ok(Claim { payoff, kind })
    }

    pub fn custom(payoff: RandomVariable<S>) -> Self {
        Claim { payoff, kind: ClaimKind::Custom }
    }
}

fn max0<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        x
    } else {
        S::zero()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prices<S> {
    /// `Y_n`, in units of the bond.
    pub discounted: AdaptedProcess<S>,
    /// `b_n Y_n`.
    pub cash: AdaptedProcess<S>,
}

fn check_horizons<S: Scalar>(claim: &Claim<S>, solution: &RiskNeutralSolution<S>, schedule: &FiltrationSchedule) -> Result<()> {
    if claim.horizon() != schedule.horizon() {
        return Err(Error::HorizonMismatch { expected: schedule.horizon(), found: claim.horizon() });
    }
    if solution.horizon() != schedule.horizon() {
        return Err(Error::HorizonMismatch { expected: schedule.horizon(), found: solution.horizon() });
    }
    Ok(())
}

/// Risk-neutral prices at every time. Fails if some step is not
/// null-preserving under the solved measures.
pub fn price_claim<S: Scalar>(
    claim: &Claim<S>,
    solution: &RiskNeutralSolution<S>,
    schedule: &FiltrationSchedule,
    tol: &Tolerances,
) -> Result<Prices<S>> {
    check_horizons(claim, solution, schedule)?;
    let legality = check_c_legality(&solution.measures, schedule, tol)?;
    if let Some(step) = legality.steps.iter().find(|s| !s.null_preserving) {
        return Err(Error::IllegalFiltration { step: step.step, atom: step.preserving_witness.expect("failing step has a witness") });
    }
    let horizon = schedule.horizon();
    let bond = bond_process(&solution.params, schedule)?;
    let q = &solution.measures;
    let mut discounted = vec![claim.payoff.zip_with(bond.get(horizon), |y, b| y.clone() / b.clone())?];
    for n in (0..horizon).rev() {
        let next = cond_exp(&discounted[0], schedule.map(n), &q[n], &q[n + 1], tol)?;
        discounted.insert(0, next);
    }
    let discounted = AdaptedProcess::new(discounted)?;
    let cash = discounted.zip_with(&bond, |y, b| y.clone() * b.clone())?;
    Ok(Prices { discounted, cash })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValuationResult<S> {
    pub prices: Prices<S>,
    /// Portfolio values the backward sweep aims for, in cash.
    pub targets: AdaptedProcess<S>,
    /// Values actually produced by `strategy`.
    pub values: AdaptedProcess<S>,
    /// Hedge; entries off the visible region are 0.
    pub strategy: Strategy<S>,
    /// `visible[n][a]`: `a ∈ g_n(B_n)`, for `n = 0..T`.
    pub visible: Vec<Vec<bool>>,
}

/// `g_n` for every step, as index tables on `B_n`.
fn factorizations(schedule: &FiltrationSchedule) -> Result<Vec<Vec<u32>>> {
    schedule
        .maps()
        .iter()
        .enumerate()
        .map(|(n, f)| f.factor_through_truncation().map_err(|atom| Error::NonFactorizable { step: n, atom }))
        .collect()
}

/// Backward sweep for the hedge, then a forward pass fixing bond holdings so
/// the portfolio is self-financing.
///
/// For visible `c ∈ B_n` the one-step hedge is read off at a representative
/// `a ∈ g_n^{-1}(c)`, the one of largest `Q_n` mass (ties: `a = c`, then the
/// lowest index):
///
/// ```text
/// φ_{n+1}(c) = (V_{n+1}(a1) - V_{n+1}(a0)) / (2σ S_n(c))
/// V_n(c)     = ((σ-μ+r) V_{n+1}(a1) + (σ+μ-r) V_{n+1}(a0)) / (2σ(1+r))
/// ```
///
/// Atoms outside `g_n(B_n)` take the target `V_n(g_n(a))`, which is what the
/// preceding step needs to agree with the risk-neutral price.
pub fn replicate<S: Scalar>(
    claim: &Claim<S>,
    solution: &RiskNeutralSolution<S>,
    schedule: &FiltrationSchedule,
    tol: &Tolerances,
) -> Result<ValuationResult<S>> {
    let prices = price_claim(claim, solution, schedule, tol)?;
    let horizon = schedule.horizon();
    let params = &solution.params;
    let stock = stock_process(params, schedule)?;
    let bond = bond_process(params, schedule)?;
    let g = factorizations(schedule)?;
    let two_sigma = S::from_i64(2).unwrap() * params.sigma.clone();
    let excess = params.mu.clone() - params.r.clone();
    let up_weight = params.sigma.clone() - excess.clone();
    let down_weight = params.sigma.clone() + excess;
    let growth = S::one() + params.r.clone();

    let visible: Vec<Vec<bool>> = g
        .iter()
        .enumerate()
        .map(|(n, gn)| {
            let mut mask = vec![false; atom_count(n)];
            for &c in gn {
                mask[c as usize] = true;
            }
            mask
        })
        .collect();

    let mut targets = vec![claim.payoff.clone()];
    let mut phi = Vec::with_capacity(horizon);
    for n in (0..horizon).rev() {
        let gn = &g[n];
        let next = &targets[0];
        let q = &solution.measures[n];
        let mut representative: Vec<Option<usize>> = vec![None; atom_count(n)];
        for (a, &c) in gn.iter().enumerate() {
            let slot = &mut representative[c as usize];
            let better = match *slot {
                None => true,
                Some(best) => {
                    let (wa, wb) = (q.weight_at(a), q.weight_at(best));
                    wa > wb || (wa == wb && a == c as usize && best != c as usize)
                }
            };
            if better {
                *slot = Some(a);
            }
        }
        let hedge = exec::tabulate(atom_count(n), |c| match representative[c] {
            Some(a) => {
                let (v0, v1) = (next.at(2 * a).clone(), next.at(2 * a + 1).clone());
                let phi = (v1.clone() - v0.clone()) / (two_sigma.clone() * stock.get(n).at(c).clone());
                let value = (up_weight.clone() * v1 + down_weight.clone() * v0) / (two_sigma.clone() * growth.clone());
                (phi, Some(value))
            }
            None => (S::zero(), None),
        });
        let mut values: Vec<S> = Vec::with_capacity(atom_count(n));
        let mut holdings = Vec::with_capacity(atom_count(n));
        for (phi, value) in &hedge {
            holdings.push(phi.clone());
            values.push(value.clone().unwrap_or_else(S::zero));
        }
        for (a, &c) in gn.iter().enumerate() {
            if hedge[a].1.is_none() {
                values[a] = hedge[c as usize].1.clone().expect("image atoms are visible");
            }
        }
        targets.insert(0, RandomVariable::new(n, values)?);
        phi.insert(0, RandomVariable::new(n, holdings)?);
    }
    let targets = AdaptedProcess::new(targets)?;

    // Forward pass: psi from the value the portfolio actually has.
    let mut psi: Vec<RandomVariable<S>> = Vec::with_capacity(horizon);
    let mut realised = targets.get(0).clone();
    for n in 0..horizon {
        let mask = &visible[n];
        let values = exec::tabulate(atom_count(n), |c| {
            if mask[c] {
                (realised.at(c).clone() - stock.get(n).at(c).clone() * phi[n].at(c).clone()) / bond.get(n).at(c).clone()
            } else {
                S::zero()
            }
        });
        psi.push(RandomVariable::new(n, values)?);
        let f = schedule.map(n);
        let next = exec::tabulate(atom_count(n + 1), |x| {
            let b = f.apply_index(x);
            stock.get(n + 1).at(x).clone() * phi[n].at(b).clone() + bond.get(n + 1).at(x).clone() * psi[n].at(b).clone()
        });
        realised = RandomVariable::new(n + 1, next)?;
    }
    let strategy = Strategy::new(phi, psi)?;
    let values = value_process(&strategy, &stock, &bond, schedule)?;
    Ok(ValuationResult { prices, targets, values, strategy, visible })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationReport<S> {
    /// Self-financing on visible atoms.
    pub self_financing: SelfFinancingReport<S>,
    /// Largest `|V_T - Y|` over atoms with `Q_T > 0`.
    pub terminal_error: S,
    pub terminal_worst_atom: Option<BinWord>,
    /// `|V_0 - cash price at 0|`.
    pub price_error: S,
    /// Terminal atoms with `Q_T = 0`, where replication says nothing.
    pub vacuous_atoms: Vec<BinWord>,
    pub tolerance: f64,
}

impl<S: Scalar> ReplicationReport<S> {
    pub fn terminal_ok(&self) -> bool {
        self.terminal_error.is_negligible(self.tolerance)
    }

    pub fn price_ok(&self) -> bool {
        self.price_error.is_negligible(self.tolerance)
    }

    pub fn holds(&self) -> bool {
        self.self_financing.holds && self.terminal_ok() && self.price_ok()
    }
}

/// Recomputes the portfolio from the strategy alone and audits it.
pub fn verify_replication<S: Scalar>(
    result: &ValuationResult<S>,
    claim: &Claim<S>,
    solution: &RiskNeutralSolution<S>,
    schedule: &FiltrationSchedule,
    tol: &Tolerances,
) -> Result<ReplicationReport<S>> {
    check_horizons(claim, solution, schedule)?;
    let horizon = schedule.horizon();
    let stock = stock_process(&solution.params, schedule)?;
    let bond = bond_process(&solution.params, schedule)?;
    let values = value_process(&result.strategy, &stock, &bond, schedule)?;
    let self_financing = is_self_financing(&result.strategy, &stock, &bond, schedule, Some(&result.visible), tol)?;
    let q_t = &solution.measures[horizon];
    let (terminal_error, terminal_worst_atom) = values.get(horizon).max_deviation(&claim.payoff, |a| !q_t.is_null_atom(a, tol));
    let price_error = (values.get(0).at(0).clone() - result.prices.cash.get(0).at(0).clone()).abs();
    let vacuous_atoms =
        (0..atom_count(horizon)).filter(|&a| q_t.is_null_atom(a, tol)).map(|a| BinWord::from_index(horizon, a)).collect::<Result<_>>()?;
    Ok(ReplicationReport { self_financing, terminal_error, terminal_worst_atom, price_error, vacuous_atoms, tolerance: tol.equality })
}
