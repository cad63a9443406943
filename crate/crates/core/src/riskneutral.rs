//! Risk-neutral measures `Q_n` under which the discounted stock is a
//! martingale along the schedule.
//!
//! The martingale condition at level `n` reads, for every `a ∈ B_n`,
//!
//! ```text
//! Q_n({a}) = c1 · Q_{n+1}(I_n(1, a)) + c0 · Q_{n+1}(I_n(0, a))
//! ```
//!
//! with `c1 = (1+μ+σ)/(1+r)`, `c0 = (1+μ-σ)/(1+r)` and `I_n(j, a)` the atoms
//! of `f_n^{-1}(a)` ending in `j`. Measures are built from a transition
//! kernel, `Q_n({d_1…d_n}) = ∏ q_k(d_1…d_k)`, so consecutive levels are
//! consistent under truncation by construction.

use std::collections::BTreeMap;

use crate::binword::{atom_count, BinWord};
use crate::condexp::{is_martingale, MartingaleReport, RandomVariable};
use crate::error::{Error, Result};
use crate::filtration::{is_measure_preserving, validate_schedule, FiltMap, FiltrationSchedule, MapKind, ScheduleReport};
use crate::market::{discounted_stock, MarketParams};
use crate::measure::FiniteMeasure;
use crate::scalar::{Scalar, Tolerances};

#[derive(Debug, Clone, PartialEq)]
pub struct RnCoefficients<S> {
    pub c1: S,
    pub c0: S,
}

impl<S: Scalar> RnCoefficients<S> {
    pub fn new(params: &MarketParams<S>) -> Self {
        let denom = S::one() + params.r.clone();
        RnCoefficients { c1: params.growth(1) / denom.clone(), c0: params.growth(0) / denom }
    }

    /// The `x` with `1 = c1 x + c0 (1 - x)`.
    pub fn balancing_weight(&self) -> S {
        (S::one() - self.c0.clone()) / (self.c1.clone() - self.c0.clone())
    }
}

/// `1/2 + (r - μ)/(2σ)`, the up-probability that makes one step fair.
pub fn risk_neutral_up<S: Scalar>(params: &MarketParams<S>) -> S {
    S::half() + (params.r.clone() - params.mu.clone()) / (S::from_i64(2).unwrap() * params.sigma.clone())
}

fn require_band<S: Scalar>(params: &MarketParams<S>) -> Result<()> {
    params.validate()?;
    if params.gap() >= params.sigma {
        return Err(Error::NoRiskNeutral { gap: params.gap().to_string(), sigma: params.sigma.to_string() });
    }
    Ok(())
}

/// `q_k` for `k = 1..=T`; entry `k` lives on `B_k` and `q_k(a0) + q_k(a1) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel<S> {
    q: Vec<RandomVariable<S>>,
}

impl<S: Scalar> TransitionKernel<S> {
    pub fn new(q: Vec<RandomVariable<S>>, tol: &Tolerances) -> Result<Self> {
        for (i, qk) in q.iter().enumerate() {
            let k = i + 1;
            if qk.level() != k {
                return Err(Error::LevelMismatch { expected: k, found: qk.level() });
            }
            for (x, v) in qk.values().iter().enumerate() {
                if *v < S::zero() || *v > S::one() {
                    return Err(Error::InvalidProbability { index: k, value: format!("{v} at {}", BinWord::from_index(k, x)?) });
                }
            }
            for a in 0..atom_count(k - 1) {
                let total = qk.at(2 * a).clone() + qk.at(2 * a + 1).clone();
                if !total.approx_eq(&S::one(), tol.normalization) {
                    let atom = BinWord::from_index(k - 1, a)?;
                    return Err(Error::InvalidMeasure(format!("q_{k} branches below {atom:?} sum to {total}")));
                }
            }
        }
        Ok(TransitionKernel { q })
    }

    /// Kernel with up-probability `up(k, a)` below each parent `a ∈ B_{k-1}`.
    pub fn from_up(horizon: usize, up: impl Fn(usize, usize) -> S) -> Result<Self> {
        let q = (1..=horizon)
            .map(|k| {
                let values = (0..atom_count(k))
                    .map(|x| {
                        let u = up(k, x >> 1);
                        if x & 1 == 1 {
                            u
                        } else {
                            S::one() - u
                        }
                    })
                    .collect();
                RandomVariable::new(k, values)
            })
            .collect::<Result<_>>()?;
        Self::new(q, &Tolerances::default())
    }

    pub fn horizon(&self) -> usize {
        self.q.len()
    }

    /// `q_k`, 1-based.
    pub fn q(&self, k: usize) -> &RandomVariable<S> {
        &self.q[k - 1]
    }

    /// `Q_0, …, Q_T` by the product rule.
    pub fn measures(&self) -> Vec<FiniteMeasure<S>> {
        let mut out = vec![FiniteMeasure::from_raw(0, vec![S::one()])];
        for k in 1..=self.horizon() {
            let prev = &out[k - 1];
            let qk = self.q(k);
            let weights = crate::exec::tabulate(atom_count(k), |x| prev.weight_at(x >> 1).clone() * qk.at(x).clone());
            out.push(FiniteMeasure::from_raw(k, weights));
        }
        out
    }
}

/// How to fill kernel entries the martingale condition leaves open.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FreeValuePolicy<S> {
    #[default]
    Half,
    Zero,
    One,
    /// Up-probability per child word `a1`; missing entries use `fallback`.
    Table {
        entries: BTreeMap<BinWord, S>,
        fallback: S,
    },
}

impl<S: Scalar> FreeValuePolicy<S> {
    fn value(&self, up_child: &BinWord) -> S {
        match self {
            FreeValuePolicy::Half => S::half(),
            FreeValuePolicy::Zero => S::zero(),
            FreeValuePolicy::One => S::one(),
            FreeValuePolicy::Table { entries, fallback } => entries.get(up_child).cloned().unwrap_or_else(|| fallback.clone()),
        }
    }

    fn check(&self) -> Result<()> {
        if let FreeValuePolicy::Table { entries, fallback } = self {
            for (w, v) in entries.iter().map(|(w, v)| (Some(w), v)).chain(std::iter::once((None, fallback))) {
                if *v < S::zero() || *v > S::one() {
                    let at = w.map(|w| w.to_string()).unwrap_or_else(|| "fallback".into());
                    return Err(Error::InvalidProbability { index: w.map_or(0, |w| w.len()), value: format!("{v} ({at})") });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// The parent atom is outside the image of the previous map.
    InvisibleBranch,
    /// The parent has zero mass because of a forced entry further up.
    ZeroMassDownstream,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::InvisibleBranch => "invisible_branch",
            Provenance::ZeroMassDownstream => "zero_mass_downstream",
        }
    }
}

/// A kernel entry `q_k(a1)` chosen by policy.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeParameter<S> {
    pub level: usize,
    /// The up child `a1`.
    pub atom: BinWord,
    pub value: S,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveDiagnostics {
    /// Parents whose up-probability the martingale condition pins down.
    pub constrained: usize,
    /// Parents with a child outside the image of the next map.
    pub forced: usize,
    /// Parents filled by the free-value policy.
    pub free: usize,
    /// Levels `n` where a forced entry breaks the condition at a charged atom.
    pub unsatisfiable_levels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskNeutralSolution<S> {
    pub params: MarketParams<S>,
    pub kernel: TransitionKernel<S>,
    pub measures: Vec<FiniteMeasure<S>>,
    pub free_parameters: Vec<FreeParameter<S>>,
    pub diagnostics: SolveDiagnostics,
}

/// Atoms where `P` and `Q` disagree on nullity at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceLevel {
    pub level: usize,
    /// Atoms with `P > 0` and `Q = 0`.
    pub p_only: Vec<BinWord>,
    /// Atoms with `Q > 0` and `P = 0`.
    pub q_only: Vec<BinWord>,
}

impl EquivalenceLevel {
    pub fn equivalent(&self) -> bool {
        self.p_only.is_empty() && self.q_only.is_empty()
    }
}

impl<S: Scalar> RiskNeutralSolution<S> {
    pub fn horizon(&self) -> usize {
        self.kernel.horizon()
    }

    pub fn coefficients(&self) -> RnCoefficients<S> {
        RnCoefficients::new(&self.params)
    }

    /// Per level, the atoms on which `P_n` and `Q_n` are not mutually absolutely continuous.
    pub fn equivalence_report(&self, p: &[FiniteMeasure<S>], tol: &Tolerances) -> Result<Vec<EquivalenceLevel>> {
        if p.len() != self.measures.len() {
            return Err(Error::HorizonMismatch { expected: self.measures.len(), found: p.len() });
        }
        Ok(self
            .measures
            .iter()
            .zip(p)
            .enumerate()
            .map(|(n, (q, p))| {
                let (mut p_only, mut q_only) = (Vec::new(), Vec::new());
                for a in 0..atom_count(n) {
                    let word = || BinWord::from_index(n, a).expect("in range");
                    match (p.is_null_atom(a, tol), q.is_null_atom(a, tol)) {
                        (false, true) => p_only.push(word()),
                        (true, false) => q_only.push(word()),
                        _ => {}
                    }
                }
                EquivalenceLevel { level: n, p_only, q_only }
            })
            .collect())
    }
}

/// Solves level by level for any schedule of full and drop steps.
///
/// Below a parent `a ∈ B_{k-1}`:
/// * a child outside the image of `f_k` is forced to probability 0;
/// * otherwise, if `Q_{k-1}(a) > 0`, the condition at `a` gives
///   `q_k(a1) = 1/2 + (r-μ)/(2σ)`;
/// * otherwise the entry is free and taken from `policy`.
///
/// A forced zero below a charged parent contradicts the condition one level
/// up; such levels are listed in [`SolveDiagnostics::unsatisfiable_levels`]
/// rather than rejected, since no measure sequence can do better there.
pub fn solve_schedule<S: Scalar>(
    params: &MarketParams<S>,
    schedule: &FiltrationSchedule,
    policy: &FreeValuePolicy<S>,
) -> Result<RiskNeutralSolution<S>> {
    require_band(params)?;
    policy.check()?;
    for (n, f) in schedule.maps().iter().enumerate() {
        if f.kind() == MapKind::Custom {
            return Err(Error::UnsupportedStep { step: n, kind: f.kind().to_string() });
        }
    }
    let horizon = schedule.horizon();
    let up = risk_neutral_up(params);
    let down = S::one() - up.clone();
    let mut diagnostics = SolveDiagnostics::default();
    let mut free_parameters = Vec::new();
    let mut measures = vec![FiniteMeasure::from_raw(0, vec![S::one()])];
    let mut kernel = Vec::with_capacity(horizon);
    let mut parent_visible = vec![true];

    for k in 1..=horizon {
        let visible = if k < horizon { schedule.map(k).image_mask() } else { vec![true; atom_count(k)] };
        let mut values = Vec::with_capacity(atom_count(k));
        let mut next = Vec::with_capacity(atom_count(k));
        let mut unsatisfiable = false;
        for (a, mass) in measures[k - 1].weights().iter().enumerate() {
            let charged = !mass.is_zero();
            let (q_down, q_up) = match (visible[2 * a], visible[2 * a + 1]) {
                (false, false) => {
                    return Err(Error::Infeasible { level: k - 1, atom: BinWord::from_index(k - 1, a)? });
                }
                (v0, v1) if !(v0 && v1) => {
                    diagnostics.forced += 1;
                    unsatisfiable |= charged;
                    if v1 {
                        (S::zero(), S::one())
                    } else {
                        (S::one(), S::zero())
                    }
                }
                _ if charged => {
                    diagnostics.constrained += 1;
                    (down.clone(), up.clone())
                }
                _ => {
                    diagnostics.free += 1;
                    let atom = BinWord::from_index(k - 1, a)?.append(1)?;
                    let value = policy.value(&atom);
                    let provenance = if parent_visible[a] { Provenance::ZeroMassDownstream } else { Provenance::InvisibleBranch };
                    free_parameters.push(FreeParameter { level: k, atom, value: value.clone(), provenance });
                    (S::one() - value.clone(), value)
                }
            };
            next.push(mass.clone() * q_down.clone());
            next.push(mass.clone() * q_up.clone());
            values.push(q_down);
            values.push(q_up);
        }
        if unsatisfiable {
            diagnostics.unsatisfiable_levels.push(k - 1);
        }
        kernel.push(RandomVariable::from_raw(k, values));
        measures.push(FiniteMeasure::from_raw(k, next));
        parent_visible = visible;
    }
    // Entries are in [0, 1] and sum to one by construction.
    let kernel = TransitionKernel { q: kernel };
    Ok(RiskNeutralSolution { params: params.clone(), kernel, measures, free_parameters, diagnostics })
}

pub fn solve_classical<S: Scalar>(params: &MarketParams<S>, horizon: usize) -> Result<RiskNeutralSolution<S>> {
    solve_schedule(params, &FiltrationSchedule::classical(horizon)?, &FreeValuePolicy::Half)
}

pub fn solve_drop_k<S: Scalar>(
    params: &MarketParams<S>,
    horizon: usize,
    k: usize,
    policy: &FreeValuePolicy<S>,
) -> Result<RiskNeutralSolution<S>> {
    solve_schedule(params, &FiltrationSchedule::drop_k(horizon, k)?, policy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionLevel<S> {
    pub level: usize,
    pub max_violation: S,
    pub worst_atom: Option<BinWord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport<S> {
    pub levels: Vec<ConditionLevel<S>>,
    pub tolerance: f64,
}

impl<S: Scalar> ConditionReport<S> {
    pub fn max_violation(&self) -> S {
        self.levels.iter().map(|l| l.max_violation.clone()).fold(S::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn holds(&self) -> bool {
        self.max_violation().is_negligible(self.tolerance)
    }

    pub fn failing_levels(&self) -> Vec<usize> {
        self.levels.iter().filter(|l| !l.max_violation.is_negligible(self.tolerance)).map(|l| l.level).collect()
    }
}

/// Residual of the martingale condition at every `(n, a)`.
pub fn martingale_condition_check<S: Scalar>(
    measures: &[FiniteMeasure<S>],
    schedule: &FiltrationSchedule,
    params: &MarketParams<S>,
    tol: &Tolerances,
) -> Result<ConditionReport<S>> {
    let horizon = schedule.horizon();
    if measures.len() != horizon + 1 {
        return Err(Error::HorizonMismatch { expected: horizon + 1, found: measures.len() });
    }
    let c = RnCoefficients::new(params);
    let levels = (0..horizon)
        .map(|n| {
            let f = schedule.map(n);
            let fine = &measures[n + 1];
            let branch = |a: usize, j: u8| f.branch_indices(a, j).fold(S::zero(), |acc, x| acc + fine.weight_at(x).clone());
            let residuals = crate::exec::tabulate(atom_count(n), |a| {
                measures[n].weight_at(a).clone() - c.c1.clone() * branch(a, 1) - c.c0.clone() * branch(a, 0)
            });
            let residual = RandomVariable::from_raw(n, residuals);
            let (max_violation, worst_atom) =
                residual.max_deviation(&RandomVariable::from_raw(n, vec![S::zero(); atom_count(n)]), |_| true);
            ConditionLevel { level: n, max_violation, worst_atom }
        })
        .collect();
    Ok(ConditionReport { levels, tolerance: tol.equality })
}

/// The same property checked the long way: the discounted stock run through
/// [`is_martingale`]. Slower, but shares no code with the residual check.
pub fn discounted_stock_martingale<S: Scalar>(
    measures: &[FiniteMeasure<S>],
    schedule: &FiltrationSchedule,
    params: &MarketParams<S>,
    tol: &Tolerances,
) -> Result<MartingaleReport<S>> {
    is_martingale(&discounted_stock(params, schedule)?, schedule, measures, tol)
}

/// Both schedules share levels and map tables; only the measures may differ.
pub fn check_u_compatibility(b: &FiltrationSchedule, c: &FiltrationSchedule) -> bool {
    b.same_skeleton(c)
}

/// Null preservation of every step under the solved `Q`.
pub fn check_c_legality<S: Scalar>(
    measures: &[FiniteMeasure<S>],
    schedule: &FiltrationSchedule,
    tol: &Tolerances,
) -> Result<ScheduleReport> {
    validate_schedule(schedule, measures, tol)
}

/// `Q_{n+1}({a0, a1}) = Q_n({a})` for all `n` and `a`.
pub fn marginals_consistent<S: Scalar>(measures: &[FiniteMeasure<S>], tol: &Tolerances) -> bool {
    measures.windows(2).all(|pair| {
        let (coarse, fine) = (&pair[0], &pair[1]);
        (0..atom_count(coarse.level())).all(|a| {
            let sum = fine.weight_at(2 * a).clone() + fine.weight_at(2 * a + 1).clone();
            sum.approx_eq(coarse.weight_at(a), tol.equality)
        })
    })
}

/// `f_full : B_{n+1} → B_n` pushes `Q_{n+1}` onto `Q_n` for every `n`.
pub fn truncation_measure_preserving<S: Scalar>(measures: &[FiniteMeasure<S>], tol: &Tolerances) -> Result<bool> {
    for pair in measures.windows(2) {
        if !is_measure_preserving(&FiltMap::full(pair[0].level())?, &pair[1], &pair[0], tol)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Reads off `q_k(ad) = Q_k(ad) / Q_{k-1}(a)` (1/2 below null parents) and
/// returns it if it is a valid kernel reproducing every `Q_n`.
pub fn extract_kernel<S: Scalar>(measures: &[FiniteMeasure<S>], tol: &Tolerances) -> Option<TransitionKernel<S>> {
    let first = measures.first()?;
    if first.level() != 0 || !first.weight_at(0).approx_eq(&S::one(), tol.equality) {
        return None;
    }
    let q = measures
        .windows(2)
        .map(|pair| {
            let (coarse, fine) = (&pair[0], &pair[1]);
            let values = (0..fine.weights().len())
                .map(|x| {
                    let parent = coarse.weight_at(x >> 1);
                    if parent.is_negligible(tol.null) {
                        S::half()
                    } else {
                        fine.weight_at(x).clone() / parent.clone()
                    }
                })
                .collect();
            RandomVariable::new(fine.level(), values).ok()
        })
        .collect::<Option<Vec<_>>>()?;
    let kernel = TransitionKernel::new(q, tol).ok()?;
    let rebuilt = kernel.measures();
    rebuilt.iter().zip(measures).all(|(x, y)| x.approx_eq(y, tol.equality)).then_some(kernel)
}
