//! Conditional expectation along a map between finite atomic spaces, adapted
//! processes, and martingale checks.
//!
//! For `f : B_s → B_t`, `v` on `B_s` and an atom `a ∈ B_t`,
//!
//! ```text
//! E(v)(a) · m_t({a}) = Σ_{b ∈ f^{-1}(a)} v(b) · m_s({b})
//! ```
//!
//! which pins `E(v)` down on charged atoms. Null atoms get the representative 0.

use crate::binword::{atom_count, check_level, BinWord};
use crate::error::{Error, Result};
use crate::exec;
use crate::filtration::{null_violation, FiltMap, FiltrationSchedule};
use crate::measure::FiniteMeasure;
use crate::scalar::{Scalar, Tolerances};

/// A real function on `B_n`, stored in atom order.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomVariable<S> {
    level: usize,
    values: Vec<S>,
}

impl<S: Scalar> RandomVariable<S> {
    pub fn new(level: usize, values: Vec<S>) -> Result<Self> {
        check_level(level)?;
        if values.len() != atom_count(level) {
            return Err(Error::LevelMismatch { expected: atom_count(level), found: values.len() });
        }
        Ok(RandomVariable { level, values })
    }

    pub(crate) fn from_raw(level: usize, values: Vec<S>) -> Self {
        debug_assert_eq!(values.len(), atom_count(level));
        RandomVariable { level, values }
    }

    pub fn constant(level: usize, c: S) -> Result<Self> {
        check_level(level)?;
        Ok(RandomVariable { level, values: vec![c; atom_count(level)] })
    }

    pub fn zero(level: usize) -> Result<Self> {
        Self::constant(level, S::zero())
    }

    /// Tabulates `f` over `B_n`.
    pub fn from_fn(level: usize, f: impl Fn(BinWord) -> S + Sync + Send) -> Result<Self> {
        check_level(level)?;
        let values = exec::tabulate(atom_count(level), |i| f(BinWord::from_index(level, i).expect("in range")));
        Ok(RandomVariable { level, values })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn at(&self, index: usize) -> &S {
        &self.values[index]
    }

    pub fn value(&self, atom: &BinWord) -> Result<&S> {
        if atom.len() != self.level {
            return Err(Error::LevelMismatch { expected: self.level, found: atom.len() });
        }
        Ok(&self.values[atom.index()])
    }

    pub fn map(&self, f: impl Fn(&S) -> S + Sync + Send) -> Self {
        let values = exec::tabulate(self.values.len(), |i| f(&self.values[i]));
        RandomVariable { level: self.level, values }
    }

    /// Atomwise combination of two variables on the same level.
    pub fn zip_with(&self, other: &Self, f: impl Fn(&S, &S) -> S + Sync + Send) -> Result<Self> {
        if other.level != self.level {
            return Err(Error::LevelMismatch { expected: self.level, found: other.level });
        }
        let values = exec::tabulate(self.values.len(), |i| f(&self.values[i], &other.values[i]));
        Ok(RandomVariable { level: self.level, values })
    }

    /// Largest `|self - other|` over atoms where `mask` holds, with the atom.
    pub fn max_deviation(&self, other: &Self, mask: impl Fn(usize) -> bool) -> (S, Option<BinWord>) {
        let mut worst = (S::zero(), None);
        for (i, (x, y)) in self.values.iter().zip(&other.values).enumerate() {
            if !mask(i) {
                continue;
            }
            let d = (x.clone() - y.clone()).abs();
            if worst.1.is_none() || d > worst.0 {
                worst = (d, Some(BinWord::from_index(self.level, i).expect("in range")));
            }
        }
        worst
    }
}

/// One random variable per time `0..=T`; entry `n` lives on `B_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess<S> {
    entries: Vec<RandomVariable<S>>,
}

impl<S: Scalar> AdaptedProcess<S> {
    pub fn new(entries: Vec<RandomVariable<S>>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidSchedule("a process needs at least the time-0 entry".into()));
        }
        for (n, x) in entries.iter().enumerate() {
            if x.level != n {
                return Err(Error::LevelMismatch { expected: n, found: x.level });
            }
        }
        Ok(AdaptedProcess { entries })
    }

    /// The same constant at every time.
    pub fn constant(horizon: usize, c: S) -> Result<Self> {
        Self::new((0..=horizon).map(|n| RandomVariable::constant(n, c.clone())).collect::<Result<_>>()?)
    }

    pub fn horizon(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn get(&self, n: usize) -> &RandomVariable<S> {
        &self.entries[n]
    }

    pub fn entries(&self) -> &[RandomVariable<S>] {
        &self.entries
    }

    /// Atomwise combination, time by time.
    pub fn zip_with(&self, other: &Self, f: impl Fn(&S, &S) -> S + Sync + Send + Copy) -> Result<Self> {
        if other.horizon() != self.horizon() {
            return Err(Error::HorizonMismatch { expected: self.horizon(), found: other.horizon() });
        }
        let entries = self.entries.iter().zip(&other.entries).map(|(x, y)| x.zip_with(y, f)).collect::<Result<_>>()?;
        Ok(AdaptedProcess { entries })
    }
}

fn check_inputs<S: Scalar>(f: &FiltMap, m_target: &FiniteMeasure<S>, m_source: &FiniteMeasure<S>, tol: &Tolerances) -> Result<()> {
    if m_target.level() != f.target_level() {
        return Err(Error::LevelMismatch { expected: f.target_level(), found: m_target.level() });
    }
    if m_source.level() != f.source_level() {
        return Err(Error::LevelMismatch { expected: f.source_level(), found: m_source.level() });
    }
    if let Some(atom) = null_violation(f, m_source, m_target, tol)? {
        return Err(Error::NotNullPreserving { from: f.source_level(), to: f.target_level(), atom });
    }
    Ok(())
}

/// Conditional expectation of `v` along `f`. Fails if `f` is not null-preserving.
pub fn cond_exp<S: Scalar>(
    v: &RandomVariable<S>,
    f: &FiltMap,
    m_target: &FiniteMeasure<S>,
    m_source: &FiniteMeasure<S>,
    tol: &Tolerances,
) -> Result<RandomVariable<S>> {
    if v.level != f.source_level() {
        return Err(Error::LevelMismatch { expected: f.source_level(), found: v.level });
    }
    check_inputs(f, m_target, m_source, tol)?;
    let values = exec::tabulate(atom_count(f.target_level()), |a| {
        if m_target.is_null_atom(a, tol) {
            return S::zero();
        }
        // Fixed summation order (ascending source index) keeps float runs reproducible.
        let mass = f
            .preimage_indices(a)
            .iter()
            .fold(S::zero(), |acc, &b| acc + v.values[b as usize].clone() * m_source.weight_at(b as usize).clone());
        mass / m_target.weight_at(a).clone()
    });
    Ok(RandomVariable::from_raw(f.target_level(), values))
}

/// `E(1)(a) = m_source(f^{-1}(a)) / m_target(a)`.
pub fn cond_exp_indicator<S: Scalar>(
    f: &FiltMap,
    m_target: &FiniteMeasure<S>,
    m_source: &FiniteMeasure<S>,
    tol: &Tolerances,
) -> Result<RandomVariable<S>> {
    check_inputs(f, m_target, m_source, tol)?;
    let pushed = f.pushforward(m_source)?;
    let values = pushed
        .into_iter()
        .enumerate()
        .map(|(a, mass)| if m_target.is_null_atom(a, tol) { S::zero() } else { mass / m_target.weight_at(a).clone() })
        .collect();
    Ok(RandomVariable::from_raw(f.target_level(), values))
}

/// `ξ_n(d_1 … d_n) = 2 d_n - 1` for `n = 1..=T`; `ξ_0 = 0`.
pub fn xi_process<S: Scalar>(horizon: usize) -> Result<AdaptedProcess<S>> {
    if horizon == 0 {
        return Err(Error::InvalidSchedule("xi needs T >= 1".into()));
    }
    let mut entries = vec![RandomVariable::zero(0)?];
    for n in 1..=horizon {
        entries.push(RandomVariable::from_fn(n, |w| if w.last() == Some(1) { S::one() } else { -S::one() })?);
    }
    AdaptedProcess::new(entries)
}

/// `x ∘ f`: brings a variable on `B_m` forward to `B_n`.
pub fn import_via<S: Scalar>(f: &FiltMap, x: &RandomVariable<S>) -> Result<RandomVariable<S>> {
    if x.level != f.target_level() {
        return Err(Error::LevelMismatch { expected: f.target_level(), found: x.level });
    }
    let values = exec::tabulate(atom_count(f.source_level()), |b| x.values[f.apply_index(b)].clone());
    Ok(RandomVariable::from_raw(f.source_level(), values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleStep<S> {
    pub step: usize,
    /// Largest `|E(x_{n+1})(a) - x_n(a)|` over charged atoms `a`.
    pub max_deviation: S,
    pub worst_atom: Option<BinWord>,
    /// Set when the conditional expectation does not exist at this step.
    pub error: Option<String>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport<S> {
    pub steps: Vec<MartingaleStep<S>>,
}

impl<S: Scalar> MartingaleReport<S> {
    pub fn holds(&self) -> bool {
        self.steps.iter().all(|s| s.holds)
    }

    pub fn max_deviation(&self) -> S {
        self.steps.iter().map(|s| s.max_deviation.clone()).fold(S::zero(), |a, b| if b > a { b } else { a })
    }
}

/// Checks `E^{f_n}(x_{n+1}) = x_n` on charged atoms for every step.
///
/// Adjacent steps suffice: conditional expectation is functorial, so the
/// composite arrows follow.
pub fn is_martingale<S: Scalar>(
    x: &AdaptedProcess<S>,
    schedule: &FiltrationSchedule,
    measures: &[FiniteMeasure<S>],
    tol: &Tolerances,
) -> Result<MartingaleReport<S>> {
    let horizon = schedule.horizon();
    if x.horizon() != horizon {
        return Err(Error::HorizonMismatch { expected: horizon, found: x.horizon() });
    }
    if measures.len() != horizon + 1 {
        return Err(Error::HorizonMismatch { expected: horizon + 1, found: measures.len() });
    }
    let steps = (0..horizon)
        .map(|n| match cond_exp(x.get(n + 1), schedule.map(n), &measures[n], &measures[n + 1], tol) {
            Ok(e) => {
                let (max_deviation, worst_atom) = e.max_deviation(x.get(n), |a| !measures[n].is_null_atom(a, tol));
                let holds = max_deviation.is_negligible(tol.equality);
                MartingaleStep { step: n, max_deviation, worst_atom, error: None, holds }
            }
            Err(err) => MartingaleStep { step: n, max_deviation: S::zero(), worst_atom: None, error: Some(err.to_string()), holds: false },
        })
        .collect();
    Ok(MartingaleReport { steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binword::enumerate;
    use crate::measure::{product_measures, ProbSequence};
    use crate::scalar::Exact;
    use proptest::prelude::*;

    fn w(s: &str) -> BinWord {
        s.parse().unwrap()
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn constant_has_constant_expectation() {
        let p = ProbSequence::new(vec![0.3, 0.6, 0.0]).unwrap();
        let pm = product_measures(&p, 3).unwrap();
        let f = FiltMap::full(2).unwrap();
        let e = cond_exp(&RandomVariable::constant(3, 1.0).unwrap(), &f, &pm[2], &pm[3], &tol()).unwrap();
        for a in 0..4 {
            if !pm[2].is_null_atom(a, &tol()) {
                assert!((e.at(a) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_point_formula() {
        // E(v)(a) = v(a0)(1 - p_{n+1}) + v(a1) p_{n+1}
        let p = ProbSequence::new(vec![Exact::from_ratio(1, 3), Exact::from_ratio(2, 5)]).unwrap();
        let pm = product_measures(&p, 2).unwrap();
        let v = RandomVariable::new(2, (1..=4).map(|k| Exact::from_ratio(k * k, 1)).collect()).unwrap();
        let e = cond_exp(&v, &FiltMap::full(1).unwrap(), &pm[1], &pm[2], &tol()).unwrap();
        let q = Exact::from_ratio(2, 5);
        for a in 0..2 {
            let expected = v.at(2 * a).clone() * (Exact::from_ratio(1, 1) - q.clone()) + v.at(2 * a + 1).clone() * q.clone();
            assert_eq!(e.at(a), &expected);
        }
    }

    #[test]
    fn drop_under_q_like_measure() {
        // Level-2 measure with Q(a1) = 0 and a level-3 measure charging only a0·.
        let t = tol();
        let q2 = FiniteMeasure::new(
            2,
            vec![Exact::from_ratio(1, 4), Exact::from_ratio(0, 1), Exact::from_ratio(3, 4), Exact::from_ratio(0, 1)],
            &t,
        )
        .unwrap();
        let q3 = FiniteMeasure::new(3, [1, 0, 0, 0, 2, 1, 0, 0].iter().map(|&k| Exact::from_ratio(k, 4)).collect(), &t).unwrap();
        let v = RandomVariable::new(3, (0..8).map(|k| Exact::from_ratio(k + 1, 1)).collect()).unwrap();
        let f = FiltMap::drop(2).unwrap();
        let e = cond_exp(&v, &f, &q2, &q3, &t).unwrap();
        // Direct summation oracle over the four-node preimage.
        for a in [0usize, 2] {
            let pre = f.preimage_indices(a);
            assert_eq!(pre.len(), 4);
            let num = pre.iter().fold(Exact::from_ratio(0, 1), |acc, &b| acc + v.at(b as usize).clone() * q3.weight_at(b as usize).clone());
            assert_eq!(e.at(a), &(num / q2.weight_at(a).clone()));
        }
        assert_eq!(e.at(1), &Exact::from_ratio(0, 1));
        assert_eq!(e.at(3), &Exact::from_ratio(0, 1));
    }

    #[test]
    fn rejects_non_null_preserving() {
        let p = ProbSequence::new(vec![0.5, 1.0, 0.5]).unwrap();
        let pm = product_measures(&p, 3).unwrap();
        let err = cond_exp(&RandomVariable::constant(3, 1.0).unwrap(), &FiltMap::drop(2).unwrap(), &pm[2], &pm[3], &tol()).unwrap_err();
        match err {
            Error::NotNullPreserving { atom, .. } => assert_eq!(atom, w("00")),
            other => panic!("unexpected {other}"),
        }
        let level = cond_exp(&RandomVariable::constant(2, 1.0).unwrap(), &FiltMap::full(2).unwrap(), &pm[2], &pm[3], &tol());
        assert!(matches!(level, Err(Error::LevelMismatch { .. })));
    }

    #[test]
    fn indicator_expectation() {
        let t = tol();
        let half = product_measures(&ProbSequence::constant(0.5, 3).unwrap(), 3).unwrap();
        let full = cond_exp_indicator(&FiltMap::full(1).unwrap(), &half[1], &half[2], &t).unwrap();
        assert_eq!(full.values(), &[1.0, 1.0]);
        let drop = cond_exp_indicator(&FiltMap::drop(2).unwrap(), &half[2], &half[3], &t).unwrap();
        // a1 atoms: empty preimage. a0 atoms: four atoms of 1/8 over 1/4.
        assert_eq!(drop.values(), &[2.0, 0.0, 2.0, 0.0]);
        let via_general = cond_exp(&RandomVariable::constant(3, 1.0).unwrap(), &FiltMap::drop(2).unwrap(), &half[2], &half[3], &t).unwrap();
        assert_eq!(via_general, drop);
    }

    #[test]
    fn xi_values() {
        let xi = xi_process::<f64>(3).unwrap();
        assert_eq!(xi.get(1).value(&w("0")).unwrap(), &-1.0);
        assert_eq!(xi.get(1).value(&w("1")).unwrap(), &1.0);
        assert_eq!(xi.get(3).value(&w("010")).unwrap(), &-1.0);
        assert_eq!(xi.get(2).value(&w("01")).unwrap(), &1.0);
        assert_eq!(xi.get(0).values(), &[0.0]);
        assert!(xi_process::<f64>(0).is_err());
    }

    #[test]
    fn import_examples() {
        let x = RandomVariable::new(1, vec![3.0, 7.0]).unwrap();
        assert_eq!(import_via(&FiltMap::identity(1).unwrap(), &x).unwrap(), x);
        let c = RandomVariable::constant(1, 2.0).unwrap();
        let composite = FiltrationSchedule::classical(3).unwrap().compose(1, 3).unwrap();
        assert!(import_via(&composite, &c).unwrap().values().iter().all(|&v| v == 2.0));
        let imported = import_via(&composite, &x).unwrap();
        for b in enumerate(3).unwrap() {
            assert_eq!(imported.value(&b).unwrap(), x.value(&b.prefix(1)).unwrap());
        }
        assert!(import_via(&composite, &RandomVariable::constant(2, 0.0).unwrap()).is_err());
    }

    #[test]
    fn martingale_examples() {
        let t = tol();
        let schedule = FiltrationSchedule::classical(3).unwrap();
        let pm = product_measures(&ProbSequence::new(vec![0.2, 0.7, 0.4]).unwrap(), 3).unwrap();
        let c = AdaptedProcess::constant(3, 5.0).unwrap();
        assert!(is_martingale(&c, &schedule, &pm, &t).unwrap().holds());

        // Symmetric random walk sum_k xi_k under p = 1/2.
        let half = product_measures(&ProbSequence::constant(0.5, 3).unwrap(), 3).unwrap();
        let xi = xi_process::<f64>(3).unwrap();
        let mut walk = vec![RandomVariable::zero(0).unwrap()];
        for n in 1..=3 {
            let prev = import_via(schedule.map(n - 1), &walk[n - 1]).unwrap();
            walk.push(prev.zip_with(xi.get(n), |a, b| a + b).unwrap());
        }
        let walk = AdaptedProcess::new(walk).unwrap();
        assert!(is_martingale(&walk, &schedule, &half, &t).unwrap().holds());
        let report = is_martingale(&walk, &schedule, &pm, &t).unwrap();
        assert!(!report.holds());
        // E(xi_1) = 2 p_1 - 1 = -0.6 against walk_0 = 0.
        assert!((report.steps[0].max_deviation - 0.6).abs() < 1e-12);
    }

    #[test]
    fn martingale_report_flags_missing_expectation() {
        let t = tol();
        let schedule = FiltrationSchedule::drop_k(3, 2).unwrap();
        let pm = product_measures(&ProbSequence::new(vec![0.5, 1.0, 0.5]).unwrap(), 3).unwrap();
        let report = is_martingale(&AdaptedProcess::constant(3, 1.0).unwrap(), &schedule, &pm, &t).unwrap();
        assert!(report.steps[2].error.is_some());
        assert!(!report.holds());
    }

    fn random_schedule(t: usize, bits: u32) -> FiltrationSchedule {
        let maps = (0..t).map(|n| if n >= 1 && (bits >> n) & 1 == 1 { FiltMap::drop(n) } else { FiltMap::full(n) }.unwrap()).collect();
        FiltrationSchedule::custom(maps).unwrap()
    }

    proptest! {
        #[test]
        fn xi_expectation_under_truncation(p in proptest::collection::vec(0.0f64..=1.0, 8), n in 0usize..8) {
            let t = tol();
            let pm = product_measures(&ProbSequence::new(p.clone()).unwrap(), 8).unwrap();
            let xi = xi_process::<f64>(8).unwrap();
            let e = cond_exp(xi.get(n + 1), &FiltMap::full(n).unwrap(), &pm[n], &pm[n + 1], &t).unwrap();
            for a in 0..atom_count(n) {
                if !pm[n].is_null_atom(a, &t) {
                    prop_assert!((e.at(a) - (2.0 * p[n] - 1.0)).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn linearity(vals in proptest::collection::vec(-5i64..=5, 32), other in proptest::collection::vec(-5i64..=5, 32),
                     alpha in -3i64..=3, beta in -3i64..=3, bits in any::<u32>()) {
            let t = tol();
            let p = ProbSequence::new(vec![Exact::from_ratio(1, 3), Exact::from_ratio(0, 1), Exact::from_ratio(3, 4), Exact::from_ratio(1, 2), Exact::from_ratio(1, 5)]).unwrap();
            let pm = product_measures(&p, 5).unwrap();
            let schedule = random_schedule(5, bits & !0b10);
            let f = schedule.map(4);
            let v = RandomVariable::new(5, vals.iter().map(|&k| Exact::from_ratio(k, 1)).collect()).unwrap();
            let u = RandomVariable::new(5, other.iter().map(|&k| Exact::from_ratio(k, 1)).collect()).unwrap();
            let (a, b) = (Exact::from_ratio(alpha, 1), Exact::from_ratio(beta, 1));
            let combo = v.zip_with(&u, |x, y| a.clone() * x.clone() + b.clone() * y.clone()).unwrap();
            let lhs = cond_exp(&combo, f, &pm[4], &pm[5], &t).unwrap();
            let ev = cond_exp(&v, f, &pm[4], &pm[5], &t).unwrap();
            let eu = cond_exp(&u, f, &pm[4], &pm[5], &t).unwrap();
            let rhs = ev.zip_with(&eu, |x, y| a.clone() * x.clone() + b.clone() * y.clone()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn defining_identity_random_events(p in proptest::collection::vec(0.0f64..=1.0, 10), vals in proptest::collection::vec(-10.0f64..10.0, 1024), event in proptest::collection::vec(any::<bool>(), 512)) {
            let t = tol();
            let pm = product_measures(&ProbSequence::new(p).unwrap(), 10).unwrap();
            let f = FiltMap::full(9).unwrap();
            let v = RandomVariable::new(10, vals).unwrap();
            let e = cond_exp(&v, &f, &pm[9], &pm[10], &t).unwrap();
            let lhs: f64 = (0..512).filter(|&a| event[a]).map(|a| e.at(a) * pm[9].weight_at(a)).sum();
            let rhs: f64 = (0..1024).filter(|&b| event[f.apply_index(b)]).map(|b| v.at(b) * pm[10].weight_at(b)).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-9);
        }
    }
}
