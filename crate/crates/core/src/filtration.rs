//! Maps `f_n : B_{n+1} → B_n`, their composites `f_{m,n}`, and schedules of
//! such maps over a horizon.
//!
//! Two canonical maps exist:
//!
//! * `Full`: `d_1 … d_n d_{n+1} ↦ d_1 … d_n` (truncation, ordinary information flow);
//! * `Drop`: `d_1 … d_{n-1} d_n d_{n+1} ↦ d_1 … d_{n-1} 0` (the step-`n` digit is forgotten).
//!
//! A map is stored as a table of target indices together with its preimages in
//! compressed form, so `preimage` and `branch_split` are slices.

use serde::{Deserialize, Serialize};

use crate::binword::{atom_count, check_level, BinWord};
use crate::error::{Error, Result};
use crate::measure::FiniteMeasure;
use crate::scalar::{Scalar, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Full,
    Drop,
    Custom,
}

impl std::fmt::Display for MapKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MapKind::Full => "full",
            MapKind::Drop => "drop",
            MapKind::Custom => "custom",
        })
    }
}

/// A total function `B_source → B_target` with `target <= source`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiltMap {
    source_level: usize,
    target_level: usize,
    kind: MapKind,
    table: Vec<u32>,
    pre_offsets: Vec<u32>,
    pre_atoms: Vec<u32>,
}

impl FiltMap {
    /// The tabulated `Full` or `Drop` map `B_{n+1} → B_n`.
    pub fn make(kind: MapKind, n: usize) -> Result<Self> {
        check_level(n + 1)?;
        let len = atom_count(n + 1);
        let table: Vec<u32> = match kind {
            MapKind::Full => (0..len).map(|b| (b >> 1) as u32).collect(),
            MapKind::Drop => {
                if n == 0 {
                    return Err(Error::InvalidMap("drop map needs n >= 1 (no digit d_n at n = 0)".into()));
                }
                // d_1 … d_{n-1} d_n d_{n+1} ↦ d_1 … d_{n-1} 0
                (0..len).map(|b| ((b >> 2) << 1) as u32).collect()
            }
            MapKind::Custom => return Err(Error::InvalidMap("custom maps are built from explicit tables".into())),
        };
        Ok(Self::build(n + 1, n, kind, table))
    }

    pub fn full(n: usize) -> Result<Self> {
        Self::make(MapKind::Full, n)
    }

    pub fn drop(n: usize) -> Result<Self> {
        Self::make(MapKind::Drop, n)
    }

    /// A user-supplied map `B_{n+1} → B_n`; `table[i]` is the target index of source atom `i`.
    pub fn custom(n: usize, table: Vec<usize>) -> Result<Self> {
        Self::from_table(n + 1, n, MapKind::Custom, table)
    }

    /// Builds a custom map from source/target word pairs covering `B_{n+1}`.
    pub fn custom_from_words(n: usize, targets: &[BinWord]) -> Result<Self> {
        if let Some(bad) = targets.iter().find(|w| w.len() != n) {
            return Err(Error::LevelMismatch { expected: n, found: bad.len() });
        }
        Self::custom(n, targets.iter().map(|w| w.index()).collect())
    }

    pub fn from_table(source: usize, target: usize, kind: MapKind, table: Vec<usize>) -> Result<Self> {
        check_level(source)?;
        if target > source {
            return Err(Error::InvalidMap(format!("target level {target} exceeds source level {source}")));
        }
        if table.len() != atom_count(source) {
            return Err(Error::InvalidMap(format!("table for B_{source} needs {} entries, got {}", atom_count(source), table.len())));
        }
        if let Some(pos) = table.iter().position(|&t| t >= atom_count(target)) {
            return Err(Error::InvalidMap(format!("entry {pos} maps to index {} outside B_{target}", table[pos])));
        }
        Ok(Self::build(source, target, kind, table.into_iter().map(|t| t as u32).collect()))
    }

    /// The identity arrow on `B_n`.
    pub fn identity(n: usize) -> Result<Self> {
        check_level(n)?;
        Ok(Self::build(n, n, MapKind::Custom, (0..atom_count(n) as u32).collect()))
    }

    fn build(source: usize, target: usize, kind: MapKind, table: Vec<u32>) -> Self {
        let mut counts = vec![0u32; atom_count(target) + 1];
        for &t in &table {
            counts[t as usize + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let pre_offsets = counts.clone();
        let mut cursor = counts;
        let mut pre_atoms = vec![0u32; table.len()];
        for (b, &t) in table.iter().enumerate() {
            pre_atoms[cursor[t as usize] as usize] = b as u32;
            cursor[t as usize] += 1;
        }
        FiltMap { source_level: source, target_level: target, kind, table, pre_offsets, pre_atoms }
    }

    pub fn source_level(&self) -> usize {
        self.source_level
    }

    pub fn target_level(&self) -> usize {
        self.target_level
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn table(&self) -> &[u32] {
        &self.table
    }

    pub fn apply_index(&self, source_index: usize) -> usize {
        self.table[source_index] as usize
    }

    pub fn apply(&self, b: &BinWord) -> Result<BinWord> {
        self.check_source(b)?;
        BinWord::from_index(self.target_level, self.apply_index(b.index()))
    }

    /// Source indices mapping to target index `a`, ascending.
    pub fn preimage_indices(&self, a: usize) -> &[u32] {
        let lo = self.pre_offsets[a] as usize;
        let hi = self.pre_offsets[a + 1] as usize;
        &self.pre_atoms[lo..hi]
    }

    pub fn preimage(&self, a: &BinWord) -> Result<Vec<BinWord>> {
        self.check_target(a)?;
        Ok(self.words(self.preimage_indices(a.index()).iter().copied()))
    }

    /// Source indices in the preimage of `a` whose last digit is `j`.
    pub fn branch_indices(&self, a: usize, j: u8) -> impl Iterator<Item = usize> + '_ {
        self.preimage_indices(a).iter().map(|&b| b as usize).filter(move |b| (b & 1) as u8 == j)
    }

    /// `I(j, a) = { e ∈ f^{-1}(a) | last digit of e is j }`.
    pub fn branch_split(&self, a: &BinWord, j: u8) -> Result<Vec<BinWord>> {
        self.check_target(a)?;
        if j > 1 {
            return Err(Error::InvalidDigit(j));
        }
        Ok(self.words(self.branch_indices(a.index(), j).map(|b| b as u32)))
    }

    /// Which target atoms are hit.
    pub fn image_mask(&self) -> Vec<bool> {
        (0..atom_count(self.target_level)).map(|a| !self.preimage_indices(a).is_empty()).collect()
    }

    /// `outer ∘ self`.
    pub fn then(&self, outer: &FiltMap) -> Result<FiltMap> {
        if self.target_level != outer.source_level {
            return Err(Error::BrokenChain(format!(
                "B_{} -> B_{} cannot be followed by B_{} -> B_{}",
                self.source_level, self.target_level, outer.source_level, outer.target_level
            )));
        }
        let table = self.table.iter().map(|&t| outer.table[t as usize]).collect();
        let kind = if self.kind == MapKind::Full && outer.kind == MapKind::Full { MapKind::Full } else { MapKind::Custom };
        Ok(Self::build(self.source_level, outer.target_level, kind, table))
    }

    /// For a one-step map, the `g` with `f = g ∘ f_full`, i.e. `g(a) = f(a0) = f(a1)`.
    pub fn factor_through_truncation(&self) -> std::result::Result<Vec<u32>, BinWord> {
        assert_eq!(self.source_level, self.target_level + 1, "one-step maps only");
        (0..atom_count(self.target_level))
            .map(|a| {
                let (x, y) = (self.table[2 * a], self.table[2 * a + 1]);
                if x == y {
                    Ok(x)
                } else {
                    Err(BinWord::from_index(self.target_level, a).expect("in range"))
                }
            })
            .collect()
    }

    /// `m ∘ f^{-1}` as a weight vector on the target.
    pub fn pushforward<S: Scalar>(&self, source: &FiniteMeasure<S>) -> Result<Vec<S>> {
        self.check_measures_source(source)?;
        Ok((0..atom_count(self.target_level))
            .map(|a| self.preimage_indices(a).iter().fold(S::zero(), |acc, &b| acc + source.weight_at(b as usize).clone()))
            .collect())
    }

    fn words(&self, indices: impl Iterator<Item = u32>) -> Vec<BinWord> {
        indices.map(|b| BinWord::from_index(self.source_level, b as usize).expect("in range")).collect()
    }

    fn check_source(&self, b: &BinWord) -> Result<()> {
        if b.len() != self.source_level {
            return Err(Error::LevelMismatch { expected: self.source_level, found: b.len() });
        }
        Ok(())
    }

    fn check_target(&self, a: &BinWord) -> Result<()> {
        if a.len() != self.target_level {
            return Err(Error::LevelMismatch { expected: self.target_level, found: a.len() });
        }
        Ok(())
    }

    fn check_measures_source<S: Scalar>(&self, source: &FiniteMeasure<S>) -> Result<()> {
        if source.level() != self.source_level {
            return Err(Error::LevelMismatch { expected: self.source_level, found: source.level() });
        }
        Ok(())
    }

    fn check_measures<S: Scalar>(&self, source: &FiniteMeasure<S>, target: &FiniteMeasure<S>) -> Result<()> {
        self.check_measures_source(source)?;
        if target.level() != self.target_level {
            return Err(Error::LevelMismatch { expected: self.target_level, found: target.level() });
        }
        Ok(())
    }
}

/// `f_{m,n} = f_m ∘ f_{m+1} ∘ … ∘ f_{n-1} : B_n → B_m`, where `maps[i]` is `f_i`.
/// `m == n` gives the identity.
pub fn compose(maps: &[FiltMap], m: usize, n: usize) -> Result<FiltMap> {
    if m > n {
        return Err(Error::BrokenChain(format!("m = {m} exceeds n = {n}")));
    }
    if m == n {
        return FiltMap::identity(n);
    }
    if n > maps.len() {
        return Err(Error::BrokenChain(format!("only {} steps available, need up to {n}", maps.len())));
    }
    for (i, f) in maps.iter().enumerate().take(n).skip(m) {
        if f.source_level != i + 1 || f.target_level != i {
            return Err(Error::BrokenChain(format!(
                "step {i} maps B_{} -> B_{}, expected B_{} -> B_{i}",
                f.source_level,
                f.target_level,
                i + 1
            )));
        }
    }
    let mut acc = maps[n - 1].clone();
    for f in maps[m..n - 1].iter().rev() {
        acc = acc.then(f)?;
    }
    Ok(acc)
}

/// First target atom that is null while its preimage is not, if any.
///
/// Preimages of distinct atoms are disjoint and every event is a union of
/// atoms, so the atomwise check decides null preservation.
pub fn null_violation<S: Scalar>(
    f: &FiltMap,
    source: &FiniteMeasure<S>,
    target: &FiniteMeasure<S>,
    tol: &Tolerances,
) -> Result<Option<BinWord>> {
    f.check_measures(source, target)?;
    let bad = (0..atom_count(f.target_level))
        .find(|&a| target.is_null_atom(a, tol) && f.preimage_indices(a).iter().any(|&b| !source.is_null_atom(b as usize, tol)));
    Ok(bad.map(|a| BinWord::from_index(f.target_level, a).expect("in range")))
}

/// `f^{-1}(N)` is null for every null event `N` of the target.
pub fn is_null_preserving<S: Scalar>(f: &FiltMap, source: &FiniteMeasure<S>, target: &FiniteMeasure<S>, tol: &Tolerances) -> Result<bool> {
    Ok(null_violation(f, source, target, tol)?.is_none())
}

/// First target atom with positive weight whose preimage is null, if any.
pub fn reflection_violation<S: Scalar>(
    f: &FiltMap,
    source: &FiniteMeasure<S>,
    target: &FiniteMeasure<S>,
    tol: &Tolerances,
) -> Result<Option<BinWord>> {
    f.check_measures(source, target)?;
    let bad = (0..atom_count(f.target_level))
        .find(|&a| !target.is_null_atom(a, tol) && f.preimage_indices(a).iter().all(|&b| source.is_null_atom(b as usize, tol)));
    Ok(bad.map(|a| BinWord::from_index(f.target_level, a).expect("in range")))
}

/// The converse condition: an event whose preimage is null is itself null.
///
/// `f_full` always satisfies it for product measures; `f_drop` at step `n`
/// satisfies it iff `p_n = 0` (the atoms ending in 1 have empty preimage).
pub fn is_null_reflecting<S: Scalar>(f: &FiltMap, source: &FiniteMeasure<S>, target: &FiniteMeasure<S>, tol: &Tolerances) -> Result<bool> {
    Ok(reflection_violation(f, source, target, tol)?.is_none())
}

/// `target = source ∘ f^{-1}` atomwise.
pub fn is_measure_preserving<S: Scalar>(
    f: &FiltMap,
    source: &FiniteMeasure<S>,
    target: &FiniteMeasure<S>,
    tol: &Tolerances,
) -> Result<bool> {
    f.check_measures(source, target)?;
    let pushed = f.pushforward(source)?;
    Ok(pushed.iter().zip(target.weights()).all(|(x, y)| x.approx_eq(y, tol.equality)))
}

/// Named schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Classical,
    DropK { k: usize },
    Elderly { k0: usize, k1: usize },
    Custom,
}

/// The maps `f_0, …, f_{T-1}` of a filtration over horizon `T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiltrationSchedule {
    horizon: usize,
    kind: ScheduleKind,
    maps: Vec<FiltMap>,
}

impl FiltrationSchedule {
    pub fn classical(horizon: usize) -> Result<Self> {
        Self::from_kinds(horizon, ScheduleKind::Classical, |_| MapKind::Full)
    }

    /// Drop exactly at step `k`, `1 <= k <= T - 1`.
    pub fn drop_k(horizon: usize, k: usize) -> Result<Self> {
        if k == 0 || k >= horizon {
            return Err(Error::InvalidSchedule(format!("drop-k needs 1 <= k <= T - 1, got k = {k}, T = {horizon}")));
        }
        Self::from_kinds(horizon, ScheduleKind::DropK { k }, |n| if n == k { MapKind::Drop } else { MapKind::Full })
    }

    /// Drop on `k0 <= n <= T - k1` (clipped to the steps `n <= T - 1`).
    pub fn elderly(horizon: usize, k0: usize, k1: usize) -> Result<Self> {
        if k0 == 0 {
            return Err(Error::InvalidSchedule("elderly schedule needs k0 >= 1".into()));
        }
        let last = horizon.saturating_sub(k1).min(horizon.saturating_sub(1));
        if k1 > horizon || k0 > last {
            return Err(Error::InvalidSchedule(format!(
                "elderly window k0 = {k0} ..= T - k1 = {} is empty for T = {horizon}",
                horizon as isize - k1 as isize
            )));
        }
        Self::from_kinds(
            horizon,
            ScheduleKind::Elderly { k0, k1 },
            |n| {
                if (k0..=last).contains(&n) {
                    MapKind::Drop
                } else {
                    MapKind::Full
                }
            },
        )
    }

    /// Arbitrary maps; `maps[n]` must go `B_{n+1} → B_n`.
    pub fn custom(maps: Vec<FiltMap>) -> Result<Self> {
        let horizon = maps.len();
        check_level(horizon)?;
        for (n, f) in maps.iter().enumerate() {
            if f.source_level != n + 1 || f.target_level != n {
                return Err(Error::InvalidSchedule(format!(
                    "step {n} maps B_{} -> B_{}, expected B_{} -> B_{n}",
                    f.source_level,
                    f.target_level,
                    n + 1
                )));
            }
        }
        Ok(FiltrationSchedule { horizon, kind: ScheduleKind::Custom, maps })
    }

    fn from_kinds(horizon: usize, kind: ScheduleKind, step: impl Fn(usize) -> MapKind) -> Result<Self> {
        check_level(horizon)?;
        let maps = (0..horizon).map(|n| FiltMap::make(step(n), n)).collect::<Result<_>>()?;
        Ok(FiltrationSchedule { horizon, kind, maps })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn maps(&self) -> &[FiltMap] {
        &self.maps
    }

    /// `f_n : B_{n+1} → B_n`.
    pub fn map(&self, n: usize) -> &FiltMap {
        &self.maps[n]
    }

    pub fn step_kinds(&self) -> Vec<MapKind> {
        self.maps.iter().map(|f| f.kind).collect()
    }

    /// `f_{m,n}`.
    pub fn compose(&self, m: usize, n: usize) -> Result<FiltMap> {
        compose(&self.maps, m, n)
    }

    /// Same levels and identical tables (measures are not part of a schedule).
    pub fn same_skeleton(&self, other: &FiltrationSchedule) -> bool {
        self.horizon == other.horizon
            && self
                .maps
                .iter()
                .zip(&other.maps)
                .all(|(f, g)| f.source_level == g.source_level && f.target_level == g.target_level && f.table == g.table)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepStatus {
    pub step: usize,
    pub kind: MapKind,
    pub null_preserving: bool,
    /// A null target atom whose preimage carries mass.
    pub preserving_witness: Option<BinWord>,
    pub null_reflecting: bool,
    /// A charged target atom whose preimage is null.
    pub reflecting_witness: Option<BinWord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScheduleReport {
    pub steps: Vec<StepStatus>,
}

impl ScheduleReport {
    /// Every arrow is null-preserving, i.e. the schedule is a functor into Prob.
    pub fn is_legal(&self) -> bool {
        self.steps.iter().all(|s| s.null_preserving)
    }

    /// Every arrow also reflects null sets.
    pub fn is_reflecting(&self) -> bool {
        self.steps.iter().all(|s| s.null_reflecting)
    }

    pub fn failing_steps(&self) -> Vec<usize> {
        self.steps.iter().filter(|s| !s.null_preserving).map(|s| s.step).collect()
    }
}

/// Null-preservation status of every step against `measures[0..=T]`.
pub fn validate_schedule<S: Scalar>(
    schedule: &FiltrationSchedule,
    measures: &[FiniteMeasure<S>],
    tol: &Tolerances,
) -> Result<ScheduleReport> {
    if measures.len() != schedule.horizon + 1 {
        return Err(Error::HorizonMismatch { expected: schedule.horizon + 1, found: measures.len() });
    }
    let steps = schedule
        .maps
        .iter()
        .enumerate()
        .map(|(n, f)| {
            let preserving_witness = null_violation(f, &measures[n + 1], &measures[n], tol)?;
            let reflecting_witness = reflection_violation(f, &measures[n + 1], &measures[n], tol)?;
            Ok(StepStatus {
                step: n,
                kind: f.kind,
                null_preserving: preserving_witness.is_none(),
                preserving_witness,
                null_reflecting: reflecting_witness.is_none(),
                reflecting_witness,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ScheduleReport { steps })
}
