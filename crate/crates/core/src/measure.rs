//! Probability measures on `(B_n, 2^{B_n})`.
//!
//! Every subset of `B_n` is an event, so a measure is just its vector of atom
//! weights in index order.

use crate::binword::{atom_count, check_level, BinWord};
use crate::error::{Error, Result};
use crate::exec;
use crate::scalar::{Scalar, Tolerances};

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMeasure<S> {
    level: usize,
    weights: Vec<S>,
}

impl<S: Scalar> FiniteMeasure<S> {
    /// Validates non-negativity and normalisation (exact for rationals).
    pub fn new(level: usize, weights: Vec<S>, tol: &Tolerances) -> Result<Self> {
        check_level(level)?;
        if weights.len() != atom_count(level) {
            return Err(Error::InvalidMeasure(format!("level {level} needs {} weights, got {}", atom_count(level), weights.len())));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| **w < S::zero()) {
            let atom = BinWord::from_index(level, i)?;
            return Err(Error::InvalidMeasure(format!("negative weight {w} at atom {atom:?}")));
        }
        let total = weights.iter().cloned().fold(S::zero(), |a, b| a + b);
        if !total.approx_eq(&S::one(), tol.normalization) {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        Ok(FiniteMeasure { level, weights })
    }

    pub(crate) fn from_raw(level: usize, weights: Vec<S>) -> Self {
        debug_assert_eq!(weights.len(), atom_count(level));
        FiniteMeasure { level, weights }
    }

    pub fn uniform(level: usize) -> Result<Self> {
        check_level(level)?;
        let w = S::one() / S::from_usize(atom_count(level)).unwrap();
        Ok(FiniteMeasure { level, weights: vec![w; atom_count(level)] })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn weight(&self, atom: &BinWord) -> Result<&S> {
        self.check_atom(atom)?;
        Ok(&self.weights[atom.index()])
    }

    pub fn weight_at(&self, index: usize) -> &S {
        &self.weights[index]
    }

    /// Whether the atom with this index is null.
    pub fn is_null_atom(&self, index: usize, tol: &Tolerances) -> bool {
        self.weights[index].is_negligible(tol.null)
    }

    /// Probability of a set of atoms; duplicates count once.
    pub fn event_prob(&self, atoms: &[BinWord]) -> Result<S> {
        let mut seen = vec![false; self.weights.len()];
        let mut total = S::zero();
        for atom in atoms {
            self.check_atom(atom)?;
            if !std::mem::replace(&mut seen[atom.index()], true) {
                total = total + self.weights[atom.index()].clone();
            }
        }
        Ok(total)
    }

    /// True iff the event has probability zero (within the null tolerance).
    pub fn is_null(&self, atoms: &[BinWord], tol: &Tolerances) -> Result<bool> {
        Ok(self.event_prob(atoms)?.is_negligible(tol.null))
    }

    pub fn total(&self) -> S {
        self.weights.iter().cloned().fold(S::zero(), |a, b| a + b)
    }

    /// Atomwise comparison.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.level == other.level && self.weights.iter().zip(&other.weights).all(|(a, b)| a.approx_eq(b, tol))
    }

    fn check_atom(&self, atom: &BinWord) -> Result<()> {
        if atom.len() != self.level {
            return Err(Error::LevelMismatch { expected: self.level, found: atom.len() });
        }
        Ok(())
    }
}

/// The up-probabilities `p_1, p_2, …` materialised up to some horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSequence<S> {
    p: Vec<S>,
}

impl<S: Scalar> ProbSequence<S> {
    pub fn new(p: Vec<S>) -> Result<Self> {
        for (i, value) in p.iter().enumerate() {
            if *value < S::zero() || *value > S::one() {
                return Err(Error::InvalidProbability { index: i + 1, value: value.to_string() });
            }
        }
        Ok(ProbSequence { p })
    }

    pub fn constant(p: S, horizon: usize) -> Result<Self> {
        Self::new(vec![p; horizon])
    }

    /// Number of materialised terms.
    pub fn horizon(&self) -> usize {
        self.p.len()
    }

    /// `p_i`, 1-based.
    pub fn get(&self, i: usize) -> &S {
        &self.p[i - 1]
    }

    pub fn values(&self) -> &[S] {
        &self.p
    }

    /// Some `p_i` with `i <= horizon` lies strictly between 0 and 1.
    pub fn is_non_trivial(&self, horizon: usize) -> bool {
        self.p.iter().take(horizon).any(|p| *p > S::zero() && *p < S::one())
    }
}

/// `P_n({d_1…d_n}) = ∏ p_i^{d_i} (1 - p_i)^{1 - d_i}` with `0^0 = 1`.
pub fn product_measure<S: Scalar>(p: &ProbSequence<S>, n: usize) -> Result<FiniteMeasure<S>> {
    check_level(n)?;
    if n > p.horizon() {
        return Err(Error::SequenceTooShort { available: p.horizon(), requested: n });
    }
    let up = &p.p[..n];
    let down: Vec<S> = up.iter().map(|x| S::one() - x.clone()).collect();
    let weights = exec::tabulate(atom_count(n), |index| {
        (0..n).fold(S::one(), |acc, i| {
            // digit d_{i+1} sits at bit n-1-i
            if (index >> (n - 1 - i)) & 1 == 1 {
                acc * up[i].clone()
            } else {
                acc * down[i].clone()
            }
        })
    });
    Ok(FiniteMeasure::from_raw(n, weights))
}

/// `P_0, …, P_T`.
pub fn product_measures<S: Scalar>(p: &ProbSequence<S>, horizon: usize) -> Result<Vec<FiniteMeasure<S>>> {
    (0..=horizon).map(|n| product_measure(p, n)).collect()
}
