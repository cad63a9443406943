//! The sample spaces `B_n = {0,1}^n`.
//!
//! An atom `d_1 … d_n` is stored as the integer whose binary expansion is the
//! word with `d_1` as the most significant bit. Enumeration order is the
//! numeric order of that index, i.e. lexicographic order on words. With this
//! layout truncation is a right shift and the children of atom `i` are
//! `2i` and `2i + 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest word length representable as a dense vector of atoms.
pub const MAX_T: usize = 30;

/// Default scenario limit on the horizon.
pub const DEFAULT_T_LIMIT: usize = 20;

/// A word `d_1 … d_n` in `B_n`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinWord {
    len: u8,
    bits: u32,
}

/// Number of atoms of `B_n`.
pub fn atom_count(n: usize) -> usize {
    1usize << n
}

pub(crate) fn check_level(n: usize) -> Result<()> {
    if n > MAX_T {
        Err(Error::Capacity { level: n, max: MAX_T })
    } else {
        Ok(())
    }
}

/// All `2^n` words of length `n` in index order.
pub fn enumerate(n: usize) -> Result<Vec<BinWord>> {
    check_level(n)?;
    Ok((0..atom_count(n)).map(|i| BinWord { len: n as u8, bits: i as u32 }).collect())
}

impl BinWord {
    /// The empty word, the only atom of `B_0`.
    pub const EMPTY: BinWord = BinWord { len: 0, bits: 0 };

    pub fn from_index(n: usize, index: usize) -> Result<Self> {
        check_level(n)?;
        if index >= atom_count(n) {
            return Err(Error::InvalidMap(format!("atom index {index} out of range for B_{n}")));
        }
        Ok(BinWord { len: n as u8, bits: index as u32 })
    }

    pub fn from_digits(digits: &[u8]) -> Result<Self> {
        digits.iter().try_fold(BinWord::EMPTY, |w, &d| w.append(d))
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn index(&self) -> usize {
        self.bits as usize
    }

    /// The digit `(w)_k`, 1-based.
    pub fn digit(&self, k: usize) -> u8 {
        assert!(k >= 1 && k <= self.len(), "digit {k} out of range for length {}", self.len);
        ((self.bits >> (self.len() - k)) & 1) as u8
    }

    /// The final digit `d_n`, or `None` for the empty word.
    pub fn last(&self) -> Option<u8> {
        (self.len > 0).then_some((self.bits & 1) as u8)
    }

    /// `w d`, a word of length `n + 1`.
    pub fn append(&self, d: u8) -> Result<Self> {
        if d > 1 {
            return Err(Error::InvalidDigit(d));
        }
        if self.len() >= MAX_T {
            return Err(Error::Capacity { level: self.len() + 1, max: MAX_T });
        }
        Ok(BinWord { len: self.len + 1, bits: (self.bits << 1) | d as u32 })
    }

    /// The first `m` digits.
    pub fn prefix(&self, m: usize) -> BinWord {
        assert!(m <= self.len());
        BinWord { len: m as u8, bits: self.bits >> (self.len() - m) }
    }

    /// `n(j, w)`: how many digits equal `j`.
    pub fn digit_count(&self, j: u8) -> usize {
        let ones = self.bits.count_ones() as usize;
        match j {
            1 => ones,
            0 => self.len() - ones,
            _ => 0,
        }
    }

    pub fn digits(&self) -> impl Iterator<Item = u8> + '_ {
        (1..=self.len()).map(move |k| self.digit(k))
    }
}

impl fmt::Display for BinWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.digits() {
            f.write_str(if d == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BinWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            f.write_str("ε")
        } else {
            fmt::Display::fmt(self, f)
        }
    }
}

impl FromStr for BinWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() > MAX_T {
            return Err(Error::Capacity { level: s.len(), max: MAX_T });
        }
        s.bytes().try_fold(BinWord::EMPTY, |w, b| match b {
            b'0' => w.append(0),
            b'1' => w.append(1),
            _ => Err(Error::ParseWord(s.to_string())),
        })
    }
}

impl Serialize for BinWord {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BinWord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
