//! Number backends.
//!
//! Everything in the crate is generic over [`Scalar`], which is implemented
//! for `f64` (tolerance-based comparisons) and for [`Exact`], an arbitrary
//! precision rational in which null-set logic and every identity is bit-exact.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational arithmetic.
pub type Exact = BigRational;

/// Tolerance policy for the float backend. The exact backend ignores it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Weights at or below this are treated as zero.
    pub null: f64,
    /// Allowed |sum of weights - 1| for a probability measure.
    pub normalization: f64,
    /// Allowed deviation in identities (martingale checks, marginals, ...).
    pub equality: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { null: 1e-12, normalization: 1e-9, equality: 1e-9 }
    }
}

pub trait Scalar: Clone + fmt::Debug + fmt::Display + PartialOrd + Send + Sync + 'static + Num + Signed + FromPrimitive {
    /// True for backends where comparisons are exact.
    const EXACT: bool;

    /// Converts a float. The exact backend goes through the shortest decimal
    /// representation, so `0.3` becomes `3/10`.
    fn from_f64_value(x: f64) -> Self;

    fn to_f64(&self) -> f64;

    /// Parses `"0.25"`, `"1e-3"` or `"1/4"`.
    fn parse_literal(s: &str) -> Result<Self>;

    /// `|self| <= tol`, or `self == 0` for exact backends.
    fn is_negligible(&self, tol: f64) -> bool;

    fn to_json(&self) -> serde_json::Value;

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num).unwrap() / Self::from_i64(den).unwrap()
    }

    fn half() -> Self {
        Self::from_ratio(1, 2)
    }

    fn powu(&self, exp: usize) -> Self {
        let mut acc = Self::one();
        for _ in 0..exp {
            acc = acc * self.clone();
        }
        acc
    }

    /// `|self - other| <= tol` (exact equality for exact backends).
    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self.clone() - other.clone()).is_negligible(tol)
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_f64_value(x: f64) -> Self {
        x
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn parse_literal(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Some((n, d)) = t.split_once('/') {
            let n: f64 = n.trim().parse().map_err(|_| Error::ParseNumber(s.into()))?;
            let d: f64 = d.trim().parse().map_err(|_| Error::ParseNumber(s.into()))?;
            return Some(n / d).filter(|x| x.is_finite()).ok_or_else(|| Error::ParseNumber(s.into()));
        }
        t.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::ParseNumber(s.into()))
    }

    fn is_negligible(&self, tol: f64) -> bool {
        self.abs() <= tol
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::Number::from_f64(*self).map(serde_json::Value::Number).unwrap_or(serde_json::Value::Null)
    }
}

impl Scalar for Exact {
    const EXACT: bool = true;

    fn from_f64_value(x: f64) -> Self {
        // Display for f64 is the shortest string that round-trips.
        parse_decimal(&format!("{x}")).expect("finite float")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn parse_literal(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Some((n, d)) = t.split_once('/') {
            let n = parse_decimal(n.trim()).ok_or_else(|| Error::ParseNumber(s.into()))?;
            let d = parse_decimal(d.trim()).ok_or_else(|| Error::ParseNumber(s.into()))?;
            if d.is_zero() {
                return Err(Error::ParseNumber(s.into()));
            }
            return Ok(n / d);
        }
        parse_decimal(t).ok_or_else(|| Error::ParseNumber(s.into()))
    }

    fn is_negligible(&self, _tol: f64) -> bool {
        self.is_zero()
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::Value::String(self.to_string())
    }
}

/// Parses a decimal literal with optional exponent into an exact rational.
fn parse_decimal(s: &str) -> Option<Exact> {
    if s.is_empty() {
        return None;
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut numer = BigInt::from_str_radix(if all.is_empty() { "0" } else { &all }, 10).ok()?;
    if negative {
        numer = -numer;
    }
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u8);
    let value = if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Some(value)
}

/// Reports the largest absolute value, used by checks that print a max deviation.
pub fn max_abs<S: Scalar>(values: impl IntoIterator<Item = S>) -> S {
    values.into_iter().map(|v| v.abs()).fold(S::zero(), |acc, v| if v > acc { v } else { acc })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_literals_are_exact() {
        let x = Exact::parse_literal("0.3").unwrap();
        assert_eq!(x, Exact::new(3.into(), 10.into()));
        assert_eq!(Exact::parse_literal("-1.25e1").unwrap(), Exact::from_integer((-25).into()) / Exact::from_integer(2.into()));
        assert_eq!(Exact::parse_literal("3/8").unwrap(), Exact::new(3.into(), 8.into()));
        assert_eq!(Exact::from_f64_value(0.1), Exact::new(1.into(), 10.into()));
        assert!(Exact::parse_literal("abc").is_err());
        assert!(Exact::parse_literal("1/0").is_err());
    }

    #[test]
    fn float_literals() {
        assert_eq!(f64::parse_literal("1/4").unwrap(), 0.25);
        assert_eq!(f64::parse_literal(" 0.5 ").unwrap(), 0.5);
        assert!(f64::parse_literal("x").is_err());
    }

    #[test]
    fn negligible() {
        assert!(1e-13f64.is_negligible(1e-12));
        assert!(!1e-11f64.is_negligible(1e-12));
        assert!(!Exact::from_ratio(1, 1_000_000_000_000).is_negligible(1.0));
        assert!(Exact::zero().is_negligible(0.0));
    }
}
