//! Exact rational parameters.
//!
//! Quantities such as `η = 1/25` or `η = 2^-96` are accepted as text and kept
//! exact, because the integer choice `k(η)` and the strip-schedule cut index
//! depend on strict inequalities that break under rounding.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An exact rational number with a textual form that round-trips.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(BigRational);

impl Rational {
    pub fn new(inner: BigRational) -> Self {
        Rational(inner)
    }

    pub fn from_integer(n: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    /// Exact conversion of a finite float (every finite f64 is a dyadic rational).
    pub fn from_f64(x: f64) -> Result<Self> {
        BigRational::from_float(x)
            .map(Rational)
            .ok_or_else(|| Error::Parse(format!("non-finite value {x}")))
    }

    /// `base^exp` for integer base and exponent.
    pub fn pow(base: &Rational, exp: i32) -> Rational {
        Rational(num_traits::pow::Pow::pow(&base.0, exp))
    }

    pub fn inner(&self) -> &BigRational {
        &self.0
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    /// Nearest-ish f64 (exact for dyadic values in range).
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or_else(|| {
            if self.0.is_negative() {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        })
    }

    /// Natural logarithm, accurate even when the value under- or overflows f64.
    pub fn ln(&self) -> Result<f64> {
        if !self.0.is_positive() {
            return Err(Error::Parameter(format!("log of non-positive value {self}")));
        }
        Ok(ln_bigint(self.0.numer()) - ln_bigint(self.0.denom()))
    }
}

fn ln_bigint(n: &BigInt) -> f64 {
    debug_assert!(n.sign() == Sign::Plus);
    let bits = n.bits();
    if bits <= 960 {
        return n.to_f64().expect("fits").ln();
    }
    let shift = bits - 64;
    let top: BigInt = n >> shift;
    top.to_f64().expect("fits").ln() + shift as f64 * std::f64::consts::LN_2
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Rational {
    type Err = Error;

    /// Accepts products and quotients of decimal literals and integer powers:
    /// `1/25`, `0.01`, `1e-3`, `2^-96`, `4^-3/25`.
    fn from_str(s: &str) -> Result<Self> {
        let text: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if text.is_empty() {
            return Err(Error::Parse("empty rational".into()));
        }
        let mut acc = BigRational::one();
        let mut op = '*';
        let mut start = 0;
        let bytes = text.as_bytes();
        let mut i = 0;
        while i <= bytes.len() {
            let at_sep = i == bytes.len()
                || ((bytes[i] == b'/' || bytes[i] == b'*') && i > start);
            if at_sep {
                let factor = parse_power(&text[start..i])?;
                acc = match op {
                    '*' => acc * factor,
                    _ => {
                        if factor.is_zero() {
                            return Err(Error::Parse(format!("division by zero in {s:?}")));
                        }
                        acc / factor
                    }
                };
                if i < bytes.len() {
                    op = bytes[i] as char;
                }
                start = i + 1;
            }
            i += 1;
        }
        Ok(Rational(acc))
    }
}

fn parse_power(s: &str) -> Result<BigRational> {
    match s.split_once('^') {
        Some((base, exp)) => {
            let base = parse_decimal(base)?;
            let exp: i32 = exp
                .parse()
                .map_err(|_| Error::Parse(format!("bad exponent {exp:?}")))?;
            if base.is_zero() && exp < 0 {
                return Err(Error::Parse("zero to a negative power".into()));
            }
            Ok(num_traits::pow::Pow::pow(&base, exp))
        }
        None => parse_decimal(s),
    }
}

fn parse_decimal(s: &str) -> Result<BigRational> {
    let bad = || Error::Parse(format!("bad number {s:?}"));
    let (mantissa, exp10) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i32 = s[pos + 1..].parse().map_err(|_| bad())?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut value = BigInt::from_str(if all_digits.is_empty() { "0" } else { &all_digits })
        .map_err(|_| bad())?;
    if negative {
        value = -value;
    }
    let scale = exp10 - frac_part.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    Ok(BigRational::from_integer(value) * num_traits::pow::Pow::pow(&ten, scale))
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Rational {
        s.parse().unwrap()
    }

    #[test]
    fn parses_common_forms() {
        assert_eq!(q("1/25"), Rational::ratio(1, 25));
        assert_eq!(q("0.01"), Rational::ratio(1, 100));
        assert_eq!(q("1e-3"), Rational::ratio(1, 1000));
        assert_eq!(q("2^-3"), Rational::ratio(1, 8));
        assert_eq!(q("4^-1/25"), Rational::ratio(1, 100));
        assert_eq!(q("1.5"), Rational::ratio(3, 2));
        assert_eq!(q("-2.5e1"), Rational::from_integer(-25));
        assert_eq!(q("4/9"), Rational::ratio(4, 9));
    }

    #[test]
    fn rejects_garbage() {
        for s in ["", "abc", "1/", "1//2", "2^x", "1/0", "0^-1", "."] {
            assert!(s.parse::<Rational>().is_err(), "{s:?} should fail");
        }
    }

    #[test]
    fn ln_of_tiny_powers_of_two() {
        let tiny = q("2^-2000");
        let expected = -2000.0 * std::f64::consts::LN_2;
        assert!((tiny.ln().unwrap() - expected).abs() < 1e-12 * expected.abs());
        assert_eq!(q("2^-96").ln().unwrap(), (2f64.powi(-96)).ln());
    }

    #[test]
    fn display_round_trips() {
        for s in ["1/25", "7", "2^-96", "0.0025"] {
            let r = q(s);
            assert_eq!(r.to_string().parse::<Rational>().unwrap(), r);
        }
    }

    #[test]
    fn float_conversion_is_exact() {
        let r = Rational::from_f64(0.1).unwrap();
        assert_eq!(r.to_f64(), 0.1);
        assert_ne!(r, Rational::ratio(1, 10));
    }
}
