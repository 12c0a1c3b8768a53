//! Probability arithmetic shared by the exact-rational and float64 modes.
//!
//! Every computation in the crate is generic over [`Mass`]. Rational mode keeps
//! masses, cutoff randomizations and code thresholds exact; float mode trades
//! exactness for speed. Logarithms are always evaluated in `f64`.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = num_rational::BigRational;

/// Largest denominator used when a decimal probability is turned into a rational.
pub const MAX_DECIMAL_DENOMINATOR: u64 = 1_000_000_000;

/// Absolute tolerance for float-mode comparisons of masses.
pub const FLOAT_MASS_TOL: f64 = 1e-13;

/// Relative tolerance (on the log2 scale) for float-mode likelihood equality.
pub const FLOAT_LOG_TOL: f64 = 1e-12;

pub trait Mass: Clone + fmt::Debug + PartialEq + Send + Sync + 'static {
    /// True when arithmetic is exact.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_u64(n: u64) -> Self;
    fn from_biguint(n: &BigUint) -> Self;
    fn from_rational(r: &Rational) -> Self;

    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn div(&self, other: &Self) -> Self;
    fn pow(&self, k: u32) -> Self;

    fn cmp_mass(&self, other: &Self) -> Ordering;
    fn is_zero(&self) -> bool;
    fn is_negative(&self) -> bool;

    /// `self <= bound`, with float mode allowing [`FLOAT_MASS_TOL`] slack.
    fn at_most(&self, bound: &Self) -> bool;

    /// Equality of two likelihood keys: exact for rationals, within
    /// [`FLOAT_LOG_TOL`] on the log2 scale for floats.
    fn same_likelihood(&self, other: &Self) -> bool;

    /// `floor(self / unit)` for nonnegative `self` and positive `unit`.
    fn floor_div(&self, unit: &Self) -> BigUint;

    fn to_f64(&self) -> f64;

    /// Base-2 logarithm of a positive mass, accurate even when the rational
    /// has numerators or denominators far outside the `f64` range.
    fn log2(&self) -> f64;

    /// Snap tiny float round-off into `[0, 1]`; identity for rationals.
    fn clamp_unit(self) -> Self;

    /// JSON rendering: `"p/q"` strings in rational mode, numbers in float mode.
    fn to_json(&self) -> serde_json::Value;

    fn sum<'a, I: IntoIterator<Item = &'a Self>>(items: I) -> Self {
        items.into_iter().fold(Self::zero(), |acc, m| acc.add(m))
    }

    /// Numerator of a mass over a unit shared by one family of likelihoods.
    /// Within a family, products, sums and comparisons of numerators need no
    /// normalization; `mass = unscale(numerator, unit)`.
    type Scaled: Clone + fmt::Debug + PartialEq + Send + Sync;

    /// Numerators of `row` and their shared unit.
    fn scale_row(row: &[Self]) -> (Vec<Self::Scaled>, Self);
    fn scaled_zero() -> Self::Scaled;
    fn scaled_one() -> Self::Scaled;
    fn scaled_add(a: &Self::Scaled, b: &Self::Scaled) -> Self::Scaled;
    fn scaled_mul(a: &Self::Scaled, b: &Self::Scaled) -> Self::Scaled;
    fn scaled_mul_count(a: &Self::Scaled, count: &BigUint) -> Self::Scaled;
    fn scaled_cmp(a: &Self::Scaled, b: &Self::Scaled) -> Ordering;
    /// Numerator analogue of [`Mass::same_likelihood`].
    fn scaled_same(a: &Self::Scaled, b: &Self::Scaled) -> bool;
    fn scaled_log2(a: &Self::Scaled) -> f64;
    fn unscale(a: &Self::Scaled, unit: &Self) -> Self;
}

impl Mass for Rational {
    const EXACT: bool = true;

    type Scaled = BigUint;

    fn scale_row(row: &[Self]) -> (Vec<BigUint>, Self) {
        let den = row.iter().fold(BigInt::one(), |acc, p| acc.lcm(p.denom()));
        let scaled = row
            .iter()
            .map(|p| (p.numer() * (&den / p.denom())).to_biguint().expect("masses are nonnegative"))
            .collect();
        (scaled, Rational::new(BigInt::one(), den))
    }
    fn scaled_zero() -> BigUint {
        BigUint::zero()
    }
    fn scaled_one() -> BigUint {
        BigUint::one()
    }
    fn scaled_add(a: &BigUint, b: &BigUint) -> BigUint {
        a + b
    }
    fn scaled_mul(a: &BigUint, b: &BigUint) -> BigUint {
        a * b
    }
    fn scaled_mul_count(a: &BigUint, count: &BigUint) -> BigUint {
        a * count
    }
    fn scaled_cmp(a: &BigUint, b: &BigUint) -> Ordering {
        a.cmp(b)
    }
    fn scaled_same(a: &BigUint, b: &BigUint) -> bool {
        a == b
    }
    fn scaled_log2(a: &BigUint) -> f64 {
        log2_biguint(a)
    }
    fn unscale(a: &BigUint, unit: &Self) -> Self {
        Rational::from_integer(BigInt::from_biguint(Sign::Plus, a.clone())) * unit
    }

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_u64(n: u64) -> Self {
        Rational::from_integer(BigInt::from(n))
    }
    fn from_biguint(n: &BigUint) -> Self {
        Rational::from_integer(BigInt::from_biguint(Sign::Plus, n.clone()))
    }
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn pow(&self, k: u32) -> Self {
        num_traits::pow(self.clone(), k as usize)
    }
    fn cmp_mass(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
    fn at_most(&self, bound: &Self) -> bool {
        self <= bound
    }
    fn same_likelihood(&self, other: &Self) -> bool {
        self == other
    }
    fn floor_div(&self, unit: &Self) -> BigUint {
        let q = self / unit;
        let (n, d) = (q.numer(), q.denom());
        n.div_floor(d).to_biguint().unwrap_or_default()
    }
    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }
    fn log2(&self) -> f64 {
        log2_bigint(self.numer()) - log2_bigint(self.denom())
    }
    fn clamp_unit(self) -> Self {
        self
    }
    fn to_json(&self) -> serde_json::Value {
        serde_json::Value::String(format_rational(self))
    }
}

impl Mass for f64 {
    const EXACT: bool = false;

    type Scaled = f64;

    fn scale_row(row: &[Self]) -> (Vec<f64>, Self) {
        (row.to_vec(), 1.0)
    }
    fn scaled_zero() -> f64 {
        0.0
    }
    fn scaled_one() -> f64 {
        1.0
    }
    fn scaled_add(a: &f64, b: &f64) -> f64 {
        a + b
    }
    fn scaled_mul(a: &f64, b: &f64) -> f64 {
        a * b
    }
    fn scaled_mul_count(a: &f64, count: &BigUint) -> f64 {
        a * <f64 as Mass>::from_biguint(count)
    }
    fn scaled_cmp(a: &f64, b: &f64) -> Ordering {
        a.total_cmp(b)
    }
    fn scaled_same(a: &f64, b: &f64) -> bool {
        Mass::same_likelihood(a, b)
    }
    fn scaled_log2(a: &f64) -> f64 {
        f64::log2(*a)
    }
    fn unscale(a: &f64, unit: &Self) -> Self {
        a * unit
    }

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_u64(n: u64) -> Self {
        n as f64
    }
    fn from_biguint(n: &BigUint) -> Self {
        n.to_f64().unwrap_or(f64::INFINITY)
    }
    fn from_rational(r: &Rational) -> Self {
        rational_to_f64(r)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn pow(&self, k: u32) -> Self {
        self.powi(k as i32)
    }
    fn cmp_mass(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn is_negative(&self) -> bool {
        *self < 0.0
    }
    fn at_most(&self, bound: &Self) -> bool {
        *self <= *bound + FLOAT_MASS_TOL
    }
    fn same_likelihood(&self, other: &Self) -> bool {
        if *self == *other {
            return true;
        }
        if *self <= 0.0 || *other <= 0.0 {
            return false;
        }
        let (a, b) = (self.log2(), other.log2());
        (a - b).abs() <= FLOAT_LOG_TOL * a.abs().max(b.abs()).max(1.0)
    }
    fn floor_div(&self, unit: &Self) -> BigUint {
        let q = (self / unit).floor();
        if q <= 0.0 || !q.is_finite() {
            return BigUint::zero();
        }
        num_traits::FromPrimitive::from_f64(q).unwrap_or_default()
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn log2(&self) -> f64 {
        f64::log2(*self)
    }
    fn clamp_unit(self) -> Self {
        self.clamp(0.0, 1.0)
    }
    fn to_json(&self) -> serde_json::Value {
        serde_json::Number::from_f64(*self)
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null)
    }
}

/// Base-2 logarithm of a positive big integer.
pub fn log2_bigint(n: &BigInt) -> f64 {
    log2_biguint(n.magnitude())
}

pub fn log2_biguint(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().map_or(f64::NEG_INFINITY, f64::log2);
    }
    let shift = bits - 64;
    let top: BigUint = n >> shift;
    top.to_f64().map_or(f64::NEG_INFINITY, f64::log2) + shift as f64
}

/// Correctly scaled conversion that does not overflow for huge numerators and
/// denominators.
pub fn rational_to_f64(r: &Rational) -> f64 {
    // both parts exact in f64, so one IEEE division rounds correctly
    if r.numer().bits() <= 53 && r.denom().bits() <= 53 {
        if let (Some(n), Some(d)) = (r.numer().to_i64(), r.denom().to_i64()) {
            return n as f64 / d as f64;
        }
    }
    if let Some(v) = ToPrimitive::to_f64(r) {
        if v.is_finite() && (v != 0.0 || Zero::is_zero(r)) {
            return v;
        }
    }
    if Zero::is_zero(r) {
        return 0.0;
    }
    let sign = if Signed::is_negative(r) { -1.0 } else { 1.0 };
    sign * (log2_bigint(r.numer()) - log2_bigint(r.denom())).exp2()
}

/// `"p/q"`, or `"p"` when the denominator is one.
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parse an exact rational written as `"p/q"` or an integer `"p"`.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let t = text.trim();
    let malformed = || Error::validation("rational", format!("malformed rational {text:?}"));
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (t, "1"),
    };
    let valid = |s: &str, signed: bool| {
        let digits = if signed {
            s.strip_prefix('-').or_else(|| s.strip_prefix('+')).unwrap_or(s)
        } else {
            s
        };
        !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
    };
    if !valid(num, true) || !valid(den, false) {
        return Err(malformed());
    }
    let n: BigInt = num.parse().map_err(|_| malformed())?;
    let d: BigInt = den.parse().map_err(|_| malformed())?;
    if Zero::is_zero(&d) {
        return Err(Error::validation("rational", format!("zero denominator in {text:?}")));
    }
    Ok(Rational::new(n, d))
}

/// Parse a probability given either as `"p/q"` or as a decimal.
///
/// Decimals with at most nine fractional digits are read exactly; anything
/// else is replaced by the closest rational with denominator at most
/// [`MAX_DECIMAL_DENOMINATOR`].
pub fn parse_probability(text: &str) -> Result<Rational> {
    let t = text.trim();
    if t.contains('/') {
        return parse_rational(t);
    }
    if let Some(r) = parse_short_decimal(t) {
        return Ok(r);
    }
    let v: f64 = t
        .parse()
        .map_err(|_| Error::validation("eps", format!("malformed probability {text:?}")))?;
    if !v.is_finite() {
        return Err(Error::validation("eps", format!("non-finite probability {text:?}")));
    }
    Ok(approximate_rational(v, MAX_DECIMAL_DENOMINATOR))
}

fn parse_short_decimal(t: &str) -> Option<Rational> {
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if frac.len() > 9 || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    let scale = BigInt::from(10u32).pow(frac.len() as u32);
    let r = Rational::new(digits, scale);
    Some(if neg { -r } else { r })
}

/// Best rational approximation of `x` with denominator at most `max_den`
/// (continued fractions with a final semiconvergent).
pub fn approximate_rational(x: f64, max_den: u64) -> Rational {
    let neg = x < 0.0;
    let x = x.abs();
    let max_den = max_den.max(1) as u128;
    let (mut p0, mut q0, mut p1, mut q1) = (0u128, 1u128, 1u128, 0u128);
    let mut r = x;
    let (p, q) = loop {
        let a = r.floor();
        if a > (u64::MAX as f64) {
            break (p1, q1);
        }
        let a = a as u128;
        let q2 = q0 + a * q1;
        if q2 > max_den {
            let k = (max_den - q0) / q1;
            let (ps, qs) = (p0 + k * p1, q0 + k * q1);
            let err_semi = (ps as f64 / qs as f64 - x).abs();
            let err_conv = (p1 as f64 / q1 as f64 - x).abs();
            break if qs > 0 && err_semi < err_conv { (ps, qs) } else { (p1, q1) };
        }
        let p2 = p0 + a * p1;
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = r - r.floor();
        if frac == 0.0 || (p1 as f64 / q1 as f64) == x {
            break (p1, q1);
        }
        r = 1.0 / frac;
    };
    let r = Rational::new(BigInt::from(p), BigInt::from(q));
    if neg {
        -r
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    #[test]
    fn parses_rationals() {
        assert_eq!(parse_rational("1/6").unwrap(), q(1, 6));
        assert_eq!(parse_rational(" 2/4 ").unwrap(), q(1, 2));
        assert_eq!(parse_rational("3").unwrap(), q(3, 1));
        assert_eq!(parse_rational("-1/3").unwrap(), q(-1, 3));
        for bad in ["", "1/", "/2", "1/0", "a/b", "1.5/2", "1/-2", "1//2"] {
            assert!(parse_rational(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn decimals_become_small_denominator_rationals() {
        assert_eq!(parse_probability("0.1").unwrap(), q(1, 10));
        assert_eq!(parse_probability("0.25").unwrap(), q(1, 4));
        assert_eq!(parse_probability(".5").unwrap(), q(1, 2));
        assert_eq!(parse_probability("0.16666666666666666").unwrap(), q(1, 6));
        assert_eq!(parse_probability("1e-3").unwrap(), q(1, 1000));
        assert_eq!(parse_probability("1/6").unwrap(), q(1, 6));
        assert!(parse_probability("nan").is_err());
        assert!(parse_probability("x").is_err());
    }

    #[test]
    fn approximation_respects_denominator_bound() {
        let r = approximate_rational(std::f64::consts::PI, 1000);
        assert_eq!(r, q(355, 113));
        let r = approximate_rational(0.333333333333, MAX_DECIMAL_DENOMINATOR);
        assert!(r.denom() <= &BigInt::from(MAX_DECIMAL_DENOMINATOR));
    }

    #[test]
    fn log2_of_huge_rationals() {
        let tiny = <Rational as Mass>::pow(&q(1, 6), 400);
        let expected = -400.0 * 6f64.log2();
        assert!((Mass::log2(&tiny) - expected).abs() < 1e-9);
        assert!((rational_to_f64(&tiny).log2() - expected).abs() < 1e-6 || rational_to_f64(&tiny) == 0.0);
        let big = Rational::from_integer(BigInt::from(3u32).pow(700));
        assert!((Mass::log2(&big) - 700.0 * 3f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn float_floor_div_and_tolerances() {
        assert_eq!(Mass::floor_div(&0.75f64, &0.25), BigUint::from(3u32));
        assert_eq!(Mass::floor_div(&q(3, 4), &q(1, 8)), BigUint::from(6u32));
        assert!(Mass::at_most(&(0.1 + 0.2), &0.3));
        assert!(!Mass::at_most(&q(3, 10), &q(299, 1000)));
        assert!(Mass::same_likelihood(&0.125f64, &(0.5f64 * 0.25)));
    }
}
