//! Exact rational scalars and certified enclosures.
//!
//! Every measure in the laboratory is a rational number with an arbitrary
//! precision numerator and denominator. Quantities that the finite tower
//! cannot pin down exactly are carried as an [`Enclosure`], a closed
//! interval `[lo, hi]` that is guaranteed to contain the true value.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An exact rational number kept in canonical reduced form.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ExactScalar(BigRational);

/// Arithmetic operators accepted by [`scalar_arith`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    FloorDiv,
}

impl ExactScalar {
    pub fn new(numer: impl Into<BigInt>, denom: impl Into<BigInt>) -> Result<Self> {
        let denom = denom.into();
        if denom.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(ExactScalar(BigRational::new(numer.into(), denom)))
    }

    /// Shorthand for small literals; panics on a zero denominator.
    pub fn ratio(numer: i64, denom: i64) -> Self {
        Self::new(numer, denom).expect("nonzero denominator")
    }

    pub fn integer(value: impl Into<BigInt>) -> Self {
        ExactScalar(BigRational::from_integer(value.into()))
    }

    pub fn zero() -> Self {
        ExactScalar(BigRational::zero())
    }

    pub fn one() -> Self {
        ExactScalar(BigRational::one())
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn abs(&self) -> Self {
        ExactScalar(self.0.abs())
    }

    pub fn floor(&self) -> BigInt {
        self.0.floor().to_integer()
    }

    pub fn ceil(&self) -> BigInt {
        self.0.ceil().to_integer()
    }

    pub fn checked_div(&self, rhs: &Self) -> Result<Self> {
        if rhs.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(ExactScalar(&self.0 / &rhs.0))
    }

    /// `floor(self / rhs)` as an integer-valued scalar.
    pub fn floor_div(&self, rhs: &Self) -> Result<Self> {
        Ok(Self::integer(self.checked_div(rhs)?.floor()))
    }

    pub fn recip(&self) -> Result<Self> {
        Self::one().checked_div(self)
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Decimal expansion with exactly `digits` fractional digits, rounded
    /// toward negative infinity.
    pub fn to_decimal_floor(&self, digits: usize) -> String {
        self.decimal(digits, false)
    }

    /// Decimal expansion with exactly `digits` fractional digits, rounded
    /// toward positive infinity.
    pub fn to_decimal_ceil(&self, digits: usize) -> String {
        self.decimal(digits, true)
    }

    fn decimal(&self, digits: usize, up: bool) -> String {
        let scale = BigInt::from(10u32).pow(digits as u32);
        let scaled = &self.0 * BigRational::from_integer(scale.clone());
        let q = if up {
            scaled.ceil().to_integer()
        } else {
            scaled.floor().to_integer()
        };
        let negative = q.is_negative();
        let (int, frac) = q.abs().div_rem(&scale);
        let sign = if negative { "-" } else { "" };
        if digits == 0 {
            format!("{sign}{int}")
        } else {
            format!("{sign}{int}.{frac:0>digits$}")
        }
    }
}

/// Exact binary arithmetic on scalars; the only fallible case is a zero divisor.
pub fn scalar_arith(a: &ExactScalar, b: &ExactScalar, op: ArithOp) -> Result<ExactScalar> {
    Ok(match op {
        ArithOp::Add => a + b,
        ArithOp::Sub => a - b,
        ArithOp::Mul => a * b,
        ArithOp::Div => a.checked_div(b)?,
        ArithOp::FloorDiv => a.floor_div(b)?,
    })
}

impl From<i64> for ExactScalar {
    fn from(v: i64) -> Self {
        Self::integer(v)
    }
}

impl From<u64> for ExactScalar {
    fn from(v: u64) -> Self {
        Self::integer(v)
    }
}

impl From<usize> for ExactScalar {
    fn from(v: usize) -> Self {
        Self::integer(v as u64)
    }
}

impl From<BigInt> for ExactScalar {
    fn from(v: BigInt) -> Self {
        Self::integer(v)
    }
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident) => {
        impl $tr<&ExactScalar> for &ExactScalar {
            type Output = ExactScalar;
            fn $method(self, rhs: &ExactScalar) -> ExactScalar {
                ExactScalar($tr::$method(&self.0, &rhs.0))
            }
        }
        impl $tr<ExactScalar> for ExactScalar {
            type Output = ExactScalar;
            fn $method(self, rhs: ExactScalar) -> ExactScalar {
                ExactScalar($tr::$method(self.0, rhs.0))
            }
        }
        impl $tr<&ExactScalar> for ExactScalar {
            type Output = ExactScalar;
            fn $method(self, rhs: &ExactScalar) -> ExactScalar {
                ExactScalar($tr::$method(self.0, &rhs.0))
            }
        }
        impl $tr<ExactScalar> for &ExactScalar {
            type Output = ExactScalar;
            fn $method(self, rhs: ExactScalar) -> ExactScalar {
                ExactScalar($tr::$method(&self.0, rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);

impl Neg for ExactScalar {
    type Output = ExactScalar;
    fn neg(self) -> ExactScalar {
        ExactScalar(-self.0)
    }
}

impl Neg for &ExactScalar {
    type Output = ExactScalar;
    fn neg(self) -> ExactScalar {
        ExactScalar(-&self.0)
    }
}

impl Sum for ExactScalar {
    fn sum<I: Iterator<Item = ExactScalar>>(iter: I) -> Self {
        iter.fold(ExactScalar::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a ExactScalar> for ExactScalar {
    fn sum<I: Iterator<Item = &'a ExactScalar>>(iter: I) -> Self {
        iter.fold(ExactScalar::zero(), |acc, x| acc + x)
    }
}

/// Renders `p/q`, or just `p` when the denominator is one.
impl fmt::Display for ExactScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for ExactScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for ExactScalar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(s.to_string());
        match s.split_once('/') {
            Some((p, q)) => {
                let p: BigInt = p.trim().parse().map_err(|_| bad())?;
                let q: BigInt = q.trim().parse().map_err(|_| bad())?;
                ExactScalar::new(p, q)
            }
            None => {
                let p: BigInt = s.parse().map_err(|_| bad())?;
                Ok(ExactScalar::integer(p))
            }
        }
    }
}

impl Serialize for ExactScalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExactScalar {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A closed interval of rationals certified to contain a true quantity.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Enclosure {
    lo: ExactScalar,
    hi: ExactScalar,
}

impl Enclosure {
    pub fn new(lo: ExactScalar, hi: ExactScalar) -> Result<Self> {
        if lo > hi {
            return Err(Error::Precondition(format!(
                "enclosure bounds out of order: {lo} > {hi}"
            )));
        }
        Ok(Enclosure { lo, hi })
    }

    pub fn point(x: ExactScalar) -> Self {
        Enclosure {
            lo: x.clone(),
            hi: x,
        }
    }

    pub fn zero() -> Self {
        Self::point(ExactScalar::zero())
    }

    pub fn lo(&self) -> &ExactScalar {
        &self.lo
    }

    pub fn hi(&self) -> &ExactScalar {
        &self.hi
    }

    pub fn width(&self) -> ExactScalar {
        &self.hi - &self.lo
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: &ExactScalar) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    pub fn is_subset_of(&self, other: &Enclosure) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn overlaps(&self, other: &Enclosure) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// Intersection with another certified bound on the same quantity.
    pub fn intersect(&self, other: &Enclosure) -> Option<Enclosure> {
        let lo = self.lo.clone().max(other.lo.clone());
        let hi = self.hi.clone().min(other.hi.clone());
        (lo <= hi).then_some(Enclosure { lo, hi })
    }

    /// Smallest enclosure of `|x|` over all `x` in `self`.
    pub fn abs(&self) -> Enclosure {
        if !self.lo.is_negative() {
            self.clone()
        } else if self.hi <= ExactScalar::zero() {
            Enclosure {
                lo: -&self.hi,
                hi: -&self.lo,
            }
        } else {
            Enclosure {
                lo: ExactScalar::zero(),
                hi: (-&self.lo).max(self.hi.clone()),
            }
        }
    }

    pub fn scale(&self, k: &ExactScalar) -> Enclosure {
        let a = &self.lo * k;
        let b = &self.hi * k;
        if a <= b {
            Enclosure { lo: a, hi: b }
        } else {
            Enclosure { lo: b, hi: a }
        }
    }

    pub fn shift(&self, k: &ExactScalar) -> Enclosure {
        Enclosure {
            lo: &self.lo + k,
            hi: &self.hi + k,
        }
    }

    pub fn sub_point(&self, k: &ExactScalar) -> Enclosure {
        Enclosure {
            lo: &self.lo - k,
            hi: &self.hi - k,
        }
    }

    /// Enclosure of `x^2`.
    pub fn square(&self) -> Enclosure {
        let a = self.abs();
        Enclosure {
            lo: &a.lo * &a.lo,
            hi: &a.hi * &a.hi,
        }
    }

    /// Order relation between enclosures: every value of `self` is at most
    /// every value of `other`.
    pub fn certainly_le(&self, other: &Enclosure) -> bool {
        self.hi <= other.lo
    }

    pub fn certainly_lt(&self, other: &Enclosure) -> bool {
        self.hi < other.lo
    }
}

impl Add<&Enclosure> for &Enclosure {
    type Output = Enclosure;
    fn add(self, rhs: &Enclosure) -> Enclosure {
        Enclosure {
            lo: &self.lo + &rhs.lo,
            hi: &self.hi + &rhs.hi,
        }
    }
}

impl Add for Enclosure {
    type Output = Enclosure;
    fn add(self, rhs: Enclosure) -> Enclosure {
        &self + &rhs
    }
}

impl Sub<&Enclosure> for &Enclosure {
    type Output = Enclosure;
    fn sub(self, rhs: &Enclosure) -> Enclosure {
        Enclosure {
            lo: &self.lo - &rhs.hi,
            hi: &self.hi - &rhs.lo,
        }
    }
}

impl Sub for Enclosure {
    type Output = Enclosure;
    fn sub(self, rhs: Enclosure) -> Enclosure {
        &self - &rhs
    }
}

impl Mul<&Enclosure> for &Enclosure {
    type Output = Enclosure;
    fn mul(self, rhs: &Enclosure) -> Enclosure {
        let products = [
            &self.lo * &rhs.lo,
            &self.lo * &rhs.hi,
            &self.hi * &rhs.lo,
            &self.hi * &rhs.hi,
        ];
        let lo = products.iter().min().expect("four products").clone();
        let hi = products.iter().max().expect("four products").clone();
        Enclosure { lo, hi }
    }
}

impl Mul for Enclosure {
    type Output = Enclosure;
    fn mul(self, rhs: Enclosure) -> Enclosure {
        &self * &rhs
    }
}

impl Neg for &Enclosure {
    type Output = Enclosure;
    fn neg(self) -> Enclosure {
        Enclosure {
            lo: -&self.hi,
            hi: -&self.lo,
        }
    }
}

impl Sum for Enclosure {
    fn sum<I: Iterator<Item = Enclosure>>(iter: I) -> Self {
        iter.fold(Enclosure::zero(), |acc, x| &acc + &x)
    }
}

impl PartialOrd for Enclosure {
    /// Defined only when the intervals are certainly ordered or identical.
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        if self == other {
            Some(Ordering::Equal)
        } else if self.hi <= other.lo {
            Some(Ordering::Less)
        } else if other.hi <= self.lo {
            Some(Ordering::Greater)
        } else {
            None
        }
    }
}

impl fmt::Display for Enclosure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl fmt::Debug for Enclosure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
