//! Arithmetic backends.
//!
//! Everything in the crate is generic over [`Scalar`]. Two implementations
//! exist: `f64` for scale runs and [`Rational`] (arbitrary precision) for
//! oracle runs where every comparison must be exact.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational scalar.
pub type Rational = BigRational;

/// Relative tolerance used for float-mode invariant checks.
pub const FLOAT_TOL: f64 = 1e-9;

pub trait Scalar:
    Clone
    + fmt::Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
    + for<'a> Div<&'a Self, Output = Self>
{
    /// True when arithmetic and comparisons are exact.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn from_ratio(num: i64, den: i64) -> Self;
    /// Exact binary value of `v` for rationals.
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn abs(&self) -> Self;
    fn is_zero(&self) -> bool;

    /// Exact square root if one exists in this backend.
    fn try_sqrt(&self) -> Option<Self>;

    /// Square root, exact when possible and otherwise rounded through f64.
    fn sqrt(&self) -> Self {
        self.try_sqrt()
            .unwrap_or_else(|| Self::from_f64(self.to_f64().sqrt()))
    }

    /// `self^e` for `self >= 0`, exact when the backend can represent it.
    fn pow(&self, e: Exponent) -> Self;

    /// Whether `pow(e)` is exact for every input in this backend.
    fn pow_is_exact(e: Exponent) -> bool;

    fn to_decimal_string(&self) -> String;
    fn parse_decimal(s: &str) -> Result<Self>;

    /// `self <= other`, with a relative slack of `tol * |scale|` in float mode.
    fn approx_le(&self, other: &Self, tol: f64, scale: &Self) -> bool;

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn try_sqrt(&self) -> Option<Self> {
        Some(f64::sqrt(*self))
    }
    fn pow(&self, e: Exponent) -> Self {
        match e.as_integer() {
            Some(k) if (i32::MIN as i64..=i32::MAX as i64).contains(&k) => self.powi(k as i32),
            _ => self.powf(e.to_f64()),
        }
    }
    fn pow_is_exact(_e: Exponent) -> bool {
        false
    }
    fn to_decimal_string(&self) -> String {
        format!("{self:?}")
    }
    fn parse_decimal(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: f64 = n.trim().parse().map_err(|_| Error::ParseScalar(s.into()))?;
            let d: f64 = d.trim().parse().map_err(|_| Error::ParseScalar(s.into()))?;
            return Ok(n / d);
        }
        s.parse().map_err(|_| Error::ParseScalar(s.into()))
    }
    fn approx_le(&self, other: &Self, tol: f64, scale: &Self) -> bool {
        *self <= *other + tol * f64::abs(*scale)
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_i64(v: i64) -> Self {
        Ratio::from_integer(BigInt::from(v))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Ratio::new(BigInt::from(num), BigInt::from(den))
    }
    fn from_f64(v: f64) -> Self {
        Ratio::from_float(v).expect("finite float")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn try_sqrt(&self) -> Option<Self> {
        exact_root(self, 2)
    }
    fn pow(&self, e: Exponent) -> Self {
        let (k, m) = (*e.0.numer(), *e.0.denom());
        let base = if m == 1 {
            Some(self.clone())
        } else {
            exact_root(self, m as u32)
        };
        match base {
            Some(b) => int_pow(&b, k),
            None => Self::from_f64(Scalar::to_f64(self).powf(e.to_f64())),
        }
    }
    fn pow_is_exact(e: Exponent) -> bool {
        e.0.is_integer()
    }
    fn to_decimal_string(&self) -> String {
        rational_to_string(self)
    }
    fn parse_decimal(s: &str) -> Result<Self> {
        parse_rational(s)
    }
    fn approx_le(&self, other: &Self, _tol: f64, _scale: &Self) -> bool {
        self <= other
    }
}

fn int_pow(b: &Rational, k: i64) -> Rational {
    if k == 0 {
        return <Rational as One>::one();
    }
    let mut acc = <Rational as One>::one();
    let mut base = b.clone();
    let mut n = k.unsigned_abs();
    while n > 0 {
        if n & 1 == 1 {
            acc *= &base;
        }
        base = base.clone() * &base;
        n >>= 1;
    }
    if k < 0 {
        acc.recip()
    } else {
        acc
    }
}

fn exact_root(x: &Rational, m: u32) -> Option<Rational> {
    if x.is_negative() {
        return None;
    }
    let n = x.numer().nth_root(m);
    let d = x.denom().nth_root(m);
    if num_traits::pow(n.clone(), m as usize) == *x.numer()
        && num_traits::pow(d.clone(), m as usize) == *x.denom()
    {
        Some(Ratio::new(n, d))
    } else {
        None
    }
}

fn rational_to_string(x: &Rational) -> String {
    let den = x.denom().clone();
    let mut rest = den.clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let (mut a, mut b) = (0u32, 0u32);
    while rest.is_even() {
        rest /= &two;
        a += 1;
    }
    while (&rest % &five).is_zero() {
        rest /= &five;
        b += 1;
    }
    if !rest.is_one() {
        return format!("{}/{}", x.numer(), den);
    }
    // den = 2^a 5^b, so x * 10^k is an integer for k = max(a, b)
    let k = a.max(b);
    let scaled = x.numer() * num_traits::pow(BigInt::from(10), k as usize) / &den;
    if k == 0 {
        return scaled.to_string();
    }
    let neg = scaled.sign() == Sign::Minus;
    let digits = scaled.magnitude().to_string();
    let k = k as usize;
    let padded = if digits.len() <= k {
        format!("{}{}", "0".repeat(k - digits.len() + 1), digits)
    } else {
        digits
    };
    let (int_part, frac_part) = padded.split_at(padded.len() - k);
    let frac = frac_part.trim_end_matches('0');
    let body = if frac.is_empty() {
        int_part.to_string()
    } else {
        format!("{int_part}.{frac}")
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

fn parse_rational(s: &str) -> Result<Rational> {
    let err = || Error::ParseScalar(s.to_string());
    let t = s.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Ratio::new(n, d));
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i64>().map_err(|_| err())?),
        None => (t, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let digits: BigInt = format!("0{int_part}{frac_part}").parse().map_err(|_| err())?;
    let shift = exp - frac_part.len() as i64;
    let ten = BigInt::from(10);
    let mut value = Ratio::from_integer(digits);
    if shift >= 0 {
        value *= Ratio::from_integer(num_traits::pow(ten, shift as usize));
    } else {
        value /= Ratio::from_integer(num_traits::pow(ten, (-shift) as usize));
    }
    Ok(if neg { -value } else { value })
}

/// A rational exponent such as `p = 4/3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exponent(Ratio<i64>);

impl Exponent {
    pub fn new(num: i64, den: i64) -> Self {
        Exponent(Ratio::new(num, den))
    }

    pub fn integer(k: i64) -> Self {
        Exponent(Ratio::from_integer(k))
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn to_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    pub fn as_integer(self) -> Option<i64> {
        self.0.is_integer().then(|| self.0.to_integer())
    }

    /// Hölder conjugate `p / (p - 1)`; requires `p > 1`.
    pub fn conjugate(self) -> Self {
        Exponent(self.0 / (self.0 - <Ratio<i64> as One>::one()))
    }

    pub fn recip(self) -> Self {
        Exponent(self.0.recip())
    }

    /// Exponent of the characteristic in the sparse bound, `max(1, 1/(p-1))`.
    pub fn sparse_power(self) -> Self {
        let inv = Exponent((self.0 - <Ratio<i64> as One>::one()).recip());
        if inv.0 > <Ratio<i64> as One>::one() {
            inv
        } else {
            Exponent::integer(1)
        }
    }

    /// `max(p, p')`.
    pub fn star(self) -> Self {
        let c = self.conjugate();
        if c > self {
            c
        } else {
            self
        }
    }

    /// Parses `"4/3"`, `"1.5"` or `"2"`.
    pub fn parse(s: &str) -> Result<Self> {
        let r = parse_rational(s)?;
        let n = r.numer().to_i64().ok_or_else(|| Error::ParseScalar(s.into()))?;
        let d = r.denom().to_i64().ok_or_else(|| Error::ParseScalar(s.into()))?;
        Ok(Exponent::new(n, d))
    }

    /// Best rational with denominator at most 1000 matching `x` to 1e-9.
    pub fn from_f64(x: f64) -> Option<Self> {
        (1..=1000i64).find_map(|d| {
            let n = (x * d as f64).round();
            ((n - x * d as f64).abs() < 1e-9 * d as f64).then(|| Exponent::new(n as i64, d))
        })
    }
}

impl Add for Exponent {
    type Output = Exponent;
    fn add(self, rhs: Exponent) -> Exponent {
        Exponent(self.0 + rhs.0)
    }
}

impl Sub for Exponent {
    type Output = Exponent;
    fn sub(self, rhs: Exponent) -> Exponent {
        Exponent(self.0 - rhs.0)
    }
}

impl Mul for Exponent {
    type Output = Exponent;
    fn mul(self, rhs: Exponent) -> Exponent {
        Exponent(self.0 * rhs.0)
    }
}

impl Div for Exponent {
    type Output = Exponent;
    fn div(self, rhs: Exponent) -> Exponent {
        Exponent(self.0 / rhs.0)
    }
}

impl Neg for Exponent {
    type Output = Exponent;
    fn neg(self) -> Exponent {
        Exponent(-self.0)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Exponent::parse(s)
    }
}

/// `a <= b`. When `exact` is false (a rounded power entered either side) a
/// relative slack of `tol` is allowed, measured in f64.
pub fn le_with_slack<S: Scalar>(a: &S, b: &S, exact: bool, tol: f64) -> bool {
    if a <= b {
        return true;
    }
    if exact && S::EXACT {
        return false;
    }
    let (x, y) = (a.to_f64(), b.to_f64());
    x - y <= tol * x.abs().max(y.abs())
}

/// Two-sided version of [`le_with_slack`].
pub fn eq_with_slack<S: Scalar>(a: &S, b: &S, exact: bool, tol: f64) -> bool {
    le_with_slack(a, b, exact, tol) && le_with_slack(b, a, exact, tol)
}

/// Embeds a rational exponent as a scalar.
pub fn exponent_scalar<S: Scalar>(e: Exponent) -> S {
    S::from_ratio(e.numer(), e.denom())
}

/// Exact test of `sqrt(alpha) <= beta + sqrt(gamma)` for `alpha, gamma >= 0`.
pub fn sqrt_le_sum<S: Scalar>(alpha: &S, beta: &S, gamma: &S, tol: f64) -> bool {
    if !S::EXACT {
        let lhs = alpha.to_f64().sqrt();
        let rhs = beta.to_f64() + gamma.to_f64().sqrt();
        return lhs <= rhs + tol * (lhs.abs() + rhs.abs());
    }
    if *beta < S::zero() {
        // sqrt(alpha) + |beta| <= sqrt(gamma)
        return sqrt_sum_le(alpha, &(-beta.clone()), gamma);
    }
    // alpha - beta^2 - gamma <= 2 beta sqrt(gamma)
    let lhs = alpha.clone() - &(beta.clone() * beta) - gamma;
    if lhs <= S::zero() {
        return true;
    }
    let four = S::from_i64(4);
    lhs.clone() * &lhs <= four * beta * beta * gamma
}

/// Exact test of `sqrt(alpha) + beta <= sqrt(gamma)` with `beta >= 0`.
fn sqrt_sum_le<S: Scalar>(alpha: &S, beta: &S, gamma: &S) -> bool {
    // alpha + beta^2 + 2 beta sqrt(alpha) <= gamma
    let rest = gamma.clone() - alpha - &(beta.clone() * beta);
    if rest < S::zero() {
        return false;
    }
    let four = S::from_i64(4);
    four * beta * beta * alpha <= rest.clone() * &rest
}
