//! Scalar backends: exact rationals and tolerance-checked doubles.
//!
//! Every algorithm in the crate is generic over [`Scalar`]. The exact backend
//! never rounds; the float backend routes every zero/sign test through an
//! explicit tolerance.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Default tolerance for zero tests in the float backend.
pub const DEFAULT_TOL: f64 = 1e-9;

pub trait Scalar:
    Clone
    + PartialEq
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Serialize
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
    + for<'a> AddAssign<&'a Self>
    + for<'a> SubAssign<&'a Self>
    + for<'a> MulAssign<&'a Self>
{
    /// True for backends whose arithmetic never rounds.
    const EXACT: bool;
    /// Short backend name used in reports.
    const NAME: &'static str;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn from_ratio(num: i64, den: i64) -> Self;
    fn to_f64(&self) -> f64;

    /// Zero test. Exact backends ignore `tol`.
    fn is_zero_tol(&self, tol: f64) -> bool;

    /// Converts a float estimate back into the backend. The exact backend
    /// only accepts values that are close to a rational with a small
    /// denominator.
    fn recognize(x: f64) -> Option<Self>;

    /// Parses `"p/q"`, `"p"` or a decimal literal.
    fn parse_str(s: &str) -> Result<Self>;

    /// Numerator/denominator pair for exact values that fit in `i64`.
    fn small_ratio(&self) -> Option<(i64, i64)> {
        None
    }

    fn is_exact_zero(&self) -> bool {
        self.is_zero_tol(0.0)
    }

    fn is_positive_tol(&self, tol: f64) -> bool {
        !self.is_zero_tol(tol) && *self > Self::zero()
    }

    fn abs_val(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }
}

// ---------------------------------------------------------------------------
// f64

impl Scalar for f64 {
    const EXACT: bool = false;
    const NAME: &'static str = "float";

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
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_zero_tol(&self, tol: f64) -> bool {
        self.abs() <= tol
    }
    fn recognize(x: f64) -> Option<Self> {
        x.is_finite().then_some(x)
    }
    fn parse_str(s: &str) -> Result<Self> {
        let r = Rational::from_str(s)?;
        Ok(r.to_f64())
    }
}

// ---------------------------------------------------------------------------
// Rational

/// Arbitrary-precision rational with an inline fast path for values whose
/// numerator and denominator fit in `i64`.
///
/// The representation is canonical: lowest terms, positive denominator, and
/// the `Small` variant whenever the value fits. Equality is therefore
/// structural.
#[derive(Clone)]
pub struct Rational(Repr);

#[derive(Clone)]
enum Repr {
    Small(i64, i64),
    Big(BigRational),
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Self::from_i128(num as i128, den as i128)
    }

    pub fn integer(v: i64) -> Self {
        Rational(Repr::Small(v, 1))
    }

    fn from_i128(num: i128, den: i128) -> Self {
        debug_assert!(den != 0);
        if num == 0 {
            return Rational(Repr::Small(0, 1));
        }
        let g = gcd_u128(num.unsigned_abs(), den.unsigned_abs());
        let (mut n, mut d) = if g > 1 {
            // g divides both, so the quotients fit in i128
            ((num.unsigned_abs() / g) as i128 * num.signum(), (den.unsigned_abs() / g) as i128 * den.signum())
        } else {
            (num, den)
        };
        if d < 0 {
            n = -n;
            d = -d;
        }
        match (i64::try_from(n), i64::try_from(d)) {
            (Ok(n), Ok(d)) => Rational(Repr::Small(n, d)),
            _ => Rational(Repr::Big(BigRational::new_raw(BigInt::from(n), BigInt::from(d)))),
        }
    }

    fn from_big(r: BigRational) -> Self {
        // BigRational arithmetic keeps values reduced with positive denominator.
        match (r.numer().to_i64(), r.denom().to_i64()) {
            (Some(n), Some(d)) => Rational(Repr::Small(n, d)),
            _ => Rational(Repr::Big(r)),
        }
    }

    pub fn to_big(&self) -> BigRational {
        match &self.0 {
            Repr::Small(n, d) => BigRational::new_raw(BigInt::from(*n), BigInt::from(*d)),
            Repr::Big(b) => b.clone(),
        }
    }

    pub fn numer_string(&self) -> String {
        match &self.0 {
            Repr::Small(n, _) => n.to_string(),
            Repr::Big(b) => b.numer().to_string(),
        }
    }

    pub fn denom_string(&self) -> String {
        match &self.0 {
            Repr::Small(_, d) => d.to_string(),
            Repr::Big(b) => b.denom().to_string(),
        }
    }

    /// Numerator and denominator when both fit in `i64`.
    pub fn as_small(&self) -> Option<(i64, i64)> {
        match self.0 {
            Repr::Small(n, d) => Some((n, d)),
            Repr::Big(_) => None,
        }
    }

    pub fn is_integer(&self) -> bool {
        match &self.0 {
            Repr::Small(_, d) => *d == 1,
            Repr::Big(b) => b.is_integer(),
        }
    }

    fn signum_i32(&self) -> i32 {
        match &self.0 {
            Repr::Small(n, _) => n.signum() as i32,
            Repr::Big(b) => {
                if b.is_positive() {
                    1
                } else if b.is_negative() {
                    -1
                } else {
                    0
                }
            }
        }
    }

    /// Best rational approximation with denominator at most `max_den`
    /// (continued fractions).
    pub fn approximate(x: f64, max_den: i64) -> Option<Self> {
        if !x.is_finite() || x.abs() > 1e15 {
            return None;
        }
        let (mut h0, mut h1) = (0i128, 1i128);
        let (mut k0, mut k1) = (1i128, 0i128);
        let mut v = x;
        for _ in 0..64 {
            let a = v.floor();
            let ai = a as i128;
            let h2 = ai * h1 + h0;
            let k2 = ai * k1 + k0;
            if k2 > max_den as i128 {
                break;
            }
            h0 = h1;
            h1 = h2;
            k0 = k1;
            k1 = k2;
            let frac = v - a;
            if frac.abs() < 1e-15 {
                break;
            }
            v = 1.0 / frac;
        }
        if k1 == 0 {
            return None;
        }
        Some(Self::from_i128(h1, k1))
    }
}

impl Default for Rational {
    fn default() -> Self {
        Rational::integer(0)
    }
}

impl PartialEq for Rational {
    fn eq(&self, other: &Self) -> bool {
        match (&self.0, &other.0) {
            (Repr::Small(a, b), Repr::Small(c, d)) => a == c && b == d,
            (Repr::Big(x), Repr::Big(y)) => x == y,
            _ => false,
        }
    }
}
impl Eq for Rational {}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        match (&self.0, &other.0) {
            (Repr::Small(a, b), Repr::Small(c, d)) => ((*a as i128) * (*d as i128)).cmp(&((*c as i128) * (*b as i128))),
            _ => self.to_big().cmp(&other.to_big()),
        }
    }
}
impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::hash::Hash for Rational {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.numer_string().hash(state);
        self.denom_string().hash(state);
    }
}

fn add_impl(x: &Rational, y: &Rational) -> Rational {
    if let (Repr::Small(a, b), Repr::Small(c, d)) = (&x.0, &y.0) {
        let (a, b, c, d) = (*a as i128, *b as i128, *c as i128, *d as i128);
        if b == d {
            return Rational::from_i128(a + c, b);
        }
        if let (Some(ad), Some(cb)) = (a.checked_mul(d), c.checked_mul(b)) {
            if let Some(n) = ad.checked_add(cb) {
                return Rational::from_i128(n, b * d);
            }
        }
    }
    Rational::from_big(x.to_big() + y.to_big())
}

fn mul_impl(x: &Rational, y: &Rational) -> Rational {
    if let (Repr::Small(a, b), Repr::Small(c, d)) = (&x.0, &y.0) {
        if *a == 0 || *c == 0 {
            return Rational::integer(0);
        }
        let g1 = a.unsigned_abs().gcd(&d.unsigned_abs()) as i128;
        let g2 = c.unsigned_abs().gcd(&b.unsigned_abs()) as i128;
        let n = (*a as i128 / g1) * (*c as i128 / g2);
        let m = (*b as i128 / g2) * (*d as i128 / g1);
        return Rational::from_i128(n, m);
    }
    Rational::from_big(x.to_big() * y.to_big())
}

fn recip(x: &Rational) -> Rational {
    match &x.0 {
        Repr::Small(n, d) => {
            assert!(*n != 0, "division by zero");
            Rational::from_i128(*d as i128, *n as i128)
        }
        Repr::Big(b) => Rational::from_big(b.recip()),
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        match self.0 {
            Repr::Small(n, d) => Rational::from_i128(-(n as i128), d as i128),
            Repr::Big(b) => Rational::from_big(-b),
        }
    }
}

macro_rules! rational_binop {
    ($tr:ident, $m:ident, $atr:ident, $am:ident, $body:expr) => {
        impl $tr for Rational {
            type Output = Rational;
            fn $m(self, rhs: Rational) -> Rational {
                let f: fn(&Rational, &Rational) -> Rational = $body;
                f(&self, &rhs)
            }
        }
        impl<'a> $tr<&'a Rational> for Rational {
            type Output = Rational;
            fn $m(self, rhs: &'a Rational) -> Rational {
                let f: fn(&Rational, &Rational) -> Rational = $body;
                f(&self, rhs)
            }
        }
        impl<'a, 'b> $tr<&'b Rational> for &'a Rational {
            type Output = Rational;
            fn $m(self, rhs: &'b Rational) -> Rational {
                let f: fn(&Rational, &Rational) -> Rational = $body;
                f(self, rhs)
            }
        }
        impl<'a> $atr<&'a Rational> for Rational {
            fn $am(&mut self, rhs: &'a Rational) {
                *self = ($body as fn(&Rational, &Rational) -> Rational)(self, rhs);
            }
        }
        impl $atr for Rational {
            fn $am(&mut self, rhs: Rational) {
                *self = ($body as fn(&Rational, &Rational) -> Rational)(self, &rhs);
            }
        }
    };
}

rational_binop!(Add, add, AddAssign, add_assign, add_impl);
rational_binop!(Sub, sub, SubAssign, sub_assign, |x, y| add_impl(x, &-y.clone()));
rational_binop!(Mul, mul, MulAssign, mul_assign, mul_impl);
rational_binop!(Div, div, DivAssign, div_assign, |x, y| mul_impl(x, &recip(y)));

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Small(n, 1) => write!(f, "{n}"),
            Repr::Small(n, d) => write!(f, "{n}/{d}"),
            Repr::Big(b) if b.is_integer() => write!(f, "{}", b.numer()),
            Repr::Big(b) => write!(f, "{}/{}", b.numer(), b.denom()),
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("invalid rational literal '{s}'"));
        if let Some((p, q)) = s.split_once('/') {
            let p = BigInt::from_str(p.trim()).map_err(|_| bad())?;
            let q = BigInt::from_str(q.trim()).map_err(|_| bad())?;
            if q.is_zero() {
                return Err(bad());
            }
            return Ok(Rational::from_big(BigRational::new(p, q)));
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
                return Err(bad());
            }
            let neg = int.trim_start().starts_with('-');
            let int_part = if int.is_empty() || int == "-" || int == "+" {
                BigInt::zero()
            } else {
                BigInt::from_str(int).map_err(|_| bad())?
            };
            let frac_num = BigInt::from_str(frac).map_err(|_| bad())?;
            let den = num_traits::pow(BigInt::from(10), frac.len());
            let mut num = int_part.abs() * &den + frac_num;
            if neg {
                num = -num;
            }
            return Ok(Rational::from_big(BigRational::new(num, den)));
        }
        let p = BigInt::from_str(s).map_err(|_| bad())?;
        Ok(Rational::from_big(BigRational::from_integer(p)))
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;
    const NAME: &'static str = "exact";

    fn zero() -> Self {
        Rational::integer(0)
    }
    fn one() -> Self {
        Rational::integer(1)
    }
    fn from_i64(v: i64) -> Self {
        Rational::integer(v)
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Rational::new(num, den)
    }
    fn to_f64(&self) -> f64 {
        match &self.0 {
            Repr::Small(n, d) => *n as f64 / *d as f64,
            Repr::Big(b) => b.to_f64().unwrap_or(f64::NAN),
        }
    }
    fn is_zero_tol(&self, _tol: f64) -> bool {
        matches!(self.0, Repr::Small(0, _))
    }
    fn recognize(x: f64) -> Option<Self> {
        let q = Rational::approximate(x, 10_000)?;
        let err = (q.to_f64() - x).abs();
        (err <= 1e-10 * x.abs().max(1.0)).then_some(q)
    }
    fn parse_str(s: &str) -> Result<Self> {
        Rational::from_str(s)
    }
    fn is_positive_tol(&self, _tol: f64) -> bool {
        self.signum_i32() > 0
    }
    fn small_ratio(&self) -> Option<(i64, i64)> {
        self.as_small()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_arithmetic_is_reduced() {
        let a = Rational::new(2, 4);
        assert_eq!(a, Rational::new(1, 2));
        assert_eq!(a.to_string(), "1/2");
        let b = Rational::new(-3, -9);
        assert_eq!(b.to_string(), "1/3");
        assert_eq!((Rational::new(1, 2) + Rational::new(1, 3)).to_string(), "5/6");
        assert_eq!((Rational::new(1, 2) - Rational::new(1, 2)).to_string(), "0");
        assert_eq!((Rational::new(-2, 3) * Rational::new(9, 4)).to_string(), "-3/2");
        assert_eq!((Rational::new(1, 2) / Rational::new(-1, 4)).to_string(), "-2");
    }

    #[test]
    fn overflow_promotes_and_demotes() {
        let big = Rational::integer(i64::MAX);
        let sq = big.clone() * &big;
        assert!(sq.as_small().is_none());
        let back = sq / &big;
        assert_eq!(back, big);
        assert!(back.as_small().is_some());
        let m = Rational::integer(i64::MIN);
        let n = -m.clone();
        assert_eq!(n.to_string(), "9223372036854775808");
        assert_eq!(-n, m);
    }

    #[test]
    fn parse_forms() {
        assert_eq!(Rational::from_str("3/6").unwrap(), Rational::new(1, 2));
        assert_eq!(Rational::from_str("-7").unwrap(), Rational::integer(-7));
        assert_eq!(Rational::from_str("0.25").unwrap(), Rational::new(1, 4));
        assert_eq!(Rational::from_str("-1.5").unwrap(), Rational::new(-3, 2));
        assert!(Rational::from_str("1/0").is_err());
        assert!(Rational::from_str("abc").is_err());
    }

    #[test]
    fn recognize_small_denominators() {
        assert_eq!(Rational::recognize(0.333333333333), Some(Rational::new(1, 3)));
        assert_eq!(Rational::recognize(-2.5), Some(Rational::new(-5, 2)));
        assert_eq!(Rational::recognize(std::f64::consts::SQRT_2), None);
    }

    #[test]
    fn ordering() {
        assert!(Rational::new(1, 3) < Rational::new(1, 2));
        assert!(Rational::new(-1, 2) < Rational::zero());
        assert!(Rational::new(5, 2).is_positive_tol(0.0));
    }
}
