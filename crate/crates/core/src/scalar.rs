//! Numeric backends: exact rationals and 64-bit floats behind one trait.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::GameError;

/// Arbitrary-precision rational number.
pub type Rational = BigRational;

/// Field operations plus the handful of numeric services the solvers need.
pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + PartialEq
    + Send
    + Sync
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    /// True when arithmetic is exact.
    const EXACT: bool;
    /// Short name used in reports (`rational` or `float`).
    const MODE: &'static str;

    fn from_rational(r: &Rational) -> Self;
    fn to_f64(&self) -> f64;
    /// Absolute comparison slack for values of the given magnitudes.
    fn slack(a: &Self, b: &Self) -> Self;
    /// Threshold below which a pivot element counts as zero.
    fn pivot_eps() -> Self;
    fn is_finite(&self) -> bool;
    /// Human-readable form: `p/q` for rationals, shortest round-trip for floats.
    fn render(&self) -> String;
    /// Decimal rendering with `digits` significant digits, `%g` style.
    fn to_sig(&self, digits: usize) -> String;

    fn from_i64(v: i64) -> Self {
        Self::from_rational(&Rational::from_integer(BigInt::from(v)))
    }

    fn ratio(n: i64, d: i64) -> Self {
        Self::from_rational(&Rational::new(BigInt::from(n), BigInt::from(d)))
    }

    fn from_usize(v: usize) -> Self {
        Self::from_rational(&Rational::from_integer(BigInt::from(v)))
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;
    const MODE: &'static str = "float";

    fn from_rational(r: &Rational) -> Self {
        rational_to_f64(r)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn slack(a: &Self, b: &Self) -> Self {
        1e-9 * 1f64.max(a.abs()).max(b.abs())
    }
    fn pivot_eps() -> Self {
        1e-11
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn render(&self) -> String {
        format!("{self}")
    }
    fn to_sig(&self, digits: usize) -> String {
        format_sig_f64(*self, digits)
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;
    const MODE: &'static str = "rational";

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }
    fn slack(_: &Self, _: &Self) -> Self {
        Rational::zero()
    }
    fn pivot_eps() -> Self {
        Rational::zero()
    }
    fn is_finite(&self) -> bool {
        true
    }
    fn render(&self) -> String {
        if self.is_integer() {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }
    /// Rounds to the nearest double first, so both modes print identical digits.
    /// `format_sig_rational` rounds the exact value instead.
    fn to_sig(&self, digits: usize) -> String {
        format_sig_f64(rational_to_f64(self), digits)
    }
}

/// Correctly rounded conversion.
fn rational_to_f64(r: &Rational) -> f64 {
    num_traits::ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
}

/// `a <= b` up to the scalar's slack.
pub fn approx_le<T: Scalar>(a: &T, b: &T) -> bool {
    let s = T::slack(a, b);
    a.clone() <= b.clone() + s
}

/// `a == b` up to the scalar's slack.
pub fn approx_eq<T: Scalar>(a: &T, b: &T) -> bool {
    approx_le(a, b) && approx_le(b, a)
}

/// `a > b` beyond the scalar's slack.
pub fn strictly_gt<T: Scalar>(a: &T, b: &T) -> bool {
    !approx_le(a, b)
}

/// `max(x, 0)`.
pub fn pos<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

pub fn min_of<T: Scalar>(a: T, b: T) -> T {
    if b < a {
        b
    } else {
        a
    }
}

pub fn max_of<T: Scalar>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}

/// Parses `12`, `-3.25`, `1e-3` or `p/q` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational, GameError> {
    let t = text.trim();
    let bad = || GameError::Input(format!("cannot parse `{text}` as a number"));
    if t.is_empty() {
        return Err(bad());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = parse_rational(n)?;
        let d = parse_rational(d)?;
        if d.is_zero() {
            return Err(GameError::Input(format!("zero denominator in `{text}`")));
        }
        return Ok(n / d);
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (t, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits: BigInt = format!("0{int_part}{frac_part}").parse().map_err(|_| bad())?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = Rational::from_integer(digits);
    if scale >= 0 {
        value *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if neg { -value } else { value })
}

/// Exact rational whose decimal expansion is the shortest repr of `x`.
pub fn rational_from_f64(x: f64) -> Result<Rational, GameError> {
    if !x.is_finite() {
        return Err(GameError::Input(format!("non-finite number {x}")));
    }
    parse_rational(&format!("{x:e}"))
}

fn pow10(e: u32) -> BigInt {
    num_traits::pow(BigInt::from(10), e as usize)
}

/// Lays out a digit string `d0 d1 ...` representing `d0.d1... × 10^exp` in `%g` style.
fn place_digits(negative: bool, digits: &str, exp: i32, sig: usize) -> String {
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if exp < -4 || exp >= sig as i32 {
        out.push_str(&digits[..1]);
        if digits.len() > 1 {
            out.push('.');
            out.push_str(&digits[1..]);
        }
        out.push('e');
        out.push(if exp < 0 { '-' } else { '+' });
        out.push_str(&format!("{:02}", exp.abs()));
    } else if exp < 0 {
        out.push_str("0.");
        for _ in 0..(-exp - 1) {
            out.push('0');
        }
        out.push_str(digits);
    } else {
        let int_len = exp as usize + 1;
        if digits.len() <= int_len {
            out.push_str(digits);
            for _ in digits.len()..int_len {
                out.push('0');
            }
        } else {
            out.push_str(&digits[..int_len]);
            out.push('.');
            out.push_str(&digits[int_len..]);
        }
    }
    out
}

/// `%.{sig}g` formatting for floats.
pub fn format_sig_f64(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{:.*e}", sig.saturating_sub(1), x.abs());
    let (mant, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    place_digits(x < 0.0, &digits, exp, sig)
}

/// `%.{sig}g` formatting for exact rationals, rounding half away from zero.
pub fn format_sig_rational(x: &Rational, sig: usize) -> String {
    assert!(sig >= 1);
    if x.is_zero() {
        return "0".into();
    }
    let negative = x.is_negative();
    let a = x.abs();
    // Decimal exponent with 10^e <= a < 10^(e+1).
    let mut e = rational_to_f64(&a).log10().floor() as i32;
    let ten_pow = |e: i32| -> Rational {
        if e >= 0 {
            Rational::from_integer(pow10(e as u32))
        } else {
            Rational::new(BigInt::one(), pow10((-e) as u32))
        }
    };
    while ten_pow(e) > a {
        e -= 1;
    }
    while ten_pow(e + 1) <= a {
        e += 1;
    }
    let scaled = a * ten_pow(sig as i32 - 1 - e);
    let (q, r) = scaled.numer().div_rem(scaled.denom());
    let mut n = q;
    if BigInt::from(2) * r >= *scaled.denom() {
        n += 1;
    }
    if n == pow10(sig as u32) {
        n /= 10;
        e += 1;
    }
    let (_, digits) = n.to_radix_be(10);
    let digits: String = digits.iter().map(|d| char::from(b'0' + d)).collect();
    debug_assert_eq!(n.sign(), Sign::Plus);
    place_digits(negative, &digits, e, sig)
}
