//! Exact rationals and their text forms.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn zero() -> Q {
    Q::zero()
}

pub fn one() -> Q {
    Q::one()
}

/// Parses "p/q" or an integer. Decimals are rejected.
pub fn parse_q(s: &str) -> Result<Q> {
    let s = s.trim();
    let bad = || Error::Parse(format!("expected an exact fraction like 1/100, got {s:?}"));
    if s.contains('.') || s.contains('e') || s.contains('E') {
        return Err(bad());
    }
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = n.parse().map_err(|_| bad())?;
    let d: BigInt = d.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(bad());
    }
    Ok(Q::new(n, d))
}

/// "p/q", or "p" for integers.
pub fn fmt_q(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        // huge numerators and denominators: scale down by the common bit length
        let shift = x.denom().bits().max(x.numer().bits()).saturating_sub(900);
        let n = (x.numer() >> shift).to_f64().unwrap_or(0.0);
        let d = (x.denom() >> shift).to_f64().unwrap_or(1.0);
        n / d
    })
}

/// Natural log of a positive rational, computed as ln(n) - ln(d) so that
/// values near 1 keep their precision.
pub fn ln_q(x: &Q) -> f64 {
    assert!(x.is_positive(), "log of non-positive rational");
    let r = x - one();
    if r.abs() < q(1, 4) {
        to_f64(&r).ln_1p()
    } else {
        to_f64(x).ln()
    }
}

/// Decimal with 12 significant digits.
pub fn fmt_dec(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (11 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn sum<'a>(it: impl IntoIterator<Item = &'a Q>) -> Q {
    it.into_iter().fold(zero(), |a, b| a + b)
}
