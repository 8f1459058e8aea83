//! Exact rational scalars and their text encodings.

use num::bigint::{BigInt, Sign};
use num::rational::BigRational;
use num::{Integer, One, Signed, ToPrimitive, Zero};
use std::fmt;

pub type Scalar = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScalarParseError {
    #[error("empty rational literal")]
    Empty,
    #[error("malformed rational literal {0:?}")]
    Malformed(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
}

/// `n/d` as a reduced rational. Panics on `d == 0`.
pub fn rat(n: i64, d: i64) -> Scalar {
    Scalar::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Scalar {
    Scalar::from_integer(BigInt::from(n))
}

pub fn zero() -> Scalar {
    Scalar::zero()
}

pub fn one() -> Scalar {
    Scalar::one()
}

/// Parses `"n"`, `"n/d"` or a finite decimal such as `"0.25"`.
pub fn parse_scalar(s: &str) -> Result<Scalar, ScalarParseError> {
    let t = s.trim();
    if t.is_empty() {
        return Err(ScalarParseError::Empty);
    }
    let bad = || ScalarParseError::Malformed(s.to_string());
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(ScalarParseError::ZeroDenominator(s.to_string()));
        }
        return Ok(Scalar::new(n, d));
    }
    if let Some((ip, fp)) = t.split_once('.') {
        if fp.is_empty() || !fp.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = ip.starts_with('-');
        let ip_digits = ip.trim_start_matches(['-', '+']);
        if !ip_digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let digits = format!("{}{}", if ip_digits.is_empty() { "0" } else { ip_digits }, fp);
        let mut n: BigInt = digits.parse().map_err(|_| bad())?;
        if neg {
            n = -n;
        }
        let d = num::pow(BigInt::from(10), fp.len());
        return Ok(Scalar::new(n, d));
    }
    let n: BigInt = t.parse().map_err(|_| bad())?;
    Ok(Scalar::from_integer(n))
}

/// Canonical text form: `"n"` for integers, `"n/d"` otherwise.
pub fn format_scalar(x: &Scalar) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Decimal expansion rounded half away from zero to `digits` fractional digits.
pub fn format_decimal(x: &Scalar, digits: usize) -> String {
    let scale = num::pow(BigInt::from(10), digits);
    let scaled = x.abs() * Scalar::from_integer(scale.clone());
    let rounded = (scaled + rat(1, 2)).floor().to_integer();
    let (ip, fp) = rounded.div_rem(&scale);
    let sign = if x.is_negative() && !rounded.is_zero() { "-" } else { "" };
    if digits == 0 {
        return format!("{sign}{ip}");
    }
    let fs = fp.to_string();
    format!("{sign}{ip}.{}{fs}", "0".repeat(digits - fs.len()))
}

pub fn to_f64(x: &Scalar) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        // Huge numerators/denominators overflow the direct conversion.
        let shift = x.numer().bits().max(x.denom().bits()) as i64 - 60;
        let n = (x.numer() >> shift.max(0) as usize).to_f64().unwrap_or(0.0);
        let d = (x.denom() >> shift.max(0) as usize).to_f64().unwrap_or(1.0);
        n / d
    })
}

/// Exact value of a finite double.
pub fn from_f64(x: f64) -> Option<Scalar> {
    Scalar::from_float(x)
}

/// Simplest rational in the closed interval `[lo, hi]` (Stern-Brocot descent).
pub fn simplest_between(lo: &Scalar, hi: &Scalar) -> Scalar {
    assert!(lo <= hi);
    if lo.is_negative() && hi.is_positive() || lo.is_zero() || hi.is_zero() {
        return zero();
    }
    if hi.is_negative() {
        return -simplest_between(&-hi, &-lo);
    }
    let fl = lo.floor();
    if fl == *lo {
        return lo.clone();
    }
    if fl.clone() + one() <= *hi {
        return fl + one();
    }
    // lo and hi share the integer part; recurse on reciprocals of the fractional parts.
    let a = lo - &fl;
    let b = hi - &fl;
    let inner = simplest_between(&b.recip(), &a.recip());
    fl + inner.recip()
}

pub fn min(a: &Scalar, b: &Scalar) -> Scalar {
    if a <= b { a.clone() } else { b.clone() }
}

pub fn max(a: &Scalar, b: &Scalar) -> Scalar {
    if a >= b { a.clone() } else { b.clone() }
}

pub fn is_positive(x: &Scalar) -> bool {
    x.numer().sign() == Sign::Plus
}

/// Display adapter printing the canonical string form.
pub struct Exact<'a>(pub &'a Scalar);

impl fmt::Display for Exact<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_scalar(self.0))
    }
}

/// Serde adapter: serializes as `"n/d"` strings and accepts strings or JSON integers.
pub mod serde_scalar {
    use super::*;
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Scalar, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_scalar(x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Scalar, D::Error> {
        d.deserialize_any(ScalarVisitor)
    }

    pub(crate) struct ScalarVisitor;

    impl<'de> Visitor<'de> for ScalarVisitor {
        type Value = Scalar;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a rational as \"num/den\" or an integer")
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<Scalar, E> {
            parse_scalar(v).map_err(E::custom)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<Scalar, E> {
            Ok(int(v))
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<Scalar, E> {
            Ok(Scalar::from_integer(BigInt::from(v)))
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<Scalar, E> {
            Err(E::custom(format!(
                "inexact float literal {v}; write rationals as \"num/den\" strings"
            )))
        }
    }

    /// Same encoding for a fixed pair `[x0, x1]`.
    pub mod pair {
        use super::*;
        use serde::ser::SerializeTuple;
        use serde::Deserialize;

        pub fn serialize<S: Serializer>(x: &[Scalar; 2], s: S) -> Result<S::Ok, S::Error> {
            let mut t = s.serialize_tuple(2)?;
            t.serialize_element(&format_scalar(&x[0]))?;
            t.serialize_element(&format_scalar(&x[1]))?;
            t.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[Scalar; 2], D::Error> {
            let v: [Wrapped; 2] = Deserialize::deserialize(d)?;
            let [a, b] = v;
            Ok([a.0, b.0])
        }
    }

    /// Newtype with the string encoding, for use inside containers.
    #[derive(Debug, Clone, PartialEq, Eq)]
    pub struct Wrapped(pub Scalar);

    impl serde::Serialize for Wrapped {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            serialize(&self.0, s)
        }
    }

    impl<'de> serde::Deserialize<'de> for Wrapped {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            deserialize(d).map(Wrapped)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_scalar("22/24").unwrap(), rat(11, 12));
        assert_eq!(parse_scalar(" -3 ").unwrap(), int(-3));
        assert_eq!(parse_scalar("0.25").unwrap(), rat(1, 4));
        assert_eq!(parse_scalar("-1.5").unwrap(), rat(-3, 2));
        assert!(matches!(parse_scalar("3/0"), Err(ScalarParseError::ZeroDenominator(_))));
        assert!(parse_scalar("1/2/3").is_err());
        assert!(parse_scalar("abc").is_err());
        assert!(parse_scalar("").is_err());
    }

    #[test]
    fn decimal_rounding() {
        assert_eq!(format_decimal(&rat(1285, 1536), 6), "0.836589");
        assert_eq!(format_decimal(&rat(2, 3), 3), "0.667");
        assert_eq!(format_decimal(&rat(-1, 3), 2), "-0.33");
        assert_eq!(format_decimal(&rat(1, 200), 2), "0.01");
        assert_eq!(format_decimal(&int(7), 2), "7.00");
    }

    #[test]
    fn simplest() {
        assert_eq!(simplest_between(&rat(3, 10), &rat(4, 10)), rat(1, 3));
        assert_eq!(simplest_between(&rat(1, 2), &rat(1, 2)), rat(1, 2));
        assert_eq!(simplest_between(&rat(3, 2), &rat(5, 2)), int(2));
        assert_eq!(simplest_between(&rat(-2, 3), &rat(-1, 2)), rat(-1, 2));
    }

    #[test]
    fn float_roundtrip_is_exact() {
        let x = from_f64(0.1).unwrap();
        assert_eq!(to_f64(&x), 0.1);
        assert_ne!(x, rat(1, 10));
    }
}
