//! Exact rational helpers shared by every module.
//!
//! All market semantics run on [`Q`], an arbitrary-precision rational. The
//! constants that show up in the existence argument (for instance
//! `1/(m * 2^(3mL))`) overflow any machine integer long before the markets
//! get interesting, so there is no fixed-width fast path.

use std::fmt;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};

pub type Q = BigRational;

pub fn q(numer: i64, denom: i64) -> Q {
    Q::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn qi(value: i64) -> Q {
    Q::from_integer(BigInt::from(value))
}

pub fn zero() -> Q {
    Q::zero()
}

pub fn one() -> Q {
    Q::one()
}

/// `2^exp` as a rational.
pub fn pow2(exp: u32) -> Q {
    Q::from_integer(BigInt::one() << exp as usize)
}

/// `base^exp` for a non-negative integer exponent.
pub fn powi(base: &Q, exp: u32) -> Q {
    num::pow::pow(base.clone(), exp as usize)
}

/// Smallest multiple of `1/n` that is `>= value`.
pub fn ceil_to_grid(value: &Q, n: u64) -> Q {
    let scale = Q::from_integer(BigInt::from(n));
    (value * &scale).ceil() / scale
}

/// True when `value` is an integer multiple of `1/n`.
pub fn is_grid_multiple(value: &Q, n: u64) -> bool {
    (value * Q::from_integer(BigInt::from(n))).is_integer()
}

pub fn dot(a: &[Q], b: &[Q]) -> Q {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sum(values: &[Q]) -> Q {
    values.iter().sum()
}

pub fn abs_diff(a: &Q, b: &Q) -> Q {
    (a - b).abs()
}

pub fn max_q(a: Q, b: Q) -> Q {
    if a >= b {
        a
    } else {
        b
    }
}

/// L-infinity distance between two equal-length vectors.
pub fn linf(a: &[Q], b: &[Q]) -> Q {
    a.iter()
        .zip(b)
        .map(|(x, y)| abs_diff(x, y))
        .fold(Q::zero(), max_q)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RationalParseError {
    #[error("float literal; write {suggestion}")]
    FloatLiteral { suggestion: String },
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
    #[error("not a rational literal: `{0}`")]
    Malformed(String),
}

/// Parses `p/q` or an integer literal. Decimal and exponent forms are refused
/// so that every value stays exact.
pub fn parse_rational(text: &str) -> Result<Q, RationalParseError> {
    let t = text.trim();
    if t.contains(['.', 'e', 'E']) && !t.contains('/') {
        return Err(match decimal_to_rational(t) {
            Some(v) => RationalParseError::FloatLiteral {
                suggestion: v.to_string(),
            },
            None => RationalParseError::Malformed(t.to_string()),
        });
    }
    let parse_int = |s: &str| -> Result<BigInt, RationalParseError> {
        let s = s.trim();
        let digits = s.strip_prefix(['-', '+']).unwrap_or(s);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(RationalParseError::Malformed(t.to_string()));
        }
        s.parse::<BigInt>()
            .map_err(|_| RationalParseError::Malformed(t.to_string()))
    };
    match t.split_once('/') {
        None => Ok(Q::from_integer(parse_int(t)?)),
        Some((n, d)) => {
            let d = parse_int(d)?;
            if d.is_zero() {
                return Err(RationalParseError::ZeroDenominator(t.to_string()));
            }
            Ok(Q::new(parse_int(n)?, d))
        }
    }
}

fn decimal_to_rational(t: &str) -> Option<Q> {
    let (mantissa, exp) = match t.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().ok()?),
        None => (t, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    if !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let numer: BigInt = digits.parse().ok()?;
    let scale = exp - frac_part.len() as i32;
    let ten = Q::from_integer(BigInt::from(10));
    let mut v = Q::from_integer(numer);
    if scale >= 0 {
        v *= powi(&ten, scale as u32);
    } else {
        v /= powi(&ten, (-scale) as u32);
    }
    Some(if neg { -v } else { v })
}

/// Canonical text form: `p/q` in lowest terms, or a bare integer.
pub fn format_rational(value: &Q) -> String {
    value.to_string()
}

/// Display adapter for rational slices, `(a, b, c)`.
pub struct VecDisplay<'a>(pub &'a [Q]);

impl fmt::Display for VecDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Serde adapters that keep rationals exact on the wire as `"p/q"` strings.
pub mod serde_q {
    use super::*;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Q, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        let raw = RawRational::deserialize(d)?;
        raw.into_q().map_err(D::Error::custom)
    }

    /// Accepts strings and JSON integers; JSON floats are rejected.
    #[derive(Deserialize)]
    #[serde(untagged)]
    pub(crate) enum RawRational {
        Text(String),
        Int(i64),
        Float(f64),
    }

    impl RawRational {
        pub(crate) fn into_q(self) -> Result<Q, RationalParseError> {
            match self {
                RawRational::Text(s) => parse_rational(&s),
                RawRational::Int(i) => Ok(qi(i)),
                RawRational::Float(x) => Err(RationalParseError::FloatLiteral {
                    suggestion: decimal_to_rational(&x.to_string())
                        .map(|v| v.to_string())
                        .unwrap_or_else(|| "p/q".into()),
                }),
            }
        }
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(values: &[Q], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(values.len()))?;
            for v in values {
                seq.serialize_element(&format_rational(v))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Q>, D::Error> {
            let raw = Vec::<RawRational>::deserialize(d)?;
            raw.into_iter()
                .map(|r| r.into_q().map_err(D::Error::custom))
                .collect()
        }
    }

    pub mod matrix {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(rows: &[Vec<Q>], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(rows.len()))?;
            for row in rows {
                let text: Vec<String> = row.iter().map(format_rational).collect();
                seq.serialize_element(&text)?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Q>>, D::Error> {
            let raw = Vec::<Vec<RawRational>>::deserialize(d)?;
            raw.into_iter()
                .map(|row| {
                    row.into_iter()
                        .map(|r| r.into_q().map_err(D::Error::custom))
                        .collect()
                })
                .collect()
        }
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(value: &Option<Q>, s: S) -> Result<S::Ok, S::Error> {
            match value {
                Some(v) => s.serialize_some(&format_rational(v)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Q>, D::Error> {
            let raw = Option::<RawRational>::deserialize(d)?;
            raw.map(|r| r.into_q().map_err(D::Error::custom)).transpose()
        }
    }
}
