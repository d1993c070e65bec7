//! Exact rational arithmetic for utilizations and speed factors.
//!
//! On the wire a rational is a `[numerator, denominator]` pair. For
//! hand-written documents the parser also accepts a bare integer or a
//! `"n/d"` string.

use std::fmt;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::de::{self, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Exact rational backed by `i128`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(pub Ratio<i128>);

impl Rational {
    pub const ZERO: Rational = Rational(Ratio::new_raw(0, 1));
    pub const ONE: Rational = Rational(Ratio::new_raw(1, 1));

    /// Panics on a zero denominator.
    pub fn new(numer: i128, denom: i128) -> Self {
        Rational(Ratio::new(numer, denom))
    }

    pub fn from_int(v: i128) -> Self {
        Rational(Ratio::from_integer(v))
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn ceil_int(&self) -> i128 {
        self.0.ceil().to_integer()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        match s.split_once('/') {
            Some((n, d)) => {
                let n: i128 = n.trim().parse().ok()?;
                let d: i128 = d.trim().parse().ok()?;
                (d != 0).then(|| Rational::new(n, d))
            }
            None => s.parse::<i128>().ok().map(Rational::from_int),
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl std::ops::Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Rational) -> Rational {
        Rational(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Rational {
    type Output = Rational;
    fn sub(self, rhs: Rational) -> Rational {
        Rational(self.0 - rhs.0)
    }
}

impl std::ops::Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Rational) -> Rational {
        Rational(self.0 * rhs.0)
    }
}

impl std::ops::AddAssign for Rational {
    fn add_assign(&mut self, rhs: Rational) {
        self.0 += rhs.0;
    }
}

impl std::ops::SubAssign for Rational {
    fn sub_assign(&mut self, rhs: Rational) {
        self.0 -= rhs.0;
    }
}

impl std::iter::Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::ZERO, |a, b| a + b)
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        // i64 on the wire: buffered (flattened/tagged) formats cannot carry i128
        let n = i64::try_from(self.numer()).map_err(|_| serde::ser::Error::custom("numerator exceeds i64"))?;
        let d = i64::try_from(self.denom()).map_err(|_| serde::ser::Error::custom("denominator exceeds i64"))?;
        (n, d).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct RationalVisitor;

        impl<'de> Visitor<'de> for RationalVisitor {
            type Value = Rational;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a [numerator, denominator] pair, an integer, or an \"n/d\" string")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rational, E> {
                Ok(Rational::from_int(v as i128))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rational, E> {
                Ok(Rational::from_int(v as i128))
            }

            fn visit_i128<E: de::Error>(self, v: i128) -> Result<Rational, E> {
                Ok(Rational::from_int(v))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Rational, E> {
                Rational::parse(v).ok_or_else(|| E::custom(format!("bad rational {v:?}")))
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Rational, A::Error> {
                let n: i64 = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let d: i64 = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &self));
                }
                if d == 0 {
                    return Err(de::Error::custom("zero denominator"));
                }
                Ok(Rational::new(n as i128, d as i128))
            }
        }

        deserializer.deserialize_any(RationalVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_form_is_a_pair() {
        let r = Rational::new(19, 100);
        assert_eq!(serde_json::to_string(&r).unwrap(), "[19,100]");
        let back: Rational = serde_json::from_str("[38,200]").unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn lenient_forms() {
        let a: Rational = serde_json::from_str("2").unwrap();
        let b: Rational = serde_json::from_str("\"5/2\"").unwrap();
        assert_eq!(a, Rational::from_int(2));
        assert_eq!(b, Rational::new(5, 2));
        assert!(serde_json::from_str::<Rational>("[1,0]").is_err());
    }
}
