//! Numeric scalars used for expansion factors and richness slack.
//!
//! Graph structure is integral, but thresholds such as `(2/3)·D + 2` or
//! `(1 - ε)·D` are not. Every threshold-taking API is generic over
//! [`Scalar`] so callers can pick exact rationals or floats.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Exact rational scalar.
pub type Rational = Ratio<i64>;

pub trait Scalar:
    Num + FromPrimitive + ToPrimitive + PartialOrd + Copy + Debug + Display + Send + Sync + 'static
{
    /// Smallest integer `n` with `n >= self`, clamped at zero.
    fn ceil_usize(self) -> usize;

    /// Largest integer `n` with `n <= self`, clamped at zero.
    fn floor_usize(self) -> usize;

    fn of(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar")
    }

    /// `⌈self · n⌉`.
    fn ceil_mul(self, n: usize) -> usize {
        (self * Self::of(n)).ceil_usize()
    }

    /// `⌈(1 - self) · n⌉`, the richness threshold for slack `self`.
    fn rich_threshold(self, n: usize) -> usize {
        (Self::one() - self).ceil_mul(n)
    }
}

macro_rules! float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn ceil_usize(self) -> usize {
                if self <= 0.0 {
                    0
                } else {
                    // absorb representation error so that 0.75 * 8 is 6, not 7
                    let r = self.round();
                    if (self - r).abs() <= 1e-9 * r.abs().max(1.0) {
                        r as usize
                    } else {
                        self.ceil() as usize
                    }
                }
            }

            fn floor_usize(self) -> usize {
                if self <= 0.0 {
                    0
                } else {
                    let r = self.round();
                    if (self - r).abs() <= 1e-9 * r.abs().max(1.0) {
                        r as usize
                    } else {
                        self.floor() as usize
                    }
                }
            }
        }
    };
}

float_scalar!(f32);
float_scalar!(f64);

impl Scalar for Rational {
    fn ceil_usize(self) -> usize {
        let c = self.ceil().to_integer();
        if c <= 0 {
            0
        } else {
            c as usize
        }
    }

    fn floor_usize(self) -> usize {
        let f = self.floor().to_integer();
        if f <= 0 {
            0
        } else {
            f as usize
        }
    }
}

/// Parses `"3"`, `"2/3"` or a decimal such as `"6.25"` into an exact rational.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if s.contains('/') {
        return Rational::from_str(s).ok().filter(|r| *r.denom() != 0);
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let denom = 10i64.checked_pow(frac_part.len() as u32)?;
    let int_val: i64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().ok()?
    };
    let frac_val: i64 = if frac_part.is_empty() {
        0
    } else {
        frac_part.parse().ok()?
    };
    let numer = int_val.checked_mul(denom)?.checked_add(frac_val)?;
    let r = Rational::new(numer, denom);
    Some(if neg { -r } else { r })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_thresholds_absorb_rounding() {
        assert_eq!(0.25f64.rich_threshold(8), 6);
        assert_eq!((1.0f64 / 3.0).ceil_mul(9), 3);
        assert_eq!((1.0f64 / 3.0).ceil_mul(10), 4);
        assert_eq!(0.1f32.rich_threshold(10), 9);
    }

    #[test]
    fn rational_thresholds() {
        let third = Rational::new(1, 3);
        assert_eq!(third.ceil_mul(9), 3);
        assert_eq!(third.ceil_mul(10), 4);
        assert_eq!(Rational::new(1, 4).rich_threshold(8), 6);
        assert_eq!(Rational::new(7, 3).floor_usize(), 2);
        assert_eq!(Rational::new(-1, 2).ceil_usize(), 0);
    }

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("2/3"), Some(Rational::new(2, 3)));
        assert_eq!(parse_rational("8"), Some(Rational::from_integer(8)));
        assert_eq!(parse_rational("6.25"), Some(Rational::new(25, 4)));
        assert_eq!(parse_rational(".5"), Some(Rational::new(1, 2)));
        assert_eq!(parse_rational("x"), None);
        assert_eq!(parse_rational("1/0"), None);
    }
}
