//! Floating-point abstraction shared by the simulation and analysis code.
//!
//! Everything that carries a coupler value, an energy or a statistical
//! estimate is generic over [`Real`], so the same engine runs in `f64`
//! (the default, see the aliases in the crate root) or in `f32` when memory
//! bandwidth matters more than the last digits.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Significant digits needed for a lossless decimal round trip.
    const ROUND_TRIP_DIGITS: usize;

    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("every f64 converts to a float type")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize converts to a float type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }

    /// `+1` or `-1` as a float.
    fn from_spin(s: i8) -> Self;

    /// Maps a random word to `(0, 1)`.
    fn from_unit_u32(u: u32) -> Self;
}

impl Real for f32 {
    const ROUND_TRIP_DIGITS: usize = 9;

    #[inline(always)]
    fn from_spin(s: i8) -> Self {
        s as f32
    }

    #[inline(always)]
    fn from_unit_u32(u: u32) -> Self {
        // 24 high bits keep the result strictly below 1
        ((u >> 8) as f32 + 0.5) * (1.0 / 16_777_216.0)
    }
}

impl Real for f64 {
    const ROUND_TRIP_DIGITS: usize = 17;

    #[inline(always)]
    fn from_spin(s: i8) -> Self {
        s as f64
    }

    #[inline(always)]
    fn from_unit_u32(u: u32) -> Self {
        (u as f64 + 0.5) * (1.0 / 4_294_967_296.0)
    }
}

/// Formats `v` in scientific notation with at least 17 significant digits.
pub fn fmt_exact<R: Real>(v: R) -> String {
    let digits = R::ROUND_TRIP_DIGITS.max(17);
    format!("{:.*e}", digits - 1, v)
}

/// Parses a value written by [`fmt_exact`] (or any decimal float).
pub fn parse_real<R: Real>(s: &str) -> Option<R> {
    s.trim().parse::<R>().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_format_round_trips() {
        for v in [0.1f64, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = fmt_exact(v);
            assert_eq!(parse_real::<f64>(&s), Some(v), "{s}");
        }
        let v = 0.7f32;
        assert_eq!(parse_real::<f32>(&fmt_exact(v)), Some(v));
    }
}
