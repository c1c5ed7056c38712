//! Scalar abstraction shared by every numerical module.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the library is generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; every literal used by the library is representable.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal out of range for scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count out of range for scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Volume of the unit ball in dimension `n` (`n` = 1, 2 or 3).
    fn unit_ball_volume(n: usize) -> Self {
        match n {
            1 => Self::lit(2.0),
            2 => Self::PI(),
            3 => Self::lit(4.0) * Self::PI() / Self::lit(3.0),
            _ => panic!("unsupported dimension {n}"),
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Positive part `max(x, 0)`.
#[inline]
pub fn pos<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Negative part `max(-x, 0)`.
#[inline]
pub fn neg<T: Real>(x: T) -> T {
    if x < T::zero() {
        -x
    } else {
        T::zero()
    }
}

/// `|x|^q`, with `0^q = 0` for `q > 0`.
#[inline]
pub fn abs_pow<T: Real>(x: T, q: T) -> T {
    let a = x.abs();
    if a == T::zero() {
        T::zero()
    } else {
        a.powf(q)
    }
}
