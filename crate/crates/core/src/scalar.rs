//! Floating-point abstraction shared by the numeric modules.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar used for sizes, times and work amounts.
///
/// Implemented for `f32` and `f64`. All of the math in this crate is written
/// against this trait; the concrete aliases at the crate root pick `f64`.
pub trait Scalar:
    'static
    + Copy
    + Send
    + Sync
    + Default
    + Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + LowerExp
    + FromStr
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Converts a count into this scalar type.
    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("count representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Relative tolerance that root-finders in this crate can honestly
    /// promise at this precision.
    #[inline]
    fn solver_tolerance() -> Self {
        Self::of(1e-10).max(Self::epsilon() * Self::of(1024.0))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
