//! Scalar abstraction so the whole lab runs in either `f32` or `f64`.

use core::fmt::{Debug, Display};
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::distributions::uniform::SampleUniform;
use rand::Rng;
use rand_distr::StandardNormal;

/// Floating-point scalar the market, environments, and networks are generic over.
///
/// Everything numeric in this crate is written against this trait; the crate
/// root exports `f64` aliases for the common case.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + SampleUniform
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// One standard-normal draw from `rng`.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossy-in, exact-out conversion from `f64` (exact for `f64`, rounded for `f32`).
    fn from_f64_c(x: f64) -> Self;

    /// Widening conversion to `f64`.
    fn to_f64_c(self) -> f64;

    /// Conversion from a count; counts in this crate stay far below 2^52.
    fn from_usize_c(n: usize) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.sample(StandardNormal)
            }

            #[inline]
            fn from_f64_c(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64_c(self) -> f64 {
                self as f64
            }

            #[inline]
            fn from_usize_c(n: usize) -> Self {
                n as $t
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);
