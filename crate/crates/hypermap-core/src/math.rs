//! Scalar abstraction over `f32`/`f64` and the float routines that are not
//! available in `core` (routed through `std` or `libm`).

use core::fmt;
use core::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

macro_rules! shim {
    ($name:ident, $std:ident, $libm:ident, $t:ty) => {
        #[cfg(feature = "std")]
        #[inline]
        pub fn $name(x: $t) -> $t {
            x.$std()
        }
        #[cfg(not(feature = "std"))]
        #[inline]
        pub fn $name(x: $t) -> $t {
            libm::$libm(x)
        }
    };
}

shim!(expf, exp, expf, f32);
shim!(lnf, ln, logf, f32);
shim!(sqrtf, sqrt, sqrtf, f32);
shim!(exp, exp, exp, f64);
shim!(ln, ln, log, f64);
shim!(sqrt, sqrt, sqrt, f64);
shim!(floor, floor, floor, f64);

/// 2^x for the perplexity <-> entropy conversion.
#[inline]
pub fn exp2(x: f64) -> f64 {
    exp(x * core::f64::consts::LN_2)
}

#[inline]
pub fn log2(x: f64) -> f64 {
    ln(x) / core::f64::consts::LN_2
}

/// The scalar type family tensor operations are generic over: `f32` on the
/// production path, `f64` for finite-difference checks.
pub trait Scalar:
    Copy
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;

    #[inline]
    fn maximum(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn exp(self) -> Self {
        expf(self)
    }
    #[inline]
    fn ln(self) -> Self {
        lnf(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        sqrtf(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f32::from_bits(self.to_bits() & 0x7fff_ffff)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        sqrt(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::from_bits(self.to_bits() & 0x7fff_ffff_ffff_ffff)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}
