//! Floating-point abstraction for the solver core.
//!
//! Everything numerical is generic over [`Scalar`] so the whole pipeline can
//! run in `f32` or `f64`. Production code and the CLI use the `f64` aliases
//! exported from the crate root; `f32` mainly serves to keep the code honest
//! about tolerances.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Scalar type the solvers operate on.
///
/// `cast` is the single entry point for literals: tolerances, physical
/// constants in examples, and envelope formulas are written in `f64` and
/// narrowed here.
pub trait Scalar:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    #[inline]
    fn cast(v: f64) -> Self {
        // from_f64 never fails for float targets; it rounds to nearest.
        Self::from_f64(v).unwrap()
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap()
    }

    #[inline]
    fn half() -> Self {
        Self::cast(0.5)
    }

    #[inline]
    fn two() -> Self {
        Self::cast(2.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `ln(1 + a * exp(x))` without overflowing the inner exponential.
///
/// Used by the Gronwall envelopes, whose factors `1 + b t e^{b t}` exceed
/// f64 range long before the logarithm of the bound does.
pub fn ln_one_plus_mul_exp<S: Scalar>(a: S, x: S) -> S {
    if a <= S::zero() {
        debug_assert!(a >= S::zero(), "factor must be non-negative");
        return S::zero();
    }
    let w = a.ln() + x; // log of a*e^x
    let cutoff = S::cast(30.0);
    if w > cutoff {
        // ln(1 + e^w) = w + ln(1 + e^-w); the correction is below f64 eps.
        w
    } else {
        w.exp().ln_1p()
    }
}
