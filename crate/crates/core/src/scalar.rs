//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive};

/// Floating-point element type of arrays, tapes and networks: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the literal is not representable,
    /// which cannot happen for the finite constants used in this crate.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Field element used by the exact-summation checks: floats, or rationals
/// such as `num_rational::Ratio<i128>` when a check must be exact.
pub trait FieldScalar: Num + Signed + Copy + PartialOrd + Debug {}

impl<T> FieldScalar for T where T: Num + Signed + Copy + PartialOrd + Debug {}
