//! Scalar abstractions.

use std::fmt::{Debug, Display, LowerExp};

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive};

/// Field-like scalar: enough for the sqrt-free formulas (sums, products,
/// quotients, absolute values, comparisons).
pub trait Scalar:
    Num + Signed + Clone + PartialOrd + Debug + FromPrimitive + Send + Sync + 'static
{
    /// `false` for NaN and infinities; always `true` for exact types.
    fn is_finite_value(&self) -> bool;

    /// Nearest `f64` (exact types round).
    fn approx_f64(&self) -> f64;

    /// Exact conversion of a finite `f64` literal.
    fn from_lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal must be finite")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits the scalar type")
    }
}

/// Floating-point scalar with square roots, logarithms and an epsilon.
pub trait Real: Scalar + Float + Display + LowerExp {}

impl Scalar for f32 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
    fn approx_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Scalar for f64 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
    fn approx_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for Ratio<BigInt> {
    fn is_finite_value(&self) -> bool {
        true
    }
    fn approx_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
    fn from_lit(x: f64) -> Self {
        // every finite double is a dyadic rational; this conversion is exact
        Ratio::from_float(x).expect("literal must be finite")
    }
}

impl Real for f32 {}
impl Real for f64 {}
