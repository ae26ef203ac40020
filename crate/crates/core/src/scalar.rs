use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign};

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Floating point scalar the DSP and inference code is generic over: f32 or f64.
///
/// Filter design and alignment math typically run at f64, the sample
/// generator at f32. Concrete aliases for both live at the crate root.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumCast
    + Sum
    + AddAssign
    + MulAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Shorthand for converting an f64 constant into this scalar type.
    fn cast_from(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite f64 constant")
    }

    /// Widen to f64 for accumulation and reporting.
    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).expect("scalar converts to f64")
    }

    /// tanh as used by the recurrent gates. The f32 instantiation runs the
    /// branchless rational form from [`crate::fastmath`] (accurate to f32
    /// roundoff, vectorizable); f64 keeps libm.
    fn gate_tanh(self) -> Self {
        self.tanh()
    }

    /// Logistic function for the gates; same per-type policy as `gate_tanh`.
    fn gate_sigmoid(self) -> Self {
        Self::one() / (Self::one() + (-self).exp())
    }
}

impl Scalar for f32 {
    fn gate_tanh(self) -> Self {
        crate::fastmath::tanh_f32(self)
    }

    fn gate_sigmoid(self) -> Self {
        crate::fastmath::sigmoid_f32(self)
    }
}

impl Scalar for f64 {}
