use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, NumAssign};

/// Real scalar used by the symplectic linear algebra. Implemented for `f32`
/// and `f64`.
pub trait Real:
    Float + FloatConst + NumAssign + nalgebra::Scalar + Copy + Send + Sync + Debug + Display + 'static
{
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).unwrap()
    }

    #[inline]
    fn to_f64(self) -> f64 {
        <Self as num_traits::ToPrimitive>::to_f64(&self).unwrap()
    }

    /// Tolerance for structural identities (SᵀJS = J, isotropy, ...).
    /// 1e-10 in double precision, a few hundred ulps in single precision.
    #[inline]
    fn structural_tol() -> Self {
        Self::lit(1e-10).max(Self::epsilon() * Self::lit(1e3))
    }
}

impl<T> Real for T where
    T: Float + FloatConst + NumAssign + nalgebra::Scalar + Copy + Send + Sync + Debug + Display + 'static
{
}
