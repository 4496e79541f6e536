//! Scalar abstraction: every numerical kernel in this crate is generic over
//! the floating point type through [`Real`].

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Floating point scalar usable by grids, transforms and solvers.
///
/// `rustfft::FftNum` is part of the bound because the azimuthal direction is
/// differentiated and inverted spectrally.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + num_traits::Signed
    + rustfft::FftNum
    + nalgebra::RealField
    + Sum<Self>
    + Debug
    + Display
    + LowerExp
    + Default
    + 'static
{
    /// Shorthand for lossy conversion of an `f64` literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("f64 conversion")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}
