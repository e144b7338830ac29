//! Scalar abstraction: all numerics are generic over a real field type.

use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable throughout the library. Implemented for `f32` and `f64`.
pub trait Real:
    nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default + Send + Sync + 'static
{
    /// Lift an `f64` literal into the scalar type.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    /// Lift a count into the scalar type.
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("count fits in scalar")
    }

    /// Lower into `f64` (exact for `f64`, widening for `f32`).
    fn as_f64(self) -> f64 {
        self.to_f64().expect("real scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
