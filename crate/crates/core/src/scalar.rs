//! Scalar abstraction shared by the numeric modules.
//!
//! Everything that does linear algebra is written against [`Scalar`], which is
//! implemented for `f32` and `f64`. Tolerances that only make sense relative to
//! machine precision live on the trait so that `f32` builds do not inherit
//! thresholds below their epsilon.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Serialize + DeserializeOwned + Send + Sync + 'static
{
    /// Relative threshold under which a pivot or singular value counts as zero.
    const RANK_TOL: f64;
    /// Relative threshold for pseudoinverse truncation.
    const PINV_TOL: f64;

    /// Converts an `f64` literal or parameter into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f64 {
    const RANK_TOL: f64 = 1e-10;
    const PINV_TOL: f64 = 1e-12;
}

impl Scalar for f32 {
    const RANK_TOL: f64 = 1e-5;
    const PINV_TOL: f64 = 1e-6;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip<S: Scalar>(x: f64) -> f64 {
        S::lit(x).as_f64()
    }

    #[test]
    fn literal_conversion() {
        assert_eq!(roundtrip::<f64>(0.1), 0.1);
        assert!((roundtrip::<f32>(0.1) - 0.1).abs() < 1e-7);
    }
}
