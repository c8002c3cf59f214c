use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar the whole crate is generic over.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A point of the 7-dimensional chart.
pub type Point7<S> = [S; 7];
/// A 7x7 matrix stored row-major.
pub type Mat7<S> = [[S; 7]; 7];

pub fn zero_mat<S: Real>() -> Mat7<S> {
    [[S::zero(); 7]; 7]
}

pub fn identity_mat<S: Real>() -> Mat7<S> {
    let mut m = zero_mat();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = S::one();
    }
    m
}
