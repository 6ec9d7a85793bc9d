//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar type the library is generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Sum + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: i64) -> Self {
        Self::from_i64(n).expect("integer representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("integer representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `e^{θ|x|} − 1 − θ|x|`, evaluated without cancellation for small arguments.
pub fn sigma_theta<T: Real>(theta: T, x: T) -> T {
    let a = theta * x.abs();
    expm1_minus_linear(a)
}

/// `e^a − 1 − a` for any real `a`.
pub fn expm1_minus_linear<T: Real>(a: T) -> T {
    if a.abs() < T::lit(1e-3) {
        // Taylor series to fifth order; truncation error below a^6/720.
        let a2 = a * a;
        a2 * (T::lit(0.5) + a * (T::lit(1.0 / 6.0) + a * (T::lit(1.0 / 24.0) + a * T::lit(1.0 / 120.0))))
    } else {
        a.exp_m1() - a
    }
}

/// Supremum norm of a vector difference.
pub fn sup_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc.max((x - y).abs()))
}

/// Euclidean norm of a vector difference.
pub fn euclid_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

pub fn sup_norm<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}
