//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the models and solvers are generic over: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Lossless for `f64`, rounding for `f32`.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;
}

macro_rules! impl_real {
    ($f:ty) => {
        impl Real for $f {
            #[inline(always)]
            fn lit(x: f64) -> Self {
                x as $f
            }

            #[inline(always)]
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// `Σ a_i b_i` without conjugation.
pub fn cdot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + *x * *y)
}

/// `Σ a_i z_i` for a complex vector and a real vector.
pub fn cdot_real<T: Real>(a: &[Complex<T>], z: &[T]) -> Complex<T> {
    a.iter()
        .zip(z)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + *x * *y)
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Euclidean norm of a complex vector.
pub fn cnorm<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}

pub fn to_complex<T: Real>(x: &[T]) -> Vec<Complex<T>> {
    x.iter().map(|v| Complex::new(*v, T::zero())).collect()
}

pub fn re<T: Real>(x: &[Complex<T>]) -> Vec<T> {
    x.iter().map(|z| z.re).collect()
}

pub fn is_real<T: Real>(x: &[Complex<T>]) -> bool {
    x.iter().all(|z| z.im == T::zero())
}
