//! Scalar abstraction shared by the physics modules.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Complex amplitude over the crate's real scalar.
pub type Complex<T> = num_complex::Complex<T>;

/// Real scalar the model is generic over (`f32`, `f64`).
///
/// Everything the linear algebra backend needs comes through [`RealField`];
/// `FromPrimitive`/`ToPrimitive` carry literals in and results out.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Lossy conversion used for error payloads and serialization.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub(crate) fn creal<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

/// Modulus of a complex number without going through `num_traits::Float`.
#[inline]
pub(crate) fn cabs<T: Real>(z: Complex<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}

/// Reduces an angle into `[0, 2π)`.
pub fn wrap_two_pi<T: Real>(x: T) -> T {
    let tau = T::two_pi();
    let mut r = x % tau;
    if r < T::zero() {
        r += tau;
    }
    // `-tiny % tau + tau` can round up to exactly tau.
    if r >= tau {
        r = T::zero();
    }
    r
}
