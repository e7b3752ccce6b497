//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + FftNum
    + Default
    + Display
    + Debug
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Every finite `f64` is representable (possibly rounded).
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize converts to float")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex sample over a [`Real`] scalar.
pub type Cx<T> = Complex<T>;

/// `e^{j·2π·num/den}` with the numerator reduced modulo `den` first, so large
/// integer products keep full phase precision.
#[inline]
pub fn unit_phasor<T: Real>(num: i64, den: usize) -> Cx<T> {
    let r = num.rem_euclid(den as i64) as f64 / den as f64;
    let (s, c) = (2.0 * std::f64::consts::PI * r).sin_cos();
    Cx::new(T::lit(c), T::lit(s))
}

/// `e^{j·angle}` for an angle already in radians.
#[inline]
pub fn cis<T: Real>(angle: f64) -> Cx<T> {
    let (s, c) = angle.sin_cos();
    Cx::new(T::lit(c), T::lit(s))
}

/// Squared ℓ2 norm of a complex slice.
pub fn norm_sqr<T: Real>(v: &[Cx<T>]) -> T {
    v.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

pub fn norm2<T: Real>(v: &[Cx<T>]) -> T {
    norm_sqr(v).sqrt()
}

/// `a^H b`.
pub fn dot_conj<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> Cx<T> {
    a.iter()
        .zip(b)
        .fold(Cx::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_phasor_reduces_large_arguments() {
        let a: Cx<f64> = unit_phasor(3 * 512 + 7, 512);
        let b: Cx<f64> = unit_phasor(7, 512);
        assert!((a - b).norm() < 1e-15);
        let neg: Cx<f64> = unit_phasor(-1, 4);
        assert!((neg - Cx::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn literals_round_trip_for_both_widths() {
        assert_eq!(f64::lit(0.25), 0.25);
        assert_eq!(f32::lit(0.25), 0.25f32);
    }
}
