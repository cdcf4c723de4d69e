//! Scalar abstraction: the engine is generic over the real floating type.
//!
//! Everything complex-valued is built on `num_complex::Complex<T>` with
//! `T: Real`, so the same code instantiates at `f32` and `f64`. Concrete
//! aliases live at the crate root.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, NumCast};

/// Real floating scalar the engine is generic over (`f32` or `f64`).
pub trait Real:
    RealField + Copy + Default + FromPrimitive + NumCast + Send + Sync + std::fmt::Display
{
    /// Lift an `f64` literal into `Self`. Panics only on non-finite input.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    /// Lossy conversion back to `f64` (for reporting and serialization).
    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).expect("real scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex number over the generic real scalar.
pub type Cplx<T> = Complex<T>;

/// Real part lifted to a complex value.
#[inline]
pub fn re<T: Real>(x: T) -> Cplx<T> {
    Complex::new(x, T::zero())
}

/// Imaginary unit times `x`.
#[inline]
pub fn im<T: Real>(x: T) -> Cplx<T> {
    Complex::new(T::zero(), x)
}

/// Complex exponential; `num_complex::Complex::exp` needs `T: Float`, which we
/// avoid to keep a single trait bound, so evaluate through `RealField`.
#[inline]
pub fn cexp<T: Real>(z: Cplx<T>) -> Cplx<T> {
    let r = z.re.exp();
    Complex::new(r * z.im.cos(), r * z.im.sin())
}

/// `exp(i theta)`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Cplx<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// Complex modulus through `RealField` (avoids a `Float` bound).
#[inline]
pub fn cabs<T: Real>(z: Cplx<T>) -> T {
    z.norm_sqr().sqrt()
}

#[inline]
pub fn rmax<T: Real>(a: T, b: T) -> T {
    if a < b {
        b
    } else {
        a
    }
}

#[inline]
pub fn rmin<T: Real>(a: T, b: T) -> T {
    if a < b {
        a
    } else {
        b
    }
}

/// sin(w t)/w with the w -> 0 limit `t`.
#[inline]
pub fn sinc_omega<T: Real>(omega: T, t: T) -> T {
    let x = omega * t;
    if x.abs() < T::of(1e-8) {
        // sin(wt)/w = t (1 - (wt)^2/6 + ...); quadratic term below tolerance
        t
    } else {
        (x).sin() / omega
    }
}

/// Physical constants of the run. Tests default to natural units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants<T: Real> {
    /// Vacuum speed of light (m/s).
    pub c: T,
    /// Vacuum permittivity (F/m).
    pub eps0: T,
    /// Vacuum permeability (H/m).
    pub mu0: T,
}

impl<T: Real> Constants<T> {
    /// c = eps0 = mu0 = 1.
    pub fn natural() -> Self {
        Self {
            c: T::one(),
            eps0: T::one(),
            mu0: T::one(),
        }
    }

    /// SI values.
    pub fn si() -> Self {
        Self {
            c: T::of(299_792_458.0),
            eps0: T::of(8.854_187_812_8e-12),
            mu0: T::of(1.256_637_062_12e-6),
        }
    }

    /// Relative deviation of c^2 eps0 mu0 from 1.
    pub fn consistency(&self) -> T {
        (self.c * self.c * self.eps0 * self.mu0 - T::one()).abs()
    }

    pub fn is_consistent(&self) -> bool {
        self.consistency() <= T::of(1e-9)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cexp_matches_f64() {
        let z = Complex::new(-0.3_f64, 1.7);
        let want = z.exp();
        let got = cexp(z);
        assert!((want - got).norm() < 1e-15);
    }

    #[test]
    fn sinc_limit_continuous() {
        let t = 0.37_f64;
        let near = sinc_omega(1e-9, t);
        assert!((near - t).abs() < 1e-12);
        let away = sinc_omega(2.0, t);
        assert!((away - (2.0 * t).sin() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn constants_consistency() {
        assert!(Constants::<f64>::natural().is_consistent());
        assert!(Constants::<f64>::si().is_consistent());
        let bad = Constants {
            c: 2.0_f64,
            eps0: 1.0,
            mu0: 1.0,
        };
        assert!(!bad.is_consistent());
    }

    #[test]
    fn works_at_f32() {
        let z = Complex::new(0.5_f32, -0.25);
        assert!((cabs(z) - z.norm_sqr().sqrt()).abs() < 1e-7);
        assert_eq!(f32::of(2.0), 2.0_f32);
    }
}
