//! Forward-mode differentiation over the complex numbers.
//!
//! Newton refinement of Wronskian zeros needs `W'(lambda)` without the
//! cancellation of a finite difference. Since the transfer matrices are
//! analytic in `lambda`, propagating a first-order dual part through the
//! same arithmetic yields the exact derivative.

use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::Complex;

/// Arithmetic shared by `Complex` and [`DualComplex`], enough to build
/// transfer matrices.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_complex(c: Complex) -> Self;
    fn from_f64(x: f64) -> Self;
    /// The underlying complex value (derivative part discarded).
    fn value(self) -> Complex;
    fn mul_f64(self, s: f64) -> Self;
    fn exp(self) -> Self;
    fn cosh(self) -> Self;
    fn sinh(self) -> Self;
}

impl Scalar for Complex {
    fn from_complex(c: Complex) -> Self {
        c
    }
    fn from_f64(x: f64) -> Self {
        Complex::new(x, 0.0)
    }
    fn value(self) -> Complex {
        self
    }
    fn mul_f64(self, s: f64) -> Self {
        self * s
    }
    fn exp(self) -> Self {
        num_complex::Complex::exp(self)
    }
    fn cosh(self) -> Self {
        num_complex::Complex::cosh(self)
    }
    fn sinh(self) -> Self {
        num_complex::Complex::sinh(self)
    }
}

/// `val + der * eps` with `eps^2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualComplex {
    pub val: Complex,
    pub der: Complex,
}

impl DualComplex {
    pub fn constant(val: Complex) -> Self {
        DualComplex { val, der: Complex::new(0.0, 0.0) }
    }

    /// The differentiation variable: derivative 1.
    pub fn variable(val: Complex) -> Self {
        DualComplex { val, der: Complex::new(1.0, 0.0) }
    }
}

impl Add for DualComplex {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        DualComplex { val: self.val + rhs.val, der: self.der + rhs.der }
    }
}

impl Sub for DualComplex {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        DualComplex { val: self.val - rhs.val, der: self.der - rhs.der }
    }
}

impl Mul for DualComplex {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        DualComplex { val: self.val * rhs.val, der: self.val * rhs.der + self.der * rhs.val }
    }
}

impl Div for DualComplex {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let val = self.val / rhs.val;
        DualComplex { val, der: (self.der - val * rhs.der) / rhs.val }
    }
}

impl Neg for DualComplex {
    type Output = Self;
    fn neg(self) -> Self {
        DualComplex { val: -self.val, der: -self.der }
    }
}

impl Scalar for DualComplex {
    fn from_complex(c: Complex) -> Self {
        DualComplex::constant(c)
    }
    fn from_f64(x: f64) -> Self {
        DualComplex::constant(Complex::new(x, 0.0))
    }
    fn value(self) -> Complex {
        self.val
    }
    fn mul_f64(self, s: f64) -> Self {
        DualComplex { val: self.val * s, der: self.der * s }
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        DualComplex { val: e, der: e * self.der }
    }
    fn cosh(self) -> Self {
        DualComplex { val: self.val.cosh(), der: self.val.sinh() * self.der }
    }
    fn sinh(self) -> Self {
        DualComplex { val: self.val.sinh(), der: self.val.cosh() * self.der }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_rational_function() {
        // f(z) = (z^2 + 1) / z, f'(z) = 1 - 1/z^2
        let z = DualComplex::variable(Complex::new(1.5, -0.5));
        let f = (z * z + DualComplex::from_f64(1.0)) / z;
        let zc = z.val;
        let expected = Complex::new(1.0, 0.0) - 1.0 / (zc * zc);
        assert!((f.der - expected).norm() < 1e-14);
    }

    #[test]
    fn derivative_of_exp_cosh() {
        // f(z) = e^z cosh z, f' = e^z (cosh z + sinh z)
        let z = DualComplex::variable(Complex::new(0.3, 0.7));
        let f = z.exp() * z.cosh();
        let zc = z.val;
        let expected = zc.exp() * (zc.cosh() + zc.sinh());
        assert!((f.der - expected).norm() < 1e-14);
    }
}
