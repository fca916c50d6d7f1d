//! Complex 2×2 matrices stored in the Pauli basis c_I·I + c₁σ₁ + c₂σ₂ + c₃σ₃.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2C {
    /// Coefficients of (I, σ₁, σ₂, σ₃).
    pub c: [Complex64; 4],
}

impl Mat2C {
    pub const fn new(c0: Complex64, c1: Complex64, c2: Complex64, c3: Complex64) -> Self {
        Mat2C { c: [c0, c1, c2, c3] }
    }

    pub fn real(c0: f64, c1: f64, c2: f64, c3: f64) -> Self {
        Mat2C::new(c0.into(), c1.into(), c2.into(), c3.into())
    }

    pub fn zero() -> Self {
        Mat2C { c: [ZERO; 4] }
    }

    pub fn identity() -> Self {
        Mat2C::real(1.0, 0.0, 0.0, 0.0)
    }

    pub fn sigma1() -> Self {
        Mat2C::real(0.0, 1.0, 0.0, 0.0)
    }

    pub fn sigma2() -> Self {
        Mat2C::real(0.0, 0.0, 1.0, 0.0)
    }

    pub fn sigma3() -> Self {
        Mat2C::real(0.0, 0.0, 0.0, 1.0)
    }

    pub fn scalar(z: Complex64) -> Self {
        Mat2C::new(z, ZERO, ZERO, ZERO)
    }

    /// Explicit entries [[a, b], [c, d]].
    pub fn entries(&self) -> [[Complex64; 2]; 2] {
        let [c0, c1, c2, c3] = self.c;
        [[c0 + c3, c1 - I * c2], [c1 + I * c2, c0 - c3]]
    }

    pub fn from_entries(e: [[Complex64; 2]; 2]) -> Self {
        let c0 = (e[0][0] + e[1][1]) * 0.5;
        let c3 = (e[0][0] - e[1][1]) * 0.5;
        let c1 = (e[0][1] + e[1][0]) * 0.5;
        let c2 = I * (e[0][1] - e[1][0]) * 0.5;
        Mat2C::new(c0, c1, c2, c3)
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries()[row][col]
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Mat2C { c: self.c.map(|x| x * s) }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        Mat2C { c: self.c.map(|x| x * s) }
    }

    pub fn det(&self) -> Complex64 {
        let [c0, c1, c2, c3] = self.c;
        c0 * c0 - c1 * c1 - c2 * c2 - c3 * c3
    }

    pub fn trace(&self) -> Complex64 {
        self.c[0] * 2.0
    }

    /// Inverse, or `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == ZERO {
            return None;
        }
        let [c0, c1, c2, c3] = self.c;
        Some(Mat2C::new(c0 / d, -c1 / d, -c2 / d, -c3 / d))
    }

    /// Transpose: σ₂ is the only antisymmetric basis element.
    pub fn transpose(&self) -> Self {
        let [c0, c1, c2, c3] = self.c;
        Mat2C::new(c0, c1, -c2, c3)
    }

    /// Conjugate transpose: the basis is Hermitian, so coefficients conjugate.
    pub fn adjoint(&self) -> Self {
        Mat2C { c: self.c.map(|x| x.conj()) }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.entries()
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.entries()
            .iter()
            .flatten()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        let e = self.entries();
        [e[0][0] * v[0] + e[0][1] * v[1], e[1][0] * v[0] + e[1][1] * v[1]]
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (*self - self.adjoint()).max_abs() <= tol
    }
}

impl Add for Mat2C {
    type Output = Mat2C;
    fn add(self, o: Mat2C) -> Mat2C {
        Mat2C {
            c: [self.c[0] + o.c[0], self.c[1] + o.c[1], self.c[2] + o.c[2], self.c[3] + o.c[3]],
        }
    }
}

impl Sub for Mat2C {
    type Output = Mat2C;
    fn sub(self, o: Mat2C) -> Mat2C {
        self + (-o)
    }
}

impl Neg for Mat2C {
    type Output = Mat2C;
    fn neg(self) -> Mat2C {
        Mat2C { c: self.c.map(|x| -x) }
    }
}

impl Mul for Mat2C {
    type Output = Mat2C;
    // (a₀ + a·σ)(b₀ + b·σ) = a₀b₀ + a·b + (a₀b + b₀a + i a×b)·σ
    fn mul(self, o: Mat2C) -> Mat2C {
        let [a0, a1, a2, a3] = self.c;
        let [b0, b1, b2, b3] = o.c;
        Mat2C::new(
            a0 * b0 + a1 * b1 + a2 * b2 + a3 * b3,
            a0 * b1 + b0 * a1 + I * (a2 * b3 - a3 * b2),
            a0 * b2 + b0 * a2 + I * (a3 * b1 - a1 * b3),
            a0 * b3 + b0 * a3 + I * (a1 * b2 - a2 * b1),
        )
    }
}

impl Mul<Complex64> for Mat2C {
    type Output = Mat2C;
    fn mul(self, s: Complex64) -> Mat2C {
        self.scale(s)
    }
}

impl Mul<f64> for Mat2C {
    type Output = Mat2C;
    fn mul(self, s: f64) -> Mat2C {
        self.scale_re(s)
    }
}
