//! Hadamard coefficients U, V₀ and [V₁] of the linearized condensate
//! operator, the transport-equation residual, and the first-order mass
//! shift ΔΦ² built from the two-particle spectral density.
//!
//! Conventions: σ = ½η(x − y, x − y) with signature (−,+,+,+). The operator is
//! D = (−□ + M²)I + δM²σ₃ + 2iμσ₂∂₀, so on functions of x⁰ alone −□ acts as ∂₀².

use crate::error::{require, Error, Result};
use crate::model::MassSpectrum;
use crate::pauli::Mat2C;
use crate::quad::{adaptive_vec, integrate_to_infinity_vec, QuadratureConfig};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// U(0, x) = cos(μx⁰)I − iσ₂ sin(μx⁰), a rotation by μx⁰.
pub fn u_coeff(x0: f64, mu: f64) -> Mat2C {
    let (s, c) = (mu * x0).sin_cos();
    Mat2C::identity() * c + Mat2C::sigma2() * (-I * s)
}

/// sin(y)/y and (cos y − 1)/y, with Taylor panels for |y| < 1e−2.
fn rotation_kernels(y: f64) -> (f64, f64) {
    if y.abs() < 1e-2 {
        let y2 = y * y;
        let sinc = 1.0 - y2 / 6.0 + y2 * y2 / 120.0 - y2 * y2 * y2 / 5040.0;
        let cosc = y * (-0.5 + y2 / 24.0 - y2 * y2 / 720.0 + y2 * y2 * y2 / 40320.0);
        (sinc, cosc)
    } else {
        (y.sin() / y, (y.cos() - 1.0) / y)
    }
}

/// V₀(0, x) = −½U(x⁰)[(M² + μ²)I + δM²(sinc(2μx⁰)σ₃ + ((cos 2μx⁰ − 1)/2μx⁰)σ₁)].
pub fn v0_coeff(x0: f64, ms: &MassSpectrum, mu: f64) -> Mat2C {
    let (sinc, cosc) = rotation_kernels(2.0 * mu * x0);
    let inner = Mat2C::real(ms.m_sq + mu * mu, ms.dm_sq * cosc, 0.0, ms.dm_sq * sinc);
    u_coeff(x0, mu) * inner * (-0.5)
}

/// [V₁] = −⅛((M² + μ²)² + δM⁴)I − ¼(M² + μ²/3)δM²σ₃.
pub fn v1_coinciding(ms: &MassSpectrum, mu: f64) -> Mat2C {
    let mu2 = mu * mu;
    let a = ms.m_sq + mu2;
    Mat2C::real(
        -0.125 * (a * a + ms.dm_sq * ms.dm_sq),
        0.0,
        0.0,
        -0.25 * (ms.m_sq + mu2 / 3.0) * ms.dm_sq,
    )
}

/// The first few Hadamard coefficients for one spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HadamardCoeffs {
    pub spectrum: MassSpectrum,
    pub mu: f64,
    /// Length scale ξ in log(σ/ξ²).
    pub xi: f64,
}

impl HadamardCoeffs {
    pub fn new(spectrum: MassSpectrum, mu: f64, xi: f64) -> Result<Self> {
        require(xi > 0.0 && xi.is_finite(), || format!("xi must be positive (got {xi})"))?;
        Ok(HadamardCoeffs { spectrum, mu, xi })
    }

    pub fn u(&self, x0: f64) -> Mat2C {
        u_coeff(x0, self.mu)
    }

    pub fn v0(&self, x0: f64) -> Mat2C {
        v0_coeff(x0, &self.spectrum, self.mu)
    }

    pub fn v1_coinciding(&self) -> Mat2C {
        v1_coinciding(&self.spectrum, self.mu)
    }
}

/// Residual of 2x⁰∂₀U + 2iμx⁰σ₂U for an arbitrary candidate U, with a
/// central difference of step h. Returns the largest entry modulus.
pub fn transport_residual_of<F: Fn(f64) -> Mat2C>(u: F, x0: f64, mu: f64, h: f64) -> Result<f64> {
    require(h > 0.0 && h.is_finite(), || format!("step must be positive (got {h})"))?;
    let du = (u(x0 + h) - u(x0 - h)) * (1.0 / (2.0 * h));
    let r = du * (2.0 * x0) + Mat2C::sigma2() * u(x0) * (2.0 * I * mu * x0);
    Ok(r.max_abs())
}

/// First transport equation evaluated on [`u_coeff`].
pub fn transport_residual(x0: f64, mu: f64, h: f64) -> Result<f64> {
    transport_residual_of(|t| u_coeff(t, mu), x0, mu, h)
}

/// Observed convergence orders log₂(r(h)/r(h/2)) along a halving ladder.
pub fn observed_orders(residuals: &[f64]) -> Vec<f64> {
    residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// ρ₂(M²) = (1/16π²)√(1 − 4m²/M²) above the two-particle threshold.
pub fn rho2_spectral(m_sq_probe: f64, m: f64) -> Result<f64> {
    require(m >= 0.0 && m.is_finite(), || format!("m must be >= 0 (got {m})"))?;
    let threshold = 4.0 * m * m;
    require(m_sq_probe >= threshold && m_sq_probe > 0.0, || {
        format!("M^2 = {m_sq_probe} lies below the threshold 4m^2 = {threshold}")
    })?;
    Ok((1.0 - threshold / m_sq_probe).max(0.0).sqrt() / (16.0 * PI * PI))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaPhi2 {
    pub value: Complex64,
    /// True when p² lies on the cut, so a principal value and an imaginary
    /// part −iπρ₂(p²)/(p² + a) were taken.
    pub crossed_cut: bool,
}

/// δm²·(−p²)∫_{4m²}^∞ dM² ρ₂(M²)/(M² + a) · 1/(−p² + M² + iε).
///
/// The integral is taken in u with M² = 4m² + u², which removes the
/// threshold square root. On the cut the pole is handled by a symmetric
/// subtraction window around it.
pub fn delta_phi2_first_order(
    p_sq: f64,
    m: f64,
    delta_m_sq: f64,
    a: f64,
    quad: &QuadratureConfig,
) -> Result<DeltaPhi2> {
    quad.validate()?;
    require(m >= 0.0 && m.is_finite(), || format!("m must be >= 0 (got {m})"))?;
    require(a >= 0.0 && a.is_finite(), || format!("a must be >= 0 (got {a})"))?;
    require(p_sq.is_finite() && delta_m_sq.is_finite(), || "p^2 and delta m^2 must be finite".into())?;
    let threshold = 4.0 * m * m;
    if p_sq == 0.0 {
        return Ok(DeltaPhi2 { value: Complex64::from(0.0), crossed_cut: false });
    }
    if threshold == 0.0 && a == 0.0 {
        return Err(Error::InvalidParameter(
            "m = 0 with a = 0: the spectral integral diverges at M^2 = 0".into(),
        ));
    }
    let norm = 1.0 / (16.0 * PI * PI);
    // ρ₂(M²)/(M² + a)·2u with M² = 4m² + u².
    let weight = |u: f64| {
        let big = threshold + u * u;
        norm * u / big.sqrt() / (big + a) * 2.0 * u
    };
    let scale = p_sq.abs().max(threshold).max(a).max(f64::MIN_POSITIVE).sqrt();
    let prefactor = delta_m_sq * (-p_sq);
    if p_sq <= threshold {
        let gap = threshold - p_sq;
        let f = |u: f64| [weight(u) / (u * u + gap)];
        let body = adaptive_vec(f, &[0.0, scale], quad.rtol, quad.atol, quad.max_subdivisions)?;
        let tail = integrate_to_infinity_vec(f, scale, scale, quad.rtol, quad.atol, quad.max_subdivisions)?;
        return Ok(DeltaPhi2 {
            value: Complex64::from(prefactor * (body.value[0] + tail.value[0])),
            crossed_cut: false,
        });
    }
    // Pole at u₀ = √(p² − 4m²): 1/(u² − u₀²) = 1/((u − u₀)(u + u₀)).
    let u0 = (p_sq - threshold).sqrt();
    let smooth = |u: f64| weight(u) / (u + u0);
    let at_pole = smooth(u0);
    let sub = |u: f64| [(smooth(u) - at_pole) / (u - u0)];
    let window = adaptive_vec(sub, &[0.0, 0.5 * u0, u0, 1.5 * u0, 2.0 * u0], quad.rtol, quad.atol, quad.max_subdivisions)?;
    let beyond = integrate_to_infinity_vec(
        |u| [smooth(u) / (u - u0)],
        2.0 * u0,
        scale,
        quad.rtol,
        quad.atol,
        quad.max_subdivisions,
    )?;
    let principal = window.value[0] + beyond.value[0];
    // −iπδ(M² − p²) contributes −iπρ₂(p²)/(p² + a).
    let imaginary = -PI * rho2_spectral(p_sq, m)? / (p_sq + a);
    Ok(DeltaPhi2 {
        value: Complex64::new(principal, imaginary) * prefactor,
        crossed_cut: true,
    })
}
