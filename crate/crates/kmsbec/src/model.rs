//! Model parameters, condensate background, fluctuation masses and the
//! two-branch dispersion relation.
//!
//! Natural units with a single energy unit E. Masses and momenta carry E,
//! squared masses E², `beta` carries 1/E, `lambda` is dimensionless.

use crate::error::{require, Error, Result};
use serde::{Deserialize, Serialize};

/// Physical inputs of the condensate model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Mass m (E).
    pub m: f64,
    /// Chemical potential μ (E).
    pub mu: f64,
    /// Quartic coupling λ.
    pub lambda: f64,
    /// Inverse temperature β (1/E).
    pub beta: f64,
    /// Virtual mass m_v (E); zero means no splitting.
    #[serde(default)]
    pub m_v: f64,
}

impl ModelParams {
    pub fn new(m: f64, mu: f64, lambda: f64, beta: f64) -> Result<Self> {
        Self::with_virtual_mass(m, mu, lambda, beta, 0.0)
    }

    pub fn with_virtual_mass(m: f64, mu: f64, lambda: f64, beta: f64, m_v: f64) -> Result<Self> {
        let p = ModelParams { m, mu, lambda, beta, m_v };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        require(self.m.is_finite() && self.m > 0.0, || format!("m must be positive (got {})", self.m))?;
        require(self.mu.is_finite(), || format!("mu must be finite (got {})", self.mu))?;
        require(self.lambda.is_finite() && self.lambda > 0.0, || {
            format!("lambda must be positive (got {})", self.lambda)
        })?;
        require(self.beta.is_finite() && self.beta > 0.0, || {
            format!("beta must be positive (got {})", self.beta)
        })?;
        require(self.m_v.is_finite(), || format!("m_v must be finite (got {})", self.m_v))?;
        Ok(())
    }

    /// Condensate amplitude and mass spectrum in one step.
    pub fn spectrum(&self) -> Result<MassSpectrum> {
        mass_spectrum(self, condensate_amplitude(self))
    }
}

/// Condensate amplitude and the fluctuation masses around it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassSpectrum {
    /// φ (E).
    pub phi: f64,
    /// M₁² (E²).
    pub m1_sq: f64,
    /// M₂² (E²).
    pub m2_sq: f64,
    /// M² = (M₁² + M₂²)/2.
    pub m_sq: f64,
    /// δM² = (M₁² − M₂²)/2.
    pub dm_sq: f64,
}

impl MassSpectrum {
    /// Builds a spectrum from the two squared masses directly.
    pub fn from_masses(phi: f64, m1_sq: f64, m2_sq: f64) -> Result<Self> {
        require(phi >= 0.0 && phi.is_finite(), || format!("phi must be >= 0 (got {phi})"))?;
        if m2_sq < 0.0 {
            return Err(Error::UnstableSpectrum { m2_sq });
        }
        require(m1_sq >= m2_sq && m1_sq.is_finite(), || {
            format!("need M1^2 >= M2^2 (got {m1_sq} < {m2_sq})")
        })?;
        Ok(MassSpectrum {
            phi,
            m1_sq,
            m2_sq,
            m_sq: 0.5 * (m1_sq + m2_sq),
            dm_sq: 0.5 * (m1_sq - m2_sq),
        })
    }

    pub fn m1(&self) -> f64 {
        self.m1_sq.sqrt()
    }

    pub fn m2(&self) -> f64 {
        self.m2_sq.sqrt()
    }

    /// True when the Goldstone branch is massless.
    pub fn is_gapless(&self) -> bool {
        self.m2_sq == 0.0
    }

    /// w² = |p|² + M².
    pub fn w_sq(&self, p: f64) -> f64 {
        p * p + self.m_sq
    }

    /// w₁² = |p|² + M₁².
    pub fn w1_sq(&self, p: f64) -> f64 {
        p * p + self.m1_sq
    }

    /// w₂² = |p|² + M₂².
    pub fn w2_sq(&self, p: f64) -> f64 {
        p * p + self.m2_sq
    }
}

/// Spatial momentum as a 3-vector (E).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Momentum3(pub [f64; 3]);

impl Momentum3 {
    pub fn along_x(p: f64) -> Self {
        Momentum3([p, 0.0, 0.0])
    }

    pub fn norm(&self) -> f64 {
        let [a, b, c] = self.0;
        (a * a + b * b + c * c).sqrt()
    }

    pub fn dot(&self, x: &[f64; 3]) -> f64 {
        self.0[0] * x[0] + self.0[1] * x[1] + self.0[2] * x[2]
    }
}

/// φ = √((μ² − m²)/λ) in the condensed phase, 0 otherwise.
pub fn condensate_amplitude(params: &ModelParams) -> f64 {
    let excess = params.mu * params.mu - params.m * params.m;
    if excess > 0.0 {
        (excess / params.lambda).sqrt()
    } else {
        0.0
    }
}

/// Fluctuation masses around a background of amplitude `phi`.
///
/// A residual |M₂²| at the level of rounding is flushed to zero so that the
/// on-shell condensate is exactly gapless.
pub fn mass_spectrum(params: &ModelParams, phi: f64) -> Result<MassSpectrum> {
    require(phi >= 0.0 && phi.is_finite(), || format!("phi must be >= 0 (got {phi})"))?;
    let base = params.m * params.m - params.mu * params.mu;
    let quartic = params.lambda * phi * phi;
    let mv_sq = if params.m_v > 0.0 { params.m_v * params.m_v } else { 0.0 };
    let m1_sq = base + 3.0 * quartic + mv_sq;
    let mut m2_sq = base + quartic + mv_sq;
    let scale = (params.m * params.m)
        .max(params.mu * params.mu)
        .max(quartic)
        .max(mv_sq);
    if m2_sq.abs() <= 64.0 * f64::EPSILON * scale {
        m2_sq = 0.0;
    }
    if m2_sq < 0.0 {
        return Err(Error::UnstableSpectrum { m2_sq });
    }
    MassSpectrum::from_masses(phi, m1_sq, m2_sq)
}

/// Squared branch frequencies (ω₊², ω₋²) at momentum magnitude `p`.
///
/// ω₋² is taken from the product ω₊²ω₋² = w₁²w₂² to avoid cancellation near
/// the gapless point.
pub fn omega_sq_pm(ms: &MassSpectrum, mu: f64, p: f64) -> Result<(f64, f64)> {
    if ms.m2_sq < 0.0 {
        return Err(Error::UnstableSpectrum { m2_sq: ms.m2_sq });
    }
    let w_sq = ms.w_sq(p);
    let mu_sq = mu * mu;
    let s = w_sq + 2.0 * mu_sq;
    let mut radicand = 4.0 * mu_sq * mu_sq + 4.0 * mu_sq * w_sq + ms.dm_sq * ms.dm_sq;
    let tolerance = 1e-10 * s * s;
    if !(radicand >= 0.0) {
        if radicand >= -tolerance {
            radicand = 0.0;
        } else {
            return Err(Error::NegativeRadicand { radicand, tolerance });
        }
    }
    let plus_sq = s + radicand.sqrt();
    let minus_sq = if plus_sq > 0.0 {
        ms.w1_sq(p) * ms.w2_sq(p) / plus_sq
    } else {
        0.0
    };
    Ok((plus_sq, minus_sq))
}

/// Branch frequencies (ω₊, ω₋), both nonnegative with ω₊ ≥ ω₋.
pub fn omega_pm(ms: &MassSpectrum, mu: f64, p: f64) -> Result<(f64, f64)> {
    let (a, b) = omega_sq_pm(ms, mu, p)?;
    Ok((a.sqrt(), b.sqrt()))
}

/// δω² = √(4μ⁴ + 4μ²w² + δM⁴) = (ω₊² − ω₋²)/2.
pub fn half_splitting(ms: &MassSpectrum, mu: f64, p: f64) -> f64 {
    let mu_sq = mu * mu;
    (4.0 * mu_sq * mu_sq + 4.0 * mu_sq * ms.w_sq(p) + ms.dm_sq * ms.dm_sq).sqrt()
}

/// Closed form c_s² = (μ² − m²)/(3μ² − m²) for the on-shell condensate.
pub fn sound_speed_closed_form(m: f64, mu: f64) -> f64 {
    let mu_sq = mu * mu;
    let m_sq = m * m;
    ((mu_sq - m_sq) / (3.0 * mu_sq - m_sq)).sqrt()
}

/// Small-momentum slope lim ω₋(p)/p of the gapless branch, by Richardson
/// extrapolation in p² on a halving grid.
pub fn sound_speed(ms: &MassSpectrum, mu: f64) -> Result<f64> {
    let scale = ms.m1_sq.max(mu * mu).max(f64::MIN_POSITIVE);
    if ms.m2_sq > 1e-12 * scale {
        return Err(Error::GappedSpectrum { m2_sq: ms.m2_sq });
    }
    const LEVELS: usize = 7;
    let p0 = 0.05 * scale.sqrt();
    let mut table = [[0.0f64; LEVELS]; LEVELS];
    for k in 0..LEVELS {
        let p = p0 / f64::powi(2.0, k as i32);
        let (_, minus) = omega_pm(ms, mu, p)?;
        table[k][0] = minus / p;
        let mut factor = 1.0;
        for j in 1..=k {
            factor *= 4.0;
            table[k][j] = (factor * table[k][j - 1] - table[k - 1][j - 1]) / (factor - 1.0);
        }
    }
    Ok(table[LEVELS - 1][LEVELS - 1])
}
