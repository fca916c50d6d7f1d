//! Momentum-space kinetic matrices, the four propagators, and the thermal
//! shell weights of the two-point function.
//!
//! Fourier convention: e^{ipx} with p·x = −p₀x⁰ + p·x, signature (−,+,+,+).
//! In this convention the plane wave v·e^{i(p·x − p₀t)} solves the linearized
//! field equations iff D̂(p₀, p)v = 0, with
//! D̂ = −(w² − p₀²)I − δM²σ₃ − 2μp₀σ₂ and D̄̂ the same with σ₃, σ₂ signs flipped.

pub use crate::pauli::Mat2C;

use crate::error::{Error, Result};
use crate::model::{omega_sq_pm, MassSpectrum};
use crate::quad::adaptive_vec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Sign label used for frequency (σ) and branch (σ′) indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropagatorKind {
    Retarded,
    Advanced,
    Feynman,
    Commutator,
}

/// D̂ (`conjugate = false`) or D̄̂ (`conjugate = true`) at complex frequency p₀.
pub fn kinetic_matrix(p0: Complex64, p: f64, ms: &MassSpectrum, mu: f64, conjugate: bool) -> Mat2C {
    let diag = -(Complex64::from(ms.w_sq(p)) - p0 * p0);
    let s = if conjugate { 1.0 } else { -1.0 };
    Mat2C::new(
        diag,
        Complex64::from(0.0),
        p0 * (2.0 * mu * s),
        Complex64::from(ms.dm_sq * s),
    )
}

/// Real-frequency shortcut for [`kinetic_matrix`].
pub fn kinetic_matrix_re(p0: f64, p: f64, ms: &MassSpectrum, mu: f64, conjugate: bool) -> Mat2C {
    kinetic_matrix(Complex64::from(p0), p, ms, mu, conjugate)
}

/// Scalar (p₀² − ω₊²)(p₀² − ω₋²), the determinant-free form of D̂D̄̂.
pub fn quartic(p0: Complex64, p: f64, ms: &MassSpectrum, mu: f64) -> Result<Complex64> {
    let (a, b) = omega_sq_pm(ms, mu, p)?;
    let z = p0 * p0;
    Ok((z - a) * (z - b))
}

/// Default regulator: 1e−6 times the characteristic energy √(M₁² + μ²).
pub fn default_epsilon(ms: &MassSpectrum, mu: f64) -> f64 {
    1e-6 * (ms.m1_sq + mu * mu).sqrt().max(f64::MIN_POSITIVE)
}

/// One delta shell: weight · δ(p₀ − `p0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub p0: f64,
    pub weight: Mat2C,
}

/// A distribution in p₀ represented as a finite sum of delta shells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellSet {
    pub shells: Vec<Shell>,
}

impl ShellSet {
    /// ∫ dp₀ g(p₀) · (this distribution).
    pub fn smear<G: Fn(f64) -> f64>(&self, g: G) -> Mat2C {
        self.shells
            .iter()
            .fold(Mat2C::zero(), |acc, s| acc + s.weight * g(s.p0))
    }
}

/// Either a regular matrix value or a delta-shell distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PropagatorValue {
    Matrix(Mat2C),
    Shells(ShellSet),
}

impl PropagatorValue {
    pub fn matrix(&self) -> Option<&Mat2C> {
        match self {
            PropagatorValue::Matrix(m) => Some(m),
            PropagatorValue::Shells(_) => None,
        }
    }

    pub fn shells(&self) -> Option<&ShellSet> {
        match self {
            PropagatorValue::Shells(s) => Some(s),
            PropagatorValue::Matrix(_) => None,
        }
    }
}

/// Propagator of the given kind at real frequency p₀.
///
/// Retarded, advanced and Feynman values refuse to evaluate within ε/2 of a
/// shell; the commutator is returned as its four delta shells.
pub fn propagator_matrix(
    kind: PropagatorKind,
    p0: f64,
    p: f64,
    ms: &MassSpectrum,
    mu: f64,
    epsilon: f64,
) -> Result<PropagatorValue> {
    if kind == PropagatorKind::Commutator {
        return commutator_shells(p, ms, mu).map(PropagatorValue::Shells);
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive (got {epsilon})")));
    }
    let (a, b) = omega_sq_pm(ms, mu, p)?;
    let guard = 0.5 * epsilon;
    for pole in [a.sqrt(), b.sqrt()] {
        for s in [pole, -pole] {
            if (p0 - s).abs() < guard {
                return Err(Error::NearPole { p0, pole: s, guard });
            }
        }
    }
    propagator_unguarded(kind, p0, p, ms, mu, epsilon).map(PropagatorValue::Matrix)
}

/// Regulated propagator without the pole guard, for smearing integrals.
pub fn propagator_unguarded(
    kind: PropagatorKind,
    p0: f64,
    p: f64,
    ms: &MassSpectrum,
    mu: f64,
    epsilon: f64,
) -> Result<Mat2C> {
    let (a, b) = omega_sq_pm(ms, mu, p)?;
    let split = a - b;
    let dbar = kinetic_matrix_re(p0, p, ms, mu, true);
    let i = Complex64::new(0.0, 1.0);
    let (z, prefactor) = match kind {
        PropagatorKind::Retarded => {
            let w = Complex64::new(p0, epsilon);
            (w * w, Complex64::from(1.0))
        }
        PropagatorKind::Advanced => {
            let w = Complex64::new(p0, -epsilon);
            (w * w, Complex64::from(1.0))
        }
        PropagatorKind::Feynman => (Complex64::new(p0 * p0, epsilon), i),
        PropagatorKind::Commutator => {
            return Err(Error::InvalidParameter(
                "the commutator is a distribution; use commutator_shells".into(),
            ))
        }
    };
    let scalar = if split > 0.0 {
        (1.0 / (z - a) - 1.0 / (z - b)) / split
    } else {
        // Coincident branches: the divided difference becomes 1/(z − a)².
        1.0 / ((z - a) * (z - a))
    };
    Ok(dbar * (scalar * prefactor))
}

/// 2πi·D̄̂/(ω₊² − ω₋²)·ε(p₀)(δ(p₀² − ω₊²) − δ(p₀² − ω₋²)) as four shells.
pub fn commutator_shells(p: f64, ms: &MassSpectrum, mu: f64) -> Result<ShellSet> {
    let (a, b) = omega_sq_pm(ms, mu, p)?;
    let split = a - b;
    if !(split > 0.0) {
        return Err(Error::InvalidParameter(
            "coincident branches: the commutator shells are degenerate".into(),
        ));
    }
    if b == 0.0 {
        return Err(Error::InfraredShell { p });
    }
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    let mut shells = Vec::with_capacity(4);
    for (branch, omega_sq) in [(Sign::Plus, a), (Sign::Minus, b)] {
        let omega = omega_sq.sqrt();
        for sigma in Sign::BOTH {
            let p0 = sigma.value() * omega;
            let coeff = sigma.value() * branch.value() / (split * 2.0 * omega);
            let weight = kinetic_matrix_re(p0, p, ms, mu, true) * (two_pi_i * coeff);
            shells.push(Shell { p0, weight });
        }
    }
    Ok(ShellSet { shells })
}

/// ∫ dp₀ g(p₀) Δ̂(p₀, p) for a Gaussian g of given center and width.
pub fn smear_propagator_gaussian(
    kind: PropagatorKind,
    p: f64,
    ms: &MassSpectrum,
    mu: f64,
    epsilon: f64,
    center: f64,
    width: f64,
) -> Result<Mat2C> {
    let g = |x: f64| (-(x - center).powi(2) / (2.0 * width * width)).exp() / (width * (2.0 * PI).sqrt());
    if kind == PropagatorKind::Commutator {
        return Ok(commutator_shells(p, ms, mu)?.smear(g));
    }
    let (a, b) = omega_sq_pm(ms, mu, p)?;
    let mut breaks = vec![center - 12.0 * width, center + 12.0 * width];
    for pole in [a.sqrt(), b.sqrt()] {
        for s in [pole, -pole] {
            if s > breaks[0] && s < breaks[1] {
                breaks.push(s);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    let r = adaptive_vec(
        |x| {
            let m = propagator_unguarded(kind, x, p, ms, mu, epsilon).unwrap_or_else(|_| Mat2C::zero());
            let gv = g(x);
            let mut out = [0.0; 8];
            for k in 0..4 {
                out[2 * k] = m.c[k].re * gv;
                out[2 * k + 1] = m.c[k].im * gv;
            }
            out
        },
        &breaks,
        1e-10,
        1e-13,
        20_000,
    )?;
    let v = r.value;
    Ok(Mat2C::new(
        Complex64::new(v[0], v[1]),
        Complex64::new(v[2], v[3]),
        Complex64::new(v[4], v[5]),
        Complex64::new(v[6], v[7]),
    ))
}

/// Bose factor 1/(1 − e^{−βp₀}).
pub fn bose_kms(p0: f64, beta: f64) -> f64 {
    -1.0 / (-beta * p0).exp_m1()
}

/// One of the four λ_{σσ′} shell weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellWeight {
    /// Frequency sign σ.
    pub sigma: Sign,
    /// Branch σ′.
    pub branch: Sign,
    /// Shell frequency ω_{σ′}(p) (E).
    pub omega: f64,
    /// Shell location p₀ = σω_{σ′}.
    pub p0: f64,
    /// Bose factor 1/(1 − e^{−βp₀}).
    pub bose: f64,
    /// Scalar coefficient (σ1)(σ′1)/((ω₊² − ω₋²)·2ω_{σ′})·bose.
    pub lambda: f64,
    /// Matrix weight λ_{σσ′}·(−D̄̂(σω_{σ′}, p)).
    pub matrix: Mat2C,
}

/// The four shell weights λ₊₊, λ₊₋, λ₋₊, λ₋₋ (in that order).
///
/// The matrix factor follows the cluster-expansion listing, −D̄̂. The
/// positive-definite thermal two-point function carries the opposite overall
/// sign: ω(ψ_i ψ_j)^(p) = 2π Σ δ(p₀ − σω_{σ′})·(−matrix), which is what
/// reproduces the positive coincident-point integrals of the thermal module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralWeights {
    pub entries: [ShellWeight; 4],
}

impl SpectralWeights {
    pub fn get(&self, sigma: Sign, branch: Sign) -> &ShellWeight {
        let idx = match (sigma, branch) {
            (Sign::Plus, Sign::Plus) => 0,
            (Sign::Plus, Sign::Minus) => 1,
            (Sign::Minus, Sign::Plus) => 2,
            (Sign::Minus, Sign::Minus) => 3,
        };
        &self.entries[idx]
    }

    /// λ_σ(−D̄̂) summed over both branches, as a shell set in p₀.
    pub fn frequency_part(&self, sigma: Sign) -> ShellSet {
        ShellSet {
            shells: Sign::BOTH
                .iter()
                .map(|&b| {
                    let w = self.get(sigma, b);
                    Shell { p0: w.p0, weight: w.matrix }
                })
                .collect(),
        }
    }
}

pub fn spectral_weights(p: f64, ms: &MassSpectrum, mu: f64, beta: f64) -> Result<SpectralWeights> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive (got {beta})")));
    }
    let (a, b) = omega_sq_pm(ms, mu, p)?;
    if b == 0.0 {
        return Err(Error::InfraredShell { p });
    }
    let split = a - b;
    if !(split > 0.0) {
        return Err(Error::InvalidParameter(
            "coincident branches: shell weights are degenerate".into(),
        ));
    }
    let build = |sigma: Sign, branch: Sign| {
        let omega = if branch == Sign::Plus { a.sqrt() } else { b.sqrt() };
        let p0 = sigma.value() * omega;
        let bose = bose_kms(p0, beta);
        let lambda = sigma.value() * branch.value() / (split * 2.0 * omega) * bose;
        let matrix = -kinetic_matrix_re(p0, p, ms, mu, true) * lambda;
        ShellWeight { sigma, branch, omega, p0, bose, lambda, matrix }
    };
    Ok(SpectralWeights {
        entries: [
            build(Sign::Plus, Sign::Plus),
            build(Sign::Plus, Sign::Minus),
            build(Sign::Minus, Sign::Plus),
            build(Sign::Minus, Sign::Minus),
        ],
    })
}
