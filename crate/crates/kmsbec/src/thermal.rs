//! Thermal integrals of the linearized condensate: coincident-point
//! fluctuation expectations, critical charge density and temperature, the
//! free-field reference density, the massless thermal mass, the convexity
//! bound for a virtual mass, and imaginary-time two-point kernels.
//!
//! Every d³p integral is reduced to (1/2π²)∫p²(…)dp by isotropy.

use crate::error::{require, Error, Result};
use crate::model::{half_splitting, omega_sq_pm, MassSpectrum, ModelParams};
use crate::pauli::Mat2C;
use crate::quad::{adaptive_vec, integrate_radial, QuadResult, QuadratureConfig};
use crate::roots::brent;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const RADIAL: f64 = 1.0 / (2.0 * PI * PI);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalObservables {
    /// ⟨:|ψ|²:⟩ (E²).
    pub psi_sq: f64,
    /// ⟨j̃⟩ (E³).
    pub j_tilde: f64,
    /// Critical charge density j̃ + 2μ⟨:|ψ|²:⟩ (E³).
    pub rho_cr: f64,
    pub m_b1_sq: f64,
    pub m_b2_sq: f64,
    /// 2μφ² (E³).
    pub condensate_charge: f64,
    /// Summed quadrature error estimate.
    pub error: f64,
}

impl ThermalObservables {
    /// ρ_cr + 2μφ².
    pub fn total_charge(&self) -> f64 {
        self.rho_cr + self.condensate_charge
    }
}

/// x/(e^{βx} − 1), continuous at x = 0.
pub fn x_bose(x: f64, beta: f64) -> f64 {
    let y = beta * x;
    if y == 0.0 {
        1.0 / beta
    } else {
        x / y.exp_m1()
    }
}

/// x_bose(a) − x_bose(b) given the gap `a − b` separately, so that the
/// high-temperature regime (both βa, βb small) keeps full relative accuracy.
fn x_bose_difference(a: f64, b: f64, gap: f64, beta: f64) -> f64 {
    let (ya, yb) = (beta * a, beta * b);
    if ya == 0.0 || yb == 0.0 {
        return x_bose(a, beta) - x_bose(b, beta);
    }
    if ya.abs().max(yb.abs()) > 0.5 {
        // 1/(e^{ya} − 1) − 1/(e^{yb} − 1) with yb − ya = −β·gap kept explicit;
        // every factor stays finite for large arguments.
        let cross = (-ya).exp() * (beta * gap).exp_m1() / ((-ya).exp_m1() * (-yb).exp_m1());
        return gap / ya.exp_m1() - b * cross;
    }
    // y/(e^y − 1) = Σ Bₙyⁿ/n!, and yaⁿ − ybⁿ = (ya − yb)·Σⱼ ya^j yb^{n−1−j}.
    const COEFFS: [(i32, f64); 7] = [
        (1, -0.5),
        (2, 1.0 / 12.0),
        (4, -1.0 / 720.0),
        (6, 1.0 / 30240.0),
        (8, -1.0 / 1209600.0),
        (10, 1.0 / 47900160.0),
        (12, -691.0 / 1307674368000.0),
    ];
    let mut total = 0.0;
    for (n, c) in COEFFS {
        let h: f64 = (0..n).map(|j| ya.powi(j) * yb.powi(n - 1 - j)).sum();
        total += c * h;
    }
    // x_bose(x) = y/(e^y − 1)/β, and (ya − yb)/β = a − b.
    total * gap
}

/// 1/(e^{βx} − 1).
pub fn bose(x: f64, beta: f64) -> f64 {
    1.0 / (beta * x).exp_m1()
}

fn check_beta(beta: f64) -> Result<()> {
    require(beta > 0.0 && !beta.is_nan(), || format!("beta must be positive (got {beta})"))
}

/// Default momentum cutoff max(20/β, 10·max(M₁, μ)).
pub fn default_cutoff(ms: &MassSpectrum, mu: f64, beta: f64) -> f64 {
    (20.0 / beta).max(10.0 * ms.m1().max(mu.abs()))
}

/// Panel boundaries on [0, end]. A cutoff below 10T is extended
/// geometrically so that the semi-infinite tail starts in the Boltzmann regime.
fn radial_breaks(cutoff: f64, beta: f64, extra: &[f64]) -> Vec<f64> {
    let t = 1.0 / beta;
    let mut b = vec![0.0, cutoff];
    let mut end = cutoff;
    while end < 10.0 * t {
        end *= 10.0;
        b.push(end);
    }
    let cutoff = end;
    // Octaves of T so that no panel spans many Boltzmann decay lengths.
    let thermal = [0.01, 0.1, 0.3, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0].map(|k| k * t);
    for x in thermal.iter().chain(extra) {
        if *x > 0.0 && *x < cutoff {
            b.push(*x);
        }
    }
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

/// Branch weights of W(ψ₁²) and W(ψ₂²) on (ω₊, ω₋), each already divided by
/// δω². The ω₋ numerators are rewritten as 4μ²w²ᵢ/(…) to avoid cancellation.
fn branch_coefficients(ms: &MassSpectrum, mu: f64, p: f64) -> [f64; 4] {
    let mu2 = mu * mu;
    let dm = ms.dm_sq;
    if mu2 == 0.0 {
        let d = dm.abs();
        if d == 0.0 {
            return [1.0, 1.0, 1.0, 1.0];
        }
        return [(d + dm) / d, (d - dm) / d, (d - dm) / d, (d + dm) / d];
    }
    let d = half_splitting(ms, mu, p);
    let s1 = d + 2.0 * mu2 + dm;
    let s2 = d + 2.0 * mu2 - dm;
    [
        s1 / d,
        4.0 * mu2 * ms.w2_sq(p) / (d * s1),
        s2 / d,
        4.0 * mu2 * ms.w1_sq(p) / (d * s2),
    ]
}

/// p²/ω₋², finite at p = 0 on the gapless branch.
fn p_sq_over_minus(ms: &MassSpectrum, plus_sq: f64, p: f64) -> f64 {
    let w1 = ms.w1_sq(p);
    if w1 == 0.0 {
        return 1.0;
    }
    let ratio2 = if ms.m2_sq == 0.0 { 1.0 } else { p * p / ms.w2_sq(p) };
    plus_sq / w1 * ratio2
}

/// Integrand vector [W(ψ₁²), W(ψ₂²), ⟨:|ψ|²:⟩, ⟨j̃⟩] at momentum p, without 1/2π².
fn observable_integrand(ms: &MassSpectrum, mu: f64, beta: f64, p: f64) -> [f64; 4] {
    let (plus_sq, minus_sq) = match omega_sq_pm(ms, mu, p) {
        Ok(v) => v,
        Err(_) => return [f64::NAN; 4],
    };
    let (wp, wm) = (plus_sq.sqrt(), minus_sq.sqrt());
    let xp = x_bose(wp, beta);
    let xm = x_bose(wm, beta);
    let plus_term = if plus_sq > 0.0 { p * p * xp / plus_sq } else { 0.0 };
    let minus_term = xm * p_sq_over_minus(ms, plus_sq, p);
    let [c1p, c1m, c2p, c2m] = branch_coefficients(ms, mu, p);
    let w1 = 0.5 * (c1p * plus_term + c1m * minus_term);
    let w2 = 0.5 * (c2p * plus_term + c2m * minus_term);
    let jt = if mu == 0.0 {
        0.0
    } else {
        let d = half_splitting(ms, mu, p);
        let gap = 2.0 * d / (wp + wm);
        4.0 * mu * p * p * x_bose_difference(wm, wp, -gap, beta) / d
    };
    [w1, w2, w1 + w2, jt]
}

fn observable_integrals(ms: &MassSpectrum, mu: f64, beta: f64, quad: &QuadratureConfig) -> Result<QuadResult<4>> {
    check_beta(beta)?;
    quad.validate()?;
    if ms.m2_sq < 0.0 {
        return Err(Error::UnstableSpectrum { m2_sq: ms.m2_sq });
    }
    let cutoff = quad.p_cutoff.unwrap_or_else(|| default_cutoff(ms, mu, beta));
    let breaks = radial_breaks(cutoff, beta, &[ms.m1(), ms.m2(), mu.abs()]);
    let mut r = integrate_radial(|p| observable_integrand(ms, mu, beta, p), &breaks, 1.0 / beta, quad)?;
    for v in r.value.iter_mut() {
        *v *= RADIAL;
    }
    r.error *= RADIAL;
    if r.value.iter().any(|v| !v.is_finite()) {
        return Err(Error::QuadratureNonconvergence {
            value: r.value[0],
            error: f64::INFINITY,
            subdivisions: r.subdivisions,
        });
    }
    Ok(r)
}

/// Thermal masses (W(ψ₁²), W(ψ₂²)), the coincident limits of the
/// vacuum-subtracted diagonal two-point function.
pub fn thermal_masses(ms: &MassSpectrum, mu: f64, beta: f64, quad: &QuadratureConfig) -> Result<(f64, f64)> {
    let r = observable_integrals(ms, mu, beta, quad)?;
    Ok((r.value[0], r.value[1]))
}

pub fn thermal_expectations(
    ms: &MassSpectrum,
    mu: f64,
    beta: f64,
    quad: &QuadratureConfig,
) -> Result<ThermalObservables> {
    let r = observable_integrals(ms, mu, beta, quad)?;
    let [m_b1_sq, m_b2_sq, psi_sq, j_tilde] = r.value;
    Ok(ThermalObservables {
        psi_sq,
        j_tilde,
        rho_cr: j_tilde + 2.0 * mu * psi_sq,
        m_b1_sq,
        m_b2_sq,
        condensate_charge: 2.0 * mu * ms.phi * ms.phi,
        error: r.error,
    })
}

/// Critical charge density at inverse temperature β for the model's spectrum.
pub fn critical_density(params: &ModelParams, beta: f64, quad: &QuadratureConfig) -> Result<f64> {
    let ms = params.spectrum()?;
    Ok(thermal_expectations(&ms, params.mu, beta, quad)?.rho_cr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalTemperature {
    pub t_cr: f64,
    /// ρ_cr at the returned temperature.
    pub rho_at_root: f64,
    pub iterations: usize,
}

/// Solves ρ_cr(1/T) = `rho_target` for T.
///
/// The spectrum is taken from `params`; its `beta` field is ignored.
pub fn critical_temperature(
    params: &ModelParams,
    rho_target: f64,
    quad: &QuadratureConfig,
) -> Result<CriticalTemperature> {
    if !(rho_target > 0.0) || !rho_target.is_finite() {
        return Err(Error::BracketFailure(format!("rho_target must be positive (got {rho_target})")));
    }
    require(params.mu > 0.0, || "critical temperature needs mu > 0".into())?;
    let ms = params.spectrum()?;
    let mu = params.mu;
    let rho = |t: f64| -> Result<f64> { Ok(thermal_expectations(&ms, mu, 1.0 / t, quad)?.rho_cr - rho_target) };
    // High-temperature estimate ρ ≈ μT²/3.
    let t0 = (3.0 * rho_target / mu).sqrt();
    let (mut lo, mut hi) = (t0 / 100.0, t0 * 100.0);
    let mut f_lo = rho(lo)?;
    let mut f_hi = rho(hi)?;
    for _ in 0..3 {
        if f_lo < 0.0 {
            break;
        }
        lo /= 100.0;
        f_lo = rho(lo)?;
    }
    for _ in 0..3 {
        if f_hi > 0.0 {
            break;
        }
        hi *= 100.0;
        f_hi = rho(hi)?;
    }
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(Error::BracketFailure(format!(
            "rho_cr - target does not change sign on T in [{lo:e}, {hi:e}] ({f_lo:e}, {f_hi:e})"
        )));
    }
    let root = brent(rho, lo, hi, 0.0, 1e-12, 200)?;
    Ok(CriticalTemperature {
        t_cr: root.x,
        rho_at_root: root.f + rho_target,
        iterations: root.iterations,
    })
}

/// Sign of the chemical potential on the free-field phase boundary |μ| = m.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseBoundary {
    /// μ = +m
    Plus,
    /// μ = −m
    Minus,
}

impl PhaseBoundary {
    pub fn sign(self) -> f64 {
        match self {
            PhaseBoundary::Plus => 1.0,
            PhaseBoundary::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeDensity {
    /// Thermal (critical) part ρ_cr.
    pub rho_cr: f64,
    /// ±2m|c|².
    pub condensate: f64,
    pub total: f64,
}

/// Free complex field at |μ| = m: ρ_cr = ±(1/π²)∫p²(n(ε − m) − n(ε + m))dp
/// with ε = √(p² + m²), plus an optional condensate ±2m|c|².
pub fn free_critical_density(
    m: f64,
    boundary: PhaseBoundary,
    beta: f64,
    amplitude: Option<f64>,
    quad: &QuadratureConfig,
) -> Result<FreeDensity> {
    check_beta(beta)?;
    require(m > 0.0 && m.is_finite(), || format!("m must be positive (got {m})"))?;
    let integrand = |p: f64| {
        let e = (p * p + m * m).sqrt();
        // ε − m = p²/(ε + m); p²·n(ε − m) → (ε + m)/β at p = 0.
        let low = p * p / (e + m);
        let first = if p == 0.0 { (e + m) / beta } else { p * p * bose(low, beta) };
        [first - p * p * bose(e + m, beta)]
    };
    let cutoff = quad.p_cutoff.unwrap_or((20.0 / beta).max(10.0 * m));
    let breaks = radial_breaks(cutoff, beta, &[m]);
    let r = integrate_radial(integrand, &breaks, 1.0 / beta, quad)?;
    let rho_cr = boundary.sign() * r.value[0] / (PI * PI);
    let condensate = boundary.sign() * 2.0 * m * amplitude.map_or(0.0, |c| c * c);
    Ok(FreeDensity { rho_cr, condensate, total: rho_cr + condensate })
}

/// M_β² = λ(c_M M² + (1/2π²)∫p²/ω·n(ω)dp) with ω = √(p² + M²) and
/// c_M = log(Mξ)/8π². `xi = None` selects ξ = 1/M, so c_M = 0.
///
/// The limit M → 0 gives λT²/12.
pub fn massless_thermal_mass(
    lambda: f64,
    mass: f64,
    beta: f64,
    xi: Option<f64>,
    quad: &QuadratureConfig,
) -> Result<f64> {
    check_beta(beta)?;
    require(mass >= 0.0 && mass.is_finite(), || format!("M must be >= 0 (got {mass})"))?;
    if let Some(x) = xi {
        require(x > 0.0 && x.is_finite(), || format!("xi must be positive (got {x})"))?;
    }
    let log_term = match xi {
        Some(x) if mass > 0.0 => (mass * x).ln() / (8.0 * PI * PI) * mass * mass,
        _ => 0.0,
    };
    let m_sq = mass * mass;
    let integrand = |p: f64| {
        let w_sq = p * p + m_sq;
        if w_sq == 0.0 {
            return [1.0 / beta];
        }
        [p * p * x_bose(w_sq.sqrt(), beta) / w_sq]
    };
    let cutoff = quad.p_cutoff.unwrap_or((20.0 / beta).max(10.0 * mass));
    let breaks = radial_breaks(cutoff, beta, &[mass]);
    let r = integrate_radial(integrand, &breaks, 1.0 / beta, quad)?;
    Ok(lambda * (log_term + RADIAL * r.value[0]))
}

/// m_v² < λ(3m²_{β,1} + m²_{β,2}) and m_v² < λ(3m²_{β,2} + m²_{β,1}).
pub fn convexity_holds(m_v_sq: f64, lambda: f64, thermal_masses: (f64, f64)) -> bool {
    let (a, b) = thermal_masses;
    m_v_sq < lambda * (3.0 * a + b) && m_v_sq < lambda * (3.0 * b + a)
}

pub fn convexity_check(
    m_v_sq: f64,
    lambda: f64,
    ms: &MassSpectrum,
    mu: f64,
    beta: f64,
    quad: &QuadratureConfig,
) -> Result<bool> {
    Ok(convexity_holds(m_v_sq, lambda, thermal_masses(ms, mu, beta, quad)?))
}

/// Which part of the imaginary-time two-point function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelPart {
    /// Full thermal kernel; needs 0 < u < β.
    #[default]
    Full,
    /// Full kernel minus the vacuum kernel at the same u; allowed on [0, β).
    /// At u = 0, x = 0 its diagonal is (W(ψ₁²), W(ψ₂²)).
    VacuumSubtracted,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Pauli coefficients (I, σ₂, σ₃) of the momentum-space kernel at |p|.
fn kernel_integrand(ms: &MassSpectrum, mu: f64, beta: f64, u: f64, part: KernelPart, p: f64) -> [f64; 3] {
    let (plus_sq, minus_sq) = match omega_sq_pm(ms, mu, p) {
        Ok(v) => v,
        Err(_) => return [f64::NAN; 3],
    };
    let split = plus_sq - minus_sq;
    let w_sq = ms.w_sq(p);
    let mut out = [0.0; 3];
    for (branch, om_sq) in [(1.0, plus_sq), (-1.0, minus_sq)] {
        let om = om_sq.sqrt();
        let n = bose(om, beta);
        let (pos, neg) = match part {
            // Positive shells carry (1 + n)e^{−uω}, negative ones (1 + n)e^{−(β−u)ω}.
            KernelPart::Full => {
                let one_plus_n = -1.0 / (-beta * om).exp_m1();
                (one_plus_n * (-u * om).exp(), one_plus_n * (-(beta - u) * om).exp())
            }
            KernelPart::VacuumSubtracted => (n * (-u * om).exp(), n * (u * om).exp()),
        };
        let g = branch / (split * 2.0 * om);
        out[0] += g * (om_sq - w_sq) * (pos + neg);
        out[1] += g * 2.0 * mu * om * (pos - neg);
        out[2] += g * ms.dm_sq * (pos + neg);
    }
    out
}

/// Imaginary-time two-point kernel ⟨ψᵢ(−iu, x)ψⱼ(0, 0)⟩ for 0 ≤ u ≤ β.
///
/// Symmetry: kernel(β − u, x) = kernel(u, x)ᵀ. Requires M₂² > 0 and a
/// nondegenerate splitting.
pub fn kms_kernel_imag_time(
    u: f64,
    x: [f64; 3],
    ms: &MassSpectrum,
    mu: f64,
    beta: f64,
    part: KernelPart,
    quad: &QuadratureConfig,
) -> Result<Mat2C> {
    check_beta(beta)?;
    quad.validate()?;
    require((0.0..=beta).contains(&u), || format!("u = {u} outside [0, beta = {beta}]"))?;
    if ms.m2_sq <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "the kernel needs a gapped spectrum (M2^2 = {})",
            ms.m2_sq
        )));
    }
    require(mu != 0.0 || ms.dm_sq != 0.0, || "coincident branches: kernel shells degenerate".into())?;
    match part {
        KernelPart::Full => require(u > 0.0 && u < beta, || {
            format!("the full kernel diverges at u = {u}; use 0 < u < beta or the vacuum-subtracted part")
        })?,
        KernelPart::VacuumSubtracted => require(u < beta, || "vacuum-subtracted kernel needs u < beta".into())?,
    }
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    // Slowest exponential decay of the integrand in p.
    let decay = match part {
        KernelPart::Full => u.min(beta - u),
        KernelPart::VacuumSubtracted => beta - u,
    };
    let p_max = quad.p_cutoff.unwrap_or_else(|| {
        let m = ms.m1().max(mu.abs());
        (45.0 / decay).max(10.0 * m)
    });
    let mut breaks = radial_breaks(p_max, 1.0 / decay, &[ms.m2(), ms.m1()]);
    if r > 0.0 {
        let period = PI / r;
        let mut k = 1.0;
        while k * period < p_max {
            breaks.push(k * period);
            k += 1.0;
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
    }
    let f = |p: f64| {
        let c = kernel_integrand(ms, mu, beta, u, part, p);
        let s = p * p * sinc(p * r);
        [c[0] * s, c[1] * s, c[2] * s]
    };
    // Absolute tolerance tied to the non-oscillatory magnitude so that
    // exponentially small values at large |x| do not force impossible accuracy.
    let magnitude = adaptive_vec(
        |p| {
            let c = kernel_integrand(ms, mu, beta, u, part, p);
            [p * p * (c[0].abs() + c[1].abs() + c[2].abs())]
        },
        &radial_breaks(p_max, 1.0 / decay, &[ms.m2()]),
        1e-6,
        quad.atol,
        quad.max_subdivisions,
    )?
    .value[0];
    let atol = quad.atol.max(1e-15 * magnitude);
    let body = adaptive_vec(f, &breaks, quad.rtol, atol, quad.max_subdivisions.max(4 * breaks.len()))?;
    let v = body.value.map(|x| x * RADIAL);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::QuadratureNonconvergence { value: v[0], error: f64::INFINITY, subdivisions: body.subdivisions });
    }
    Ok(Mat2C::real(v[0], 0.0, v[1], v[2]))
}
