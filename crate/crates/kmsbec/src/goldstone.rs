//! Goldstone-theorem diagnostics: plane-wave solutions of the linearized
//! fluctuation equations, the divergence of the U(1) current at linear and
//! full order, regularized charge commutators and their smeared spectral
//! limit.
//!
//! Fields are normalized as ϕ = φ + ψ₁ + iψ₂ with Lagrangian |∂ϕ|², so
//! [ψ̇_a(x), ψ_b(y)] = −(i/2)δ_ab δ³(x − y) at equal times. Commutator
//! expectations are reported divided by i, which makes them real.
//!
//! The master Ward identity itself is not evaluated; its numerical shadow is
//! that the full-order divergence vanishes on the on-shell condensate.

use crate::error::{require, Error, Result};
use crate::model::{half_splitting, omega_pm, omega_sq_pm, MassSpectrum, Momentum3};
use crate::propagators::{kinetic_matrix_re, Sign};
use crate::quad::{adaptive_vec, gauss_legendre, QuadratureConfig};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Solution ψ = Re[v e^{i(p·x − ωt)}] of the linearized equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneWaveMode {
    pub branch: Sign,
    pub p: Momentum3,
    pub omega: f64,
    /// Null vector of D̂(ω, p), unit norm, first nonzero component real positive.
    pub amplitude: [Complex64; 2],
}

fn normalize(v: [Complex64; 2]) -> [Complex64; 2] {
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let lead = if v[0].norm() > 1e-14 * n { v[0] } else { v[1] };
    let phase = lead.conj() / lead.norm();
    [v[0] * phase / n, v[1] * phase / n]
}

/// Plane-wave mode of the requested branch at momentum `p`.
pub fn plane_wave_mode(branch: Sign, p: Momentum3, ms: &MassSpectrum, mu: f64) -> Result<PlaneWaveMode> {
    let k = p.norm();
    let (wp, wm) = omega_pm(ms, mu, k)?;
    let omega = match branch {
        Sign::Plus => wp,
        Sign::Minus => wm,
    };
    let d = kinetic_matrix_re(omega, k, ms, mu, false);
    let e = d.entries();
    let scale = d.max_abs();
    let r0 = e[0][0].norm() + e[0][1].norm();
    let r1 = e[1][0].norm() + e[1][1].norm();
    let amplitude = if r0.max(r1) <= 1e-13 * (ms.m1_sq.abs() + k * k + mu * mu).max(f64::MIN_POSITIVE) {
        // Two-dimensional null space: only when the branches decouple and coincide.
        if mu != 0.0 {
            return Err(Error::Invariant("degenerate eigenspace at a coincident branch point".into()));
        }
        match branch {
            Sign::Plus => [Complex64::from(1.0), Complex64::from(0.0)],
            Sign::Minus => [Complex64::from(0.0), Complex64::from(1.0)],
        }
    } else if r0 >= r1 {
        normalize([-e[0][1], e[0][0]])
    } else {
        normalize([e[1][1], -e[1][0]])
    };
    let r = d.apply(amplitude);
    let residual = (r[0].norm_sqr() + r[1].norm_sqr()).sqrt();
    if residual > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Invariant(format!("mode residual {residual} exceeds bound for ‖D̂‖ = {scale}")));
    }
    Ok(PlaneWaveMode { branch, p, omega, amplitude })
}

/// Field values and derivatives at one spacetime point; □ = −∂_t² + ∇².
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldSample {
    pub psi: [f64; 2],
    pub dt: [f64; 2],
    pub box_: [f64; 2],
}

/// Superposition Σ Re[c·v e^{i(p·x − ωt)}] of plane-wave modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfiguration {
    pub modes: Vec<(PlaneWaveMode, Complex64)>,
}

impl FieldConfiguration {
    /// Derivatives are taken mode by mode in Fourier space.
    pub fn sample(&self, t: f64, x: [f64; 3]) -> FieldSample {
        let mut s = FieldSample::default();
        for (mode, c) in &self.modes {
            let theta = mode.p.dot(&x) - mode.omega * t;
            let phase = *c * Complex64::from_polar(1.0, theta);
            let p_sq = mode.p.0.iter().map(|v| v * v).sum::<f64>();
            let box_factor = mode.omega * mode.omega - p_sq;
            for a in 0..2 {
                let z = phase * mode.amplitude[a];
                s.psi[a] += z.re;
                s.dt[a] += (z * Complex64::new(0.0, -mode.omega)).re;
                s.box_[a] += z.re * box_factor;
            }
        }
        s
    }
}

/// Residuals of (□ − M₁²)ψ₁ − 2μψ̇₂ and (□ − M₂²)ψ₂ + 2μψ̇₁.
pub fn linearized_residual(s: &FieldSample, ms: &MassSpectrum, mu: f64) -> [f64; 2] {
    [
        s.box_[0] - ms.m1_sq * s.psi[0] - 2.0 * mu * s.dt[1],
        s.box_[1] - ms.m2_sq * s.psi[1] + 2.0 * mu * s.dt[0],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DivergenceOrder {
    /// Equations of motion of the quadratic Lagrangian.
    Linearized,
    /// Cubic and quartic interaction terms included.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSample {
    pub t: f64,
    pub x: [f64; 3],
    /// ∂_μJ^μ evaluated from the fields.
    pub divergence: f64,
    /// Closed-form breaking term.
    pub closed_form: f64,
    /// Sum of the magnitudes of the terms in the divergence.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub order: DivergenceOrder,
    pub samples: Vec<DivergenceSample>,
    /// max |divergence − closed_form| / scale.
    pub max_relative_residual: f64,
}

/// Evaluates ∂_μJ^μ = −2 Im(χ̄□χ) − 4μ Re(χ̄χ̇), χ = φ + ψ₁ + iψ₂, with □χ from
/// the equations of motion of the requested order, and compares it with
///
///   linearized: 2ψ₁ψ₂(M₁² − M₂²) − 2φM₂²ψ₂
///   full:       2ψ₁ψ₂(M₁² − M₂² − 2λφ²) − 2φM₂²ψ₂.
///
/// The configuration must solve the linearized equations; at full order the
/// interaction terms are added to its □ψ.
pub fn divergence_residual(
    config: &FieldConfiguration,
    ms: &MassSpectrum,
    mu: f64,
    lambda: f64,
    phi: f64,
    order: DivergenceOrder,
    points: &[(f64, [f64; 3])],
) -> DivergenceReport {
    let samples: Vec<DivergenceSample> = points
        .iter()
        .map(|&(t, x)| {
            let s = config.sample(t, x);
            let [p1, p2] = s.psi;
            let mut box_ = s.box_;
            if order == DivergenceOrder::Full {
                let sq = p1 * p1 + p2 * p2;
                box_[0] += lambda * (phi * (3.0 * p1 * p1 + p2 * p2) + p1 * sq);
                box_[1] += lambda * (2.0 * phi * p1 + sq) * p2;
            }
            let chi = Complex64::new(phi + p1, p2);
            let chi_box = chi.conj() * Complex64::new(box_[0], box_[1]);
            let chi_dt = chi.conj() * Complex64::new(s.dt[0], s.dt[1]);
            let divergence = -2.0 * chi_box.im - 4.0 * mu * chi_dt.re;
            let coupling = match order {
                DivergenceOrder::Linearized => ms.m1_sq - ms.m2_sq,
                DivergenceOrder::Full => ms.m1_sq - ms.m2_sq - 2.0 * lambda * phi * phi,
            };
            let closed_form = 2.0 * p1 * p2 * coupling - 2.0 * phi * ms.m2_sq * p2;
            let scale = 2.0 * ((phi + p1).abs() * box_[1].abs() + p2.abs() * box_[0].abs())
                + 4.0 * mu.abs() * ((phi + p1).abs() * s.dt[0].abs() + p2.abs() * s.dt[1].abs());
            DivergenceSample { t, x, divergence, closed_form, scale }
        })
        .collect();
    let max_relative_residual = samples
        .iter()
        .map(|s| (s.divergence - s.closed_form).abs() / s.scale.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    DivergenceReport { order, samples, max_relative_residual }
}

/// Fourier transform f̂(s) = ∫ f(t) e^{ist} dt of the time smearing; all
/// windows are even in s, and f̂(0) = ∫f.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FrequencyWindow {
    /// Six-fold convolution of a box: supp f = [−ε, ε], f̂ = sinc(sε/6)⁶.
    CompactBump { eps: f64 },
    /// Gaussian f̂ = exp(−s²/(2w²)).
    Gaussian { width: f64 },
    /// f̂ = (s/w)² exp(−s²/(2w²)), vanishing at zero frequency.
    GaussianNotch { width: f64 },
}

impl FrequencyWindow {
    pub fn hat(&self, s: f64) -> f64 {
        match *self {
            FrequencyWindow::CompactBump { eps } => {
                let x = s * eps / 6.0;
                let sinc = if x.abs() < 1e-4 { 1.0 - x * x / 6.0 } else { x.sin() / x };
                sinc.powi(6)
            }
            FrequencyWindow::Gaussian { width } => (-0.5 * (s / width).powi(2)).exp(),
            FrequencyWindow::GaussianNotch { width } => (s / width).powi(2) * (-0.5 * (s / width).powi(2)).exp(),
        }
    }

    /// Half-width of supp f, when compact.
    pub fn support(&self) -> Option<f64> {
        match *self {
            FrequencyWindow::CompactBump { eps } => Some(eps),
            _ => None,
        }
    }

    /// Frequency beyond which |f̂| < 1e−15.
    fn cutoff(&self) -> f64 {
        match *self {
            FrequencyWindow::CompactBump { eps } => 6.0 * 1e15f64.powf(1.0 / 6.0) / eps,
            FrequencyWindow::Gaussian { width } => 8.4 * width,
            FrequencyWindow::GaussianNotch { width } => 9.0 * width,
        }
    }

    fn validate(&self) -> Result<()> {
        let w = match *self {
            FrequencyWindow::CompactBump { eps } => eps,
            FrequencyWindow::Gaussian { width } | FrequencyWindow::GaussianNotch { width } => width,
        };
        require(w.is_finite() && w > 0.0, || "window width must be positive".into())
    }
}

fn gauss_legendre_20() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_eval(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, x| acc * t + x)
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(i, x)| i as f64 * x).collect()
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Radial profile g(y) = 1 for y ≤ 1, 1 − S((y − 1)/(outer − 1)) up to
/// `outer`, 0 beyond, where S is the C^smoothness generalized smoothstep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialCutoff {
    pub outer: f64,
    pub smoothness: u32,
    /// Coefficients of 1 − S(t) in t.
    complement: Vec<f64>,
}

impl Default for SpatialCutoff {
    fn default() -> Self {
        SpatialCutoff::new(1.25, 6).expect("valid default cutoff")
    }
}

impl SpatialCutoff {
    pub fn new(outer: f64, smoothness: u32) -> Result<Self> {
        require(outer > 1.0 && outer.is_finite(), || "outer radius must exceed 1".into())?;
        require((1..=12).contains(&smoothness), || "smoothness must be in 1..=12".into())?;
        let n = smoothness;
        let mut complement = vec![0.0; (2 * n + 2) as usize];
        complement[0] = 1.0;
        for j in 0..=n {
            let c = binomial(n + j, j) * binomial(2 * n + 1, n - j) * if j % 2 == 0 { 1.0 } else { -1.0 };
            complement[(n + 1 + j) as usize] -= c;
        }
        Ok(SpatialCutoff { outer, smoothness, complement })
    }

    pub fn value(&self, y: f64) -> f64 {
        let y = y.abs();
        if y <= 1.0 {
            1.0
        } else if y >= self.outer {
            0.0
        } else {
            poly_eval(&self.complement, (y - 1.0) / (self.outer - 1.0))
        }
    }

    /// Coefficients in t of h(1 + ht)^j (1 − S(t)), h = outer − 1.
    fn shell_polynomial(&self, j: u32) -> Vec<f64> {
        let h = self.outer - 1.0;
        let lin: Vec<f64> = (0..=j).map(|i| binomial(j, i) * h.powi(i as i32) * h).collect();
        poly_mul(&lin, &self.complement)
    }

    /// ĝ(k) = ∫ d³y g(|y|) e^{−ik·y}.
    pub fn fourier(&self, k: f64) -> f64 {
        let k = k.abs();
        let b = self.outer;
        if k * b < 8.0 {
            // 4π Σ (−k²)ⁿ/(2n+1)! ∫ y^{2n+2} g dy
            let mut sum = 0.0;
            let mut fact = 1.0;
            let mut kp = 1.0;
            for n in 0..60u32 {
                if n > 0 {
                    fact *= (2 * n) as f64 * (2 * n + 1) as f64;
                    kp *= -k * k;
                }
                let j = 2 * n + 2;
                let shell = self.shell_polynomial(j);
                let moment = 1.0 / (j + 1) as f64
                    + shell.iter().enumerate().map(|(i, c)| c / (i + 1) as f64).sum::<f64>();
                let term = kp / fact * moment;
                sum += term;
                if term.abs() < 1e-18 * sum.abs() {
                    break;
                }
            }
            return 4.0 * PI * sum;
        }
        // ∫₀¹ y sin(ky) dy + ∫ shell.
        let inner = (k.sin() - k * k.cos()) / (k * k);
        let beta = k * (b - 1.0);
        let q = self.shell_polynomial(1);
        let shell = if beta >= 4.0 * q.len() as f64 {
            Self::shell_by_parts(q, k, beta)
        } else {
            // Composite Gauss–Legendre with at least two panels per period.
            let (x, w) = gauss_legendre_20();
            let panels = (beta / PI).ceil().max(4.0) as usize;
            let width = 1.0 / panels as f64;
            let mut acc = 0.0;
            for j in 0..panels {
                let mid = (j as f64 + 0.5) * width;
                for (xi, wi) in x.iter().zip(w) {
                    let t = mid + 0.5 * width * xi;
                    acc += wi * poly_eval(&q, t) * (k + beta * t).sin();
                }
            }
            0.5 * width * acc
        };
        4.0 * PI / k * (inner + shell)
    }

    /// ∫₀¹ Q(t) sin(k + βt) dt by repeated integration by parts; accurate
    /// once β is large compared with the degree of Q.
    fn shell_by_parts(mut q: Vec<f64>, k: f64, beta: f64) -> f64 {
        let e = Complex64::from_polar(1.0, beta);
        let ib = Complex64::new(0.0, beta);
        let mut denom = ib;
        let mut acc = Complex64::from(0.0);
        let mut sign = 1.0;
        while !q.is_empty() {
            acc += (e * poly_eval(&q, 1.0) - poly_eval(&q, 0.0)) * sign / denom;
            q = poly_derivative(&q);
            denom *= ib;
            sign = -sign;
        }
        (Complex64::from_polar(1.0, k) * acc).im
    }

    /// Radius beyond which (1/2π²)∫_K^∞ k²|ĝ| < `tol`, from the asymptotic
    /// envelope k^{smoothness+3}|ĝ(k)|.
    fn momentum_cutoff(&self, tol: f64) -> f64 {
        let n = self.smoothness as f64;
        let k0 = 200.0;
        let env = (0..64)
            .map(|i| k0 + 4.0 * PI * i as f64 / 63.0)
            .map(|k| k.powf(n + 3.0) * self.fourier(k).abs())
            .fold(0.0, f64::max);
        (env / (2.0 * PI * PI * n * tol)).powf(1.0 / n).clamp(k0, 1e6)
    }
}

/// Momentum-space kernel of ω([Q, ψ_n(0)])/(iφ) for one spatial Fourier
/// mode: components (n = 1, n = 2). The n = 1 part is odd in frequency and
/// vanishes for even windows.
pub fn commutator_kernel(window: &FrequencyWindow, p: f64, ms: &MassSpectrum, mu: f64) -> Result<[f64; 2]> {
    let (plus_sq, minus_sq) = omega_sq_pm(ms, mu, p)?;
    let w2_sq = ms.w2_sq(p);
    let gap = 2.0 * half_splitting(ms, mu, p);
    let f_plus = window.hat(plus_sq.sqrt());
    let f_minus = window.hat(minus_sq.sqrt());
    let n2 = (f_plus * (w2_sq - minus_sq) + f_minus * (plus_sq - w2_sq)) / gap;
    Ok([0.0, n2])
}

/// ω([Q_R, ψ_n(0)])/i at tree level in the condensate state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeCommutatorResult {
    pub r: f64,
    pub value: [f64; 2],
    pub window: FrequencyWindow,
    pub cutoff: SpatialCutoff,
    pub quadrature_error: f64,
    /// R does not exceed the causal radius (the time-support half-width).
    pub pre_asymptotic: bool,
}

/// φ(1/2π²)∫k²ĝ(k)F(k/R)dk with F from [`commutator_kernel`].
pub fn smeared_commutator(
    r: f64,
    window: &FrequencyWindow,
    cutoff: &SpatialCutoff,
    ms: &MassSpectrum,
    mu: f64,
    phi: f64,
    quad: &QuadratureConfig,
) -> Result<ChargeCommutatorResult> {
    require(r > 0.0 && r.is_finite(), || "R must be positive".into())?;
    window.validate()?;
    quad.validate()?;
    let k_max = cutoff.momentum_cutoff(1e-13).min(window.cutoff() * r * 1.5).max(50.0);
    let panels = (k_max / PI).ceil() as usize;
    let breaks: Vec<f64> = (0..=panels).map(|i| k_max * i as f64 / panels as f64).collect();
    let failure = std::cell::Cell::new(None);
    let integrand = |k: f64| -> [f64; 1] {
        if k == 0.0 {
            return [0.0];
        }
        match commutator_kernel(window, k / r, ms, mu) {
            Ok(f) => [k * k * cutoff.fourier(k) * f[1]],
            Err(e) => {
                failure.set(Some(e));
                [0.0]
            }
        }
    };
    // Absolute floor relative to (1/2π²)∫k²ĝ = g(0) = 1.
    let atol = quad.atol.max(1e-13 * 2.0 * PI * PI);
    let res = adaptive_vec(integrand, &breaks, quad.rtol.min(1e-12), atol, quad.max_subdivisions.max(4 * panels + 2000))?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let norm = phi / (2.0 * PI * PI);
    Ok(ChargeCommutatorResult {
        r,
        value: [0.0, norm * res.value[0]],
        window: *window,
        cutoff: cutoff.clone(),
        quadrature_error: norm.abs() * res.error,
        pre_asymptotic: window.support().is_none_or(|s| r <= s),
    })
}

/// Regularized charge commutator with the compact time bump of half-width
/// `eps` and the default spatial cutoff. Beyond R = eps the exact value is
/// R-independent and equals (0, φ).
pub fn charge_commutator(
    r: f64,
    eps: f64,
    ms: &MassSpectrum,
    mu: f64,
    phi: f64,
    quad: &QuadratureConfig,
) -> Result<ChargeCommutatorResult> {
    smeared_commutator(r, &FrequencyWindow::CompactBump { eps }, &SpatialCutoff::default(), ms, mu, phi, quad)
}

/// Default time-smearing half-width 0.1/M₁.
pub fn default_time_width(ms: &MassSpectrum) -> f64 {
    0.1 / ms.m1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCheck {
    pub r_grid: Vec<f64>,
    /// n = 2 component at each R.
    pub values: Vec<f64>,
    /// φ·f̂(0).
    pub target: f64,
    pub errors: Vec<f64>,
    /// log₂ of successive error ratios.
    pub rates: Vec<f64>,
    /// Errors nonincreasing down to the quadrature floor.
    pub monotone: bool,
    /// Last error below 1e−6·max(|φ|, |target|).
    pub converged: bool,
}

/// Smeared Ĝ₂ against f̂(p₀)ĝ(p) at momenta p/R over a grid of R, compared
/// with the gapless prediction φ·f̂(0).
pub fn goldstone_spectral_check(
    window: &FrequencyWindow,
    r_grid: &[f64],
    ms: &MassSpectrum,
    mu: f64,
    phi: f64,
    quad: &QuadratureConfig,
) -> Result<SpectralCheck> {
    require(!r_grid.is_empty() && r_grid.windows(2).all(|w| w[1] > w[0]), || {
        "R grid must be nonempty and increasing".into()
    })?;
    let cutoff = SpatialCutoff::default();
    let results = r_grid
        .par_iter()
        .map(|&r| smeared_commutator(r, window, &cutoff, ms, mu, phi, quad))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = results.iter().map(|r| r.value[1]).collect();
    let target = phi * window.hat(0.0);
    let errors: Vec<f64> = values.iter().map(|v| (v - target).abs()).collect();
    let floor = 1e-10 * phi.abs().max(target.abs());
    let rates = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let monotone = errors.windows(2).all(|w| w[1] <= w[0] || w[1] <= floor);
    let converged = errors.last().is_some_and(|&e| e <= 1e-6 * phi.abs().max(target.abs()));
    Ok(SpectralCheck { r_grid: r_grid.to_vec(), values, target, errors, rates, monotone, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::quad::integrate;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn on_shell() -> (MassSpectrum, f64, f64) {
        let params = ModelParams::new(1.0, 2f64.sqrt(), 0.5, 1.0).unwrap();
        (params.spectrum().unwrap(), params.mu, params.lambda)
    }

    #[test]
    fn decoupled_modes() {
        let ms = MassSpectrum::from_masses(0.0, 1.0, 1.0).unwrap();
        let p = Momentum3::along_x(0.3);
        let plus = plane_wave_mode(Sign::Plus, p, &ms, 0.0).unwrap();
        let minus = plane_wave_mode(Sign::Minus, p, &ms, 0.0).unwrap();
        assert_eq!(plus.amplitude, [Complex64::from(1.0), Complex64::from(0.0)]);
        assert_eq!(minus.amplitude, [Complex64::from(0.0), Complex64::from(1.0)]);
        assert_relative_eq!(plus.omega, (1.09f64).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn gapless_zero_mode_is_phase_direction() {
        let (ms, mu, _) = on_shell();
        let zero = plane_wave_mode(Sign::Minus, Momentum3::default(), &ms, mu).unwrap();
        assert_eq!(zero.omega, 0.0);
        assert_relative_eq!(zero.amplitude[1].re, 1.0, max_relative = 1e-15);
        assert_eq!(zero.amplitude[0].norm(), 0.0);
        let mut prev = f64::INFINITY;
        for i in 0..6 {
            let p = 0.1 / 4f64.powi(i);
            let mode = plane_wave_mode(Sign::Minus, Momentum3::along_x(p), &ms, mu).unwrap();
            let admix = mode.amplitude[0].norm();
            assert!(admix < prev && mode.amplitude[1].norm() > 0.99);
            // Leading order: |v₁/v₂| = 2μω₋/M₁².
            assert_relative_eq!(admix / mode.amplitude[1].norm(), 2.0 * mu * mode.omega / ms.m1_sq, max_relative = 0.05);
            prev = admix;
        }
    }

    fn config(ms: &MassSpectrum, mu: f64) -> FieldConfiguration {
        let modes = [
            (Sign::Minus, [0.3, -0.2, 0.5], Complex64::new(0.02, 0.01)),
            (Sign::Plus, [-0.4, 0.1, 0.0], Complex64::new(-0.015, 0.03)),
            (Sign::Minus, [0.0, 0.7, -0.1], Complex64::new(0.01, -0.02)),
        ];
        FieldConfiguration {
            modes: modes
                .iter()
                .map(|&(b, p, c)| (plane_wave_mode(b, Momentum3(p), ms, mu).unwrap(), c))
                .collect(),
        }
    }

    fn points() -> Vec<(f64, [f64; 3])> {
        (0..25)
            .map(|i| {
                let s = i as f64;
                (0.37 * s - 2.0, [(1.3 * s).sin() * 4.0, (0.7 * s).cos() * 3.0, 0.2 * s - 1.0])
            })
            .collect()
    }

    #[test]
    fn configurations_solve_linearized_equations() {
        let (ms, mu, _) = on_shell();
        let cfg = config(&ms, mu);
        for (t, x) in points() {
            let s = cfg.sample(t, x);
            let r = linearized_residual(&s, &ms, mu);
            let scale = s.box_[0].abs() + s.box_[1].abs() + ms.m1_sq * s.psi[0].abs() + 2.0 * mu * s.dt[1].abs();
            assert!(r[0].abs() <= 1e-9 * scale && r[1].abs() <= 1e-9 * scale, "{r:?}");
        }
    }

    #[test]
    fn divergence_identities_on_shell() {
        let (ms, mu, lambda) = on_shell();
        let cfg = config(&ms, mu);
        let pts = points();
        let full = divergence_residual(&cfg, &ms, mu, lambda, ms.phi, DivergenceOrder::Full, &pts);
        let lin = divergence_residual(&cfg, &ms, mu, lambda, ms.phi, DivergenceOrder::Linearized, &pts);
        assert!(full.max_relative_residual < 1e-10);
        assert!(lin.max_relative_residual < 1e-10);
        for (f, l) in full.samples.iter().zip(&lin.samples) {
            assert!(f.closed_form.abs() <= 1e-12 * f.scale);
            assert!(f.divergence.abs() <= 1e-10 * f.scale);
            // On shell the linear breaking term is 2ψ₁ψ₂M₁².
            let s = cfg.sample(l.t, l.x);
            assert_relative_eq!(l.closed_form, 2.0 * s.psi[0] * s.psi[1] * ms.m1_sq, max_relative = 1e-12);
            assert!(l.divergence.abs() > 1e-8);
        }
    }

    #[test]
    fn symmetric_phase_conserves_current() {
        let ms = MassSpectrum::from_masses(0.0, 0.8, 0.8).unwrap();
        let cfg = config(&ms, 0.4);
        for order in [DivergenceOrder::Linearized, DivergenceOrder::Full] {
            let rep = divergence_residual(&cfg, &ms, 0.4, 0.3, 0.0, order, &points());
            for s in &rep.samples {
                assert!(s.divergence.abs() <= 1e-12 * s.scale.max(1e-300) + 1e-300);
                assert_eq!(s.closed_form, 0.0);
            }
        }
    }

    #[test]
    fn off_shell_full_order_matches_closed_form() {
        let params = ModelParams::with_virtual_mass(1.0, 1.3, 0.7, 1.0, 0.4).unwrap();
        let ms = params.spectrum().unwrap();
        let cfg = config(&ms, params.mu);
        let rep = divergence_residual(&cfg, &ms, params.mu, params.lambda, ms.phi, DivergenceOrder::Full, &points());
        assert!(rep.max_relative_residual < 1e-10);
        assert!(rep.samples.iter().any(|s| s.closed_form.abs() > 1e-6));
    }

    #[test]
    fn smoothstep_profile() {
        for n in 1..=8 {
            let g = SpatialCutoff::new(1.25, n).unwrap();
            assert_eq!(g.value(0.5), 1.0);
            assert!(g.value(1.25).abs() < 1e-12);
            assert_relative_eq!(g.value(1.125), 0.5, max_relative = 1e-12);
            let h = 1e-4;
            assert!((g.value(1.0 + h) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn cutoff_fourier_matches_quadrature() {
        let cfg = QuadratureConfig { rtol: 1e-13, atol: 1e-15, ..Default::default() };
        for (outer, n) in [(1.25, 6), (1.5, 3)] {
            let g = SpatialCutoff::new(outer, n).unwrap();
            for k in [0.0, 0.5, 3.0, 6.39, 6.41, 12.0, 47.0, 310.0] {
                let direct = integrate(|y| 4.0 * PI * y * y * g.value(y) * sinc(k * y), 0.0, 1.0, &cfg).unwrap().value[0]
                    + integrate(|y| 4.0 * PI * y * y * g.value(y) * sinc(k * y), 1.0, outer, &cfg).unwrap().value[0];
                let scale = 4.0 * PI / 3.0;
                assert!((g.fourier(k) - direct).abs() < 1e-11 * scale, "k={k}: {} vs {direct}", g.fourier(k));
            }
        }
    }

    fn sinc(x: f64) -> f64 {
        if x.abs() < 1e-8 {
            1.0
        } else {
            x.sin() / x
        }
    }

    #[test]
    fn commutator_kernel_at_zero_momentum() {
        let (ms, mu, _) = on_shell();
        let w = FrequencyWindow::CompactBump { eps: 0.3 };
        assert_relative_eq!(commutator_kernel(&w, 0.0, &ms, mu).unwrap()[1], 1.0, max_relative = 1e-15);
        // Flat window: equal-time canonical commutator for every p.
        let flat = FrequencyWindow::Gaussian { width: 1e12 };
        for p in [0.1, 1.0, 7.0] {
            assert_relative_eq!(commutator_kernel(&flat, p, &ms, mu).unwrap()[1], 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn charge_commutator_is_r_stable_beyond_causal_radius() {
        let (ms, mu, _) = on_shell();
        let q = QuadratureConfig::default();
        let eps = default_time_width(&ms);
        let m1 = ms.m1();
        let a = charge_commutator(10.0 / m1, eps, &ms, mu, ms.phi, &q).unwrap();
        let b = charge_commutator(20.0 / m1, eps, &ms, mu, ms.phi, &q).unwrap();
        assert!(!a.pre_asymptotic);
        assert_eq!(a.value[0], 0.0);
        assert!((a.value[1] / ms.phi - 1.0).abs() < 1e-8, "{}", a.value[1] / ms.phi);
        assert!((b.value[1] - a.value[1]).abs() < 1e-8 * a.value[1].abs());
        // Just past the causal radius the value is already exact.
        let c = charge_commutator(1.05 * eps, eps, &ms, mu, ms.phi, &q).unwrap();
        assert!((c.value[1] / ms.phi - 1.0).abs() < 1e-8, "{}", c.value[1] / ms.phi);
        // Well inside it the spatial cutoff truncates the light cone.
        let d = charge_commutator(0.3 * eps, eps, &ms, mu, ms.phi, &q).unwrap();
        assert!(d.pre_asymptotic);
        assert!((d.value[1] / ms.phi - 1.0).abs() > 1e-4);
    }

    #[test]
    fn charge_commutator_is_cutoff_independent() {
        let (ms, mu, _) = on_shell();
        let q = QuadratureConfig::default();
        let w = FrequencyWindow::CompactBump { eps: default_time_width(&ms) };
        let r = 5.0 / ms.m1();
        let a = smeared_commutator(r, &w, &SpatialCutoff::new(1.25, 6).unwrap(), &ms, mu, ms.phi, &q).unwrap();
        let b = smeared_commutator(r, &w, &SpatialCutoff::new(1.5, 8).unwrap(), &ms, mu, ms.phi, &q).unwrap();
        assert!((a.value[1] - b.value[1]).abs() < 1e-8 * ms.phi);
    }

    #[test]
    fn spectral_check_gapless_and_contrasts() {
        let (ms, mu, _) = on_shell();
        let q = QuadratureConfig::default();
        let m1 = ms.m1();
        let grid: Vec<f64> = [10.0, 20.0, 40.0, 80.0].iter().map(|r| r / m1).collect();
        let window = FrequencyWindow::Gaussian { width: 0.5 * m1 };
        let rep = goldstone_spectral_check(&window, &grid, &ms, mu, ms.phi, &q).unwrap();
        assert!(rep.monotone && rep.converged, "{rep:?}");
        let notch = FrequencyWindow::GaussianNotch { width: 0.5 * m1 };
        let rep = goldstone_spectral_check(&notch, &grid, &ms, mu, ms.phi, &q).unwrap();
        assert_eq!(rep.target, 0.0);
        assert!(rep.converged, "{rep:?}");
        // Gapped deformation: the zero-frequency weight disappears.
        let gapped = ModelParams::with_virtual_mass(1.0, 2f64.sqrt(), 0.5, 1.0, 0.5).unwrap().spectrum().unwrap();
        let narrow = FrequencyWindow::Gaussian { width: 0.1 * m1 };
        let rep = goldstone_spectral_check(&narrow, &grid, &gapped, mu, gapped.phi, &q).unwrap();
        assert!(!rep.converged);
        assert!(*rep.errors.last().unwrap() > 0.1 * gapped.phi);
    }

    proptest! {
        #[test]
        fn modes_are_null_vectors(p in prop::array::uniform3(-3.0f64..3.0), mu in 0.1f64..2.0,
                                  m1 in 0.1f64..3.0, m2 in 0.0f64..1.0, plus in any::<bool>()) {
            let ms = MassSpectrum::from_masses(0.3, m1 * m1, (m2 * m1).powi(2)).unwrap();
            let branch = if plus { Sign::Plus } else { Sign::Minus };
            let mode = plane_wave_mode(branch, Momentum3(p), &ms, mu).unwrap();
            let d = kinetic_matrix_re(mode.omega, mode.p.norm(), &ms, mu, false);
            prop_assert!(d.det().norm() <= 1e-10 * d.max_abs().powi(2).max(1e-300));
            let n = mode.amplitude[0].norm_sqr() + mode.amplitude[1].norm_sqr();
            prop_assert!((n - 1.0).abs() < 1e-14);
            let lead = if mode.amplitude[0].norm() > 1e-14 { mode.amplitude[0] } else { mode.amplitude[1] };
            prop_assert!(lead.im == 0.0 && lead.re > 0.0);
        }
    }
}
