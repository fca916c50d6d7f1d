//! One-dimensional quadrature: adaptive Gauss–Kronrod (7/15) with a global
//! error heap, a semi-infinite mapping, and a double-exponential rule used as
//! an independent second scheme.

use crate::error::{require, Error, Result};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Which rule evaluates the integrals of the thermal module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    GaussKronrod,
    DoubleExponential,
}

/// Tolerances and limits shared by every integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    /// Explicit momentum cutoff (E); `None` selects max(20/β, 10·max(M₁, μ)).
    #[serde(default)]
    pub p_cutoff: Option<f64>,
    #[serde(default = "default_max_subdivisions")]
    pub max_subdivisions: usize,
    #[serde(default)]
    pub scheme: Scheme,
}

fn default_rtol() -> f64 {
    1e-10
}
fn default_atol() -> f64 {
    1e-14
}
fn default_max_subdivisions() -> usize {
    4000
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            rtol: default_rtol(),
            atol: default_atol(),
            p_cutoff: None,
            max_subdivisions: default_max_subdivisions(),
            scheme: Scheme::GaussKronrod,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.rtol > 0.0 && self.rtol.is_finite(), || "rtol must be positive".into())?;
        require(self.atol > 0.0 && self.atol.is_finite(), || "atol must be positive".into())?;
        require(self.max_subdivisions > 0, || "max_subdivisions must be positive".into())?;
        if let Some(pc) = self.p_cutoff {
            require(pc > 0.0 && pc.is_finite(), || "p_cutoff must be positive".into())?;
        }
        Ok(())
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }
}

/// Value, error estimate and cost of one integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult<const N: usize> {
    #[serde(with = "serde_arrays")]
    pub value: [f64; N],
    pub error: f64,
    pub evaluations: usize,
    pub subdivisions: usize,
}

mod serde_arrays {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(v: &[f64; N], s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[f64; N], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into()
            .map_err(|_| serde::de::Error::custom("array length mismatch"))
    }
}

impl QuadResult<1> {
    pub fn scalar(&self) -> f64 {
        self.value[0]
    }
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

struct Segment<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: f64,
}

impl<const N: usize> PartialEq for Segment<N> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<const N: usize> Eq for Segment<N> {}
impl<const N: usize> PartialOrd for Segment<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Segment<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn norm<const N: usize>(v: &[f64; N]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// One 15-point Kronrod panel with the 7-point Gauss estimate embedded.
fn kronrod15<const N: usize, F: Fn(f64) -> [f64; N]>(f: &F, a: f64, b: f64) -> ([f64; N], f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut fv = [[0.0; N]; 15];
    fv[7] = f(center);
    for j in 0..7 {
        let dx = half * XGK[j];
        fv[j] = f(center - dx);
        fv[14 - j] = f(center + dx);
    }
    let mut err_total = 0.0;
    let mut resk = [0.0; N];
    for c in 0..N {
        let mut k = WGK[7] * fv[7][c];
        let mut g = WG[3] * fv[7][c];
        let mut abs = WGK[7] * fv[7][c].abs();
        for j in 0..7 {
            let pair = fv[j][c] + fv[14 - j][c];
            k += WGK[j] * pair;
            abs += WGK[j] * (fv[j][c].abs() + fv[14 - j][c].abs());
            if j % 2 == 1 {
                g += WG[j / 2] * pair;
            }
        }
        let mean = 0.5 * k;
        let mut asc = WGK[7] * (fv[7][c] - mean).abs();
        for j in 0..7 {
            asc += WGK[j] * ((fv[j][c] - mean).abs() + (fv[14 - j][c] - mean).abs());
        }
        let mut err = ((k - g) * half).abs();
        let asc = asc * half.abs();
        let abs = abs * half.abs();
        if asc != 0.0 && err != 0.0 {
            err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
        }
        if abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            err = err.max(50.0 * f64::EPSILON * abs);
        }
        resk[c] = k * half;
        err_total += err;
    }
    (resk, err_total)
}

/// Adaptive Gauss–Kronrod over the segments defined by `breaks` (sorted,
/// at least two points), refining the worst segment until the summed
/// error estimate meets max(atol, rtol·‖I‖).
pub fn adaptive_vec<const N: usize, F: Fn(f64) -> [f64; N]>(
    f: F,
    breaks: &[f64],
    rtol: f64,
    atol: f64,
    max_subdivisions: usize,
) -> Result<QuadResult<N>> {
    assert!(breaks.len() >= 2, "need at least one segment");
    let mut heap = BinaryHeap::new();
    let mut total = [0.0; N];
    let mut err = 0.0;
    let mut evaluations = 0;
    for w in breaks.windows(2) {
        if w[1] == w[0] {
            continue;
        }
        let (v, e) = kronrod15(&f, w[0], w[1]);
        evaluations += 15;
        for c in 0..N {
            total[c] += v[c];
        }
        err += e;
        heap.push(Segment { a: w[0], b: w[1], value: v, error: e });
    }
    let mut subdivisions = heap.len();
    loop {
        let tol = atol.max(rtol * norm(&total));
        if err <= tol {
            break;
        }
        if subdivisions >= max_subdivisions {
            return Err(Error::QuadratureNonconvergence {
                value: total[0],
                error: err,
                subdivisions,
            });
        }
        let worst = match heap.pop() {
            Some(s) => s,
            None => break,
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            // Interval exhausted at machine resolution.
            return Err(Error::QuadratureNonconvergence {
                value: total[0],
                error: err,
                subdivisions,
            });
        }
        let (v1, e1) = kronrod15(&f, worst.a, mid);
        let (v2, e2) = kronrod15(&f, mid, worst.b);
        evaluations += 30;
        for c in 0..N {
            total[c] += v1[c] + v2[c] - worst.value[c];
        }
        err += e1 + e2 - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
        subdivisions += 1;
    }
    // Re-sum to shed drift from incremental updates.
    let mut value = [0.0; N];
    let mut err_sum = 0.0;
    for s in heap.iter() {
        for c in 0..N {
            value[c] += s.value[c];
        }
        err_sum += s.error;
    }
    Ok(QuadResult { value, error: err_sum, evaluations, subdivisions })
}

/// Scalar adaptive Gauss–Kronrod on [a, b].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<QuadResult<1>> {
    adaptive_vec(|x| [f(x)], &[a, b], cfg.rtol, cfg.atol, cfg.max_subdivisions)
}

/// Adaptive Gauss–Kronrod on [a, ∞) through x = a + s·t/(1 − t).
pub fn integrate_to_infinity_vec<const N: usize, F: Fn(f64) -> [f64; N]>(
    f: F,
    a: f64,
    scale: f64,
    rtol: f64,
    atol: f64,
    max_subdivisions: usize,
) -> Result<QuadResult<N>> {
    let g = |t: f64| {
        let u = 1.0 - t;
        let x = a + scale * t / u;
        let jac = scale / (u * u);
        let mut v = f(x);
        for c in v.iter_mut() {
            *c = if *c == 0.0 { 0.0 } else { *c * jac };
        }
        v
    };
    adaptive_vec(g, &[0.0, 0.5, 0.9, 1.0], rtol, atol, max_subdivisions)
}

/// Tanh–sinh rule on [a, b], refined by halving the step until two levels
/// agree to `tol`.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, max_level: usize) -> Result<f64> {
    tanh_sinh_rel(f, a, b, tol, 1e-15, max_level)
}

/// Tanh–sinh with a mixed absolute/relative stopping rule.
pub fn tanh_sinh_rel<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, atol: f64, rtol: f64, max_level: usize) -> Result<f64> {
    let h = 0.5 * (b - a);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let node = |t: f64| -> f64 {
        let s = half_pi * t.sinh();
        let ch = s.cosh();
        // Distance to the nearer endpoint, computed without cancellation.
        let d = 1.0 / (s.abs().exp() * ch);
        let w = half_pi * t.cosh() / (ch * ch);
        let xx = if t >= 0.0 { b - h * d } else { a + h * d };
        if w == 0.0 || !(xx > a && xx < b) {
            0.0
        } else {
            w * f(xx)
        }
    };
    double_exponential_levels(node, h, atol, rtol, max_level, 3.2)
}

/// Exp–sinh rule on [a, ∞) with x = a + s·exp(π/2·sinh t).
pub fn exp_sinh<F: Fn(f64) -> f64>(f: F, a: f64, scale: f64, tol: f64, max_level: usize) -> Result<f64> {
    exp_sinh_rel(f, a, scale, tol, 1e-15, max_level)
}

/// Exp–sinh with a mixed absolute/relative stopping rule.
pub fn exp_sinh_rel<F: Fn(f64) -> f64>(f: F, a: f64, scale: f64, atol: f64, rtol: f64, max_level: usize) -> Result<f64> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let node = |t: f64| -> f64 {
        let e = (half_pi * t.sinh()).exp();
        let w = half_pi * t.cosh() * e;
        let x = a + scale * e;
        if !w.is_finite() || !x.is_finite() {
            return 0.0;
        }
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            w * v
        }
    };
    double_exponential_levels(node, scale, atol, rtol, max_level, 4.5)
}

fn double_exponential_levels<G: Fn(f64) -> f64>(
    node: G,
    jac: f64,
    atol: f64,
    rtol: f64,
    max_level: usize,
    t_max: f64,
) -> Result<f64> {
    let mut step = 0.5;
    let mut sum = node(0.0);
    let mut k = 1;
    loop {
        let t = k as f64 * step;
        if t > t_max {
            break;
        }
        sum += node(t) + node(-t);
        k += 1;
    }
    let mut prev = sum * step * jac;
    for _ in 0..max_level {
        step *= 0.5;
        let mut k = 1;
        loop {
            let t = k as f64 * step;
            if t > t_max {
                break;
            }
            sum += node(t) + node(-t);
            k += 2;
        }
        let cur = sum * step * jac;
        if (cur - prev).abs() <= atol.max(rtol * cur.abs()) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::QuadratureNonconvergence {
        value: prev,
        error: f64::NAN,
        subdivisions: max_level,
    })
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration on Pₙ.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 0 { 0.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// ∫₀^∞ of a vector integrand: finite panels at `breaks` (starting at 0,
/// ending at the cutoff) plus a semi-infinite tail of decay length
/// `tail_scale`, evaluated with the scheme selected in `cfg`.
pub fn integrate_radial<const N: usize, F: Fn(f64) -> [f64; N]>(
    f: F,
    breaks: &[f64],
    tail_scale: f64,
    cfg: &QuadratureConfig,
) -> Result<QuadResult<N>> {
    cfg.validate()?;
    let cutoff = *breaks.last().expect("nonempty breaks");
    match cfg.scheme {
        Scheme::GaussKronrod => {
            let body = adaptive_vec(&f, breaks, cfg.rtol, cfg.atol, cfg.max_subdivisions)?;
            let tail = integrate_to_infinity_vec(&f, cutoff, tail_scale, cfg.rtol, cfg.atol, cfg.max_subdivisions)?;
            let mut value = body.value;
            for c in 0..N {
                value[c] += tail.value[c];
            }
            Ok(QuadResult {
                value,
                error: body.error + tail.error,
                evaluations: body.evaluations + tail.evaluations,
                subdivisions: body.subdivisions + tail.subdivisions,
            })
        }
        Scheme::DoubleExponential => {
            let mut value = [0.0; N];
            let evals = std::cell::Cell::new(0usize);
            for c in 0..N {
                let g = |x: f64| {
                    evals.set(evals.get() + 1);
                    f(x)[c]
                };
                let mut acc = 0.0;
                for w in breaks.windows(2) {
                    if w[1] > w[0] {
                        acc += tanh_sinh_rel(&g, w[0], w[1], cfg.atol, 0.1 * cfg.rtol, 12)?;
                    }
                }
                acc += exp_sinh_rel(&g, cutoff, tail_scale, cfg.atol, 0.1 * cfg.rtol, 12)?;
                value[c] = acc;
            }
            Ok(QuadResult {
                value,
                error: cfg.rtol * norm(&value),
                evaluations: evals.get(),
                subdivisions: breaks.len(),
            })
        }
    }
}
