//! Connected-multigraph expansion of truncated correlations in Gaussian
//! states: enumeration, symmetry factors, the graph sum on finite toy models,
//! an independent moment/cumulant oracle, spatial decay-rate fits of the
//! thermal kernel, and the KMS cyclic reordering of imaginary times.
//!
//! Toy observables are Wick-ordered with respect to their own covariance, so
//! a single observable's expectation is its value at the zero configuration
//! and graphs carry no tadpoles.

use crate::error::{require, Error, Result};
use crate::model::MassSpectrum;
use crate::quad::QuadratureConfig;
use crate::thermal::{kms_kernel_imag_time, KernelPart};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// Edge bundle between s < r with multiplicity l_sr ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeBundle {
    pub s: usize,
    pub r: usize,
    pub multiplicity: u32,
}

/// Multigraph on labeled vertices 0..n_vertices without tadpoles; bundles
/// are kept in lexicographic (s, r) order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledMultigraph {
    pub n_vertices: usize,
    pub edges: Vec<EdgeBundle>,
}

impl LabeledMultigraph {
    pub fn new(n_vertices: usize, mut edges: Vec<EdgeBundle>) -> Result<Self> {
        for e in &edges {
            require(e.s < e.r && e.r < n_vertices, || format!("bad edge ({}, {})", e.s, e.r))?;
            require(e.multiplicity > 0, || "zero multiplicity bundle".into())?;
        }
        edges.sort();
        for w in edges.windows(2) {
            require((w[0].s, w[0].r) != (w[1].s, w[1].r), || "duplicate vertex pair".into())?;
        }
        Ok(LabeledMultigraph { n_vertices, edges })
    }

    pub fn multiplicity(&self, s: usize, r: usize) -> u32 {
        let (s, r) = if s < r { (s, r) } else { (r, s) };
        self.edges
            .iter()
            .find(|e| e.s == s && e.r == r)
            .map_or(0, |e| e.multiplicity)
    }

    pub fn degree(&self, v: usize) -> u32 {
        self.edges
            .iter()
            .filter(|e| e.s == v || e.r == v)
            .map(|e| e.multiplicity)
            .sum()
    }

    pub fn edge_count(&self) -> u32 {
        self.edges.iter().map(|e| e.multiplicity).sum()
    }

    pub fn is_connected(&self) -> bool {
        if self.n_vertices <= 1 {
            return true;
        }
        let mut parent: Vec<usize> = (0..self.n_vertices).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut x = x;
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.s), find(&mut parent, e.r));
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        (1..self.n_vertices).all(|v| find(&mut parent, v) == root)
    }

    /// Adjacency-multiplicity record for inspection.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_vertices": self.n_vertices,
            "edges": self.edges.iter().map(|e| [e.s as u64, e.r as u64, e.multiplicity as u64]).collect::<Vec<_>>(),
            "symmetry_factor": symmetry_factor(self).to_string(),
        })
    }
}

fn factorial(n: u32) -> u128 {
    (1..=n as u128).product()
}

/// sym(G) = ∏_{i<j} l_ij!.
pub fn symmetry_factor(g: &LabeledMultigraph) -> u128 {
    g.edges.iter().map(|e| factorial(e.multiplicity)).product()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationBounds {
    /// Largest allowed l_ij.
    pub max_multiplicity: u32,
    /// Optional per-vertex degree bounds.
    pub max_degree: Option<Vec<u32>>,
    /// Reject when the predicted number of candidates exceeds this.
    pub limit: u128,
}

impl EnumerationBounds {
    pub fn new(max_multiplicity: u32) -> Self {
        EnumerationBounds { max_multiplicity, max_degree: None, limit: 10_000_000 }
    }

    pub fn with_degrees(mut self, degrees: Vec<u32>) -> Self {
        self.max_degree = Some(degrees);
        self
    }
}

/// Upper bound (max_multiplicity + 1)^(pairs) on the candidate count.
pub fn predicted_candidates(n_vertices: usize, max_multiplicity: u32) -> u128 {
    let pairs = (n_vertices * n_vertices.saturating_sub(1) / 2) as u32;
    (max_multiplicity as u128 + 1).checked_pow(pairs).unwrap_or(u128::MAX)
}

/// All connected tadpole-free multigraphs on n_vertices labeled vertices
/// within the bounds, in lexicographic order of the multiplicity vector.
pub fn enumerate_connected(n_vertices: usize, bounds: &EnumerationBounds) -> Result<Vec<LabeledMultigraph>> {
    require(n_vertices >= 1, || "need at least one vertex".into())?;
    if let Some(d) = &bounds.max_degree {
        require(d.len() == n_vertices, || format!("{} degree bounds for {n_vertices} vertices", d.len()))?;
    }
    let predicted = predicted_candidates(n_vertices, bounds.max_multiplicity);
    if predicted > bounds.limit {
        return Err(Error::TooManyGraphs { predicted, limit: bounds.limit });
    }
    let pairs: Vec<(usize, usize)> = (0..n_vertices)
        .flat_map(|s| (s + 1..n_vertices).map(move |r| (s, r)))
        .collect();
    let caps: Vec<u32> = bounds.max_degree.clone().unwrap_or_else(|| vec![u32::MAX; n_vertices]);
    let mut out = Vec::new();
    let mut mult = vec![0u32; pairs.len()];
    let mut deg = vec![0u32; n_vertices];
    fn rec(
        idx: usize,
        pairs: &[(usize, usize)],
        mult: &mut Vec<u32>,
        deg: &mut Vec<u32>,
        caps: &[u32],
        max_mult: u32,
        n: usize,
        out: &mut Vec<LabeledMultigraph>,
    ) {
        if idx == pairs.len() {
            let edges = pairs
                .iter()
                .zip(mult.iter())
                .filter(|(_, &l)| l > 0)
                .map(|(&(s, r), &l)| EdgeBundle { s, r, multiplicity: l })
                .collect();
            let g = LabeledMultigraph { n_vertices: n, edges };
            if g.is_connected() {
                out.push(g);
            }
            return;
        }
        let (s, r) = pairs[idx];
        for l in 0..=max_mult {
            if deg[s] + l > caps[s] || deg[r] + l > caps[r] {
                break;
            }
            mult[idx] = l;
            deg[s] += l;
            deg[r] += l;
            rec(idx + 1, pairs, mult, deg, caps, max_mult, n, out);
            deg[s] -= l;
            deg[r] -= l;
        }
        mult[idx] = 0;
    }
    rec(0, &pairs, &mut mult, &mut deg, &caps, bounds.max_multiplicity, n_vertices, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

/// Polynomial in k variables, as a list of monomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

type PolyMap = BTreeMap<Vec<u32>, f64>;

impl Polynomial {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Polynomial { terms }
    }

    /// c·x^exponents.
    pub fn monomial(coeff: f64, exponents: Vec<u32>) -> Self {
        Polynomial { terms: vec![Monomial { coeff, exponents }] }
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.exponents.iter().sum()).max().unwrap_or(0)
    }

    fn to_map(&self) -> PolyMap {
        let mut m = PolyMap::new();
        for t in &self.terms {
            *m.entry(t.exponents.clone()).or_insert(0.0) += t.coeff;
        }
        m
    }

    /// Derivative ∂_{i₁}…∂_{i_d} at the zero configuration.
    pub fn derivative_at_zero(&self, indices: &[usize], k: usize) -> f64 {
        let mut e = vec![0u32; k];
        for &i in indices {
            e[i] += 1;
        }
        let coeff: f64 = self.terms.iter().filter(|t| t.exponents == e).map(|t| t.coeff).sum();
        coeff * e.iter().map(|&n| factorial(n) as f64).product::<f64>()
    }
}

/// Finite-dimensional Gaussian state with covariance K and a list of
/// (Wick-ordered) polynomial observables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianToyModel {
    pub covariance: Vec<Vec<f64>>,
    pub observables: Vec<Polynomial>,
}

impl GaussianToyModel {
    pub fn new(covariance: Vec<Vec<f64>>, observables: Vec<Polynomial>) -> Result<Self> {
        let toy = GaussianToyModel { covariance, observables };
        toy.validate()?;
        Ok(toy)
    }

    pub fn k(&self) -> usize {
        self.covariance.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        require(k >= 1, || "empty covariance".into())?;
        require(!self.observables.is_empty(), || "need at least one observable".into())?;
        for row in &self.covariance {
            require(row.len() == k, || "covariance must be square".into())?;
        }
        let scale = self.covariance.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
        for i in 0..k {
            for j in 0..i {
                require((self.covariance[i][j] - self.covariance[j][i]).abs() <= 1e-12 * scale, || {
                    "covariance must be symmetric".into()
                })?;
            }
        }
        require(is_psd(&self.covariance, 1e-12 * scale), || "covariance must be positive semidefinite".into())?;
        for p in &self.observables {
            for t in &p.terms {
                require(t.exponents.len() == k, || format!("monomial has {} exponents, expected {k}", t.exponents.len()))?;
            }
        }
        Ok(())
    }

    /// Random toy: K = AAᵀ with Gaussian A, and `n_obs` observables of up to
    /// `max_terms` monomials of degree 1..=max_degree.
    pub fn random<R: Rng>(rng: &mut R, k: usize, n_obs: usize, max_degree: u32, max_terms: usize) -> Self {
        let a: Vec<Vec<f64>> = (0..k).map(|_| (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let covariance = (0..k)
            .map(|i| (0..k).map(|j| (0..k).map(|l| a[i][l] * a[j][l]).sum()).collect())
            .collect();
        let observables = (0..n_obs)
            .map(|_| {
                let n_terms = rng.gen_range(1..=max_terms);
                let terms = (0..n_terms)
                    .map(|_| {
                        let d = rng.gen_range(1..=max_degree);
                        let mut e = vec![0u32; k];
                        for _ in 0..d {
                            e[rng.gen_range(0..k)] += 1;
                        }
                        Monomial { coeff: rng.gen_range(-1.0..1.0), exponents: e }
                    })
                    .collect();
                Polynomial { terms }
            })
            .collect();
        GaussianToyModel { covariance, observables }
    }
}

/// LDLᵀ test for positive semidefiniteness with tolerance.
fn is_psd(m: &[Vec<f64>], tol: f64) -> bool {
    let k = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    for j in 0..k {
        let d = a[j][j];
        if d < -tol {
            return false;
        }
        if d.abs() <= tol {
            if (j + 1..k).any(|i| a[i][j].abs() > tol.sqrt().max(tol)) {
                return false;
            }
            continue;
        }
        for i in j + 1..k {
            let f = a[i][j] / d;
            for l in j + 1..k {
                a[i][l] -= f * a[j][l];
            }
        }
    }
    true
}

/// Contracts one graph: every edge (s, r) pairs one derivative index at s
/// with one at r through kernel(s, r, a, b); each vertex contributes the
/// derivative tensor of its observable at zero.
fn contract_graph<K>(g: &LabeledMultigraph, k: usize, observables: &[Polynomial], kernel: &K) -> Complex64
where
    K: Fn(usize, usize, usize, usize) -> Complex64,
{
    // Expanded edge list; each entry is one line of the graph.
    let lines: Vec<(usize, usize)> = g
        .edges
        .iter()
        .flat_map(|e| std::iter::repeat_n((e.s, e.r), e.multiplicity as usize))
        .collect();
    // open: line ids whose source has been processed; states indexed by their labels.
    let mut open: Vec<usize> = Vec::new();
    // Ordered map: the accumulation order must not depend on hashing.
    let mut states: BTreeMap<Vec<u8>, Complex64> = BTreeMap::from([(Vec::new(), Complex64::from(1.0))]);
    for v in 0..g.n_vertices {
        let opening: Vec<usize> = (0..lines.len()).filter(|&l| lines[l].0 == v).collect();
        let keep: Vec<usize> = (0..open.len()).filter(|&p| lines[open[p]].1 != v).collect();
        let closing_pos: Vec<usize> = (0..open.len()).filter(|&p| lines[open[p]].1 == v).collect();
        let n_local = closing_pos.len() + opening.len();
        let combos = k.pow(n_local as u32);
        // Vertex tensor over (closing indices, opening indices).
        let mut tensor = vec![0.0; combos];
        let mut idx = vec![0usize; n_local];
        for (c, t) in tensor.iter_mut().enumerate() {
            let mut x = c;
            for slot in idx.iter_mut() {
                *slot = x % k;
                x /= k;
            }
            *t = observables[v].derivative_at_zero(&idx, k);
        }
        let mut next: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
        for (state, w) in &states {
            for (c, &t) in tensor.iter().enumerate() {
                if t == 0.0 {
                    continue;
                }
                let mut x = c;
                let mut weight = *w * t;
                for &p in &closing_pos {
                    let b = x % k;
                    x /= k;
                    let line = lines[open[p]];
                    weight *= kernel(line.0, v, state[p] as usize, b);
                }
                if weight == Complex64::from(0.0) {
                    continue;
                }
                let mut key: Vec<u8> = keep.iter().map(|&p| state[p]).collect();
                for _ in 0..opening.len() {
                    key.push((x % k) as u8);
                    x /= k;
                }
                *next.entry(key).or_insert(Complex64::from(0.0)) += weight;
            }
        }
        open = keep.iter().map(|&p| open[p]).chain(opening.iter().copied()).collect();
        states = next;
    }
    debug_assert!(open.is_empty());
    states.get(&Vec::new()).copied().unwrap_or_default() / symmetry_factor(g) as f64
}

/// Graph sum with an arbitrary pair kernel kernel(s, r, a, b) = ⟨x_a^{(s)} x_b^{(r)}⟩.
pub fn graphsum_with_kernel<K>(k: usize, observables: &[Polynomial], kernel: K, limit: u128) -> Result<Complex64>
where
    K: Fn(usize, usize, usize, usize) -> Complex64 + Sync,
{
    let degrees: Vec<u32> = observables.iter().map(|p| p.degree()).collect();
    let max_mult = degrees.iter().copied().max().unwrap_or(0);
    let bounds = EnumerationBounds { max_multiplicity: max_mult, max_degree: Some(degrees), limit };
    let graphs = enumerate_connected(observables.len(), &bounds)?;
    // Ordered collection keeps the summation order independent of scheduling.
    let terms: Vec<Complex64> = graphs.par_iter().map(|g| contract_graph(g, k, observables, &kernel)).collect();
    Ok(terms.iter().sum())
}

/// Truncated correlation ⟨A₀; …; A_n⟩_T as Σ_G (1/sym G)·F_G.
pub fn graphsum_truncated(toy: &GaussianToyModel) -> Result<f64> {
    toy.validate()?;
    let cov = &toy.covariance;
    let v = graphsum_with_kernel(toy.k(), &toy.observables, |_, _, a, b| Complex64::from(cov[a][b]), 10_000_000)?;
    Ok(v.re)
}

fn poly_mul(a: &PolyMap, b: &PolyMap) -> PolyMap {
    let mut out = PolyMap::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(e).or_insert(0.0) += ca * cb;
        }
    }
    out
}

/// ½Σ K_ij ∂_i∂_j P.
fn half_laplacian(p: &PolyMap, cov: &[Vec<f64>]) -> PolyMap {
    let k = cov.len();
    let mut out = PolyMap::new();
    for (e, c) in p {
        for i in 0..k {
            for j in 0..k {
                let mut f = e.clone();
                let mut coeff = *c * 0.5 * cov[i][j];
                if f[i] == 0 {
                    continue;
                }
                coeff *= f[i] as f64;
                f[i] -= 1;
                if f[j] == 0 {
                    continue;
                }
                coeff *= f[j] as f64;
                f[j] -= 1;
                if coeff != 0.0 {
                    *out.entry(f).or_insert(0.0) += coeff;
                }
            }
        }
    }
    out
}

/// :P: = exp(−½Σ K ∂∂)P.
fn wick_order(p: &PolyMap, cov: &[Vec<f64>]) -> PolyMap {
    let mut out = p.clone();
    let mut term = p.clone();
    let mut n = 1.0;
    while !term.is_empty() {
        term = half_laplacian(&term, cov);
        let sign = -1.0 / n;
        term.values_mut().for_each(|c| *c *= sign);
        for (e, c) in &term {
            *out.entry(e.clone()).or_insert(0.0) += c;
        }
        n += 1.0;
    }
    out
}

/// E[x^e] for a centered Gaussian by the recursion
/// E[x_a x^f] = Σ_b K_ab f_b E[x^{f − e_b}].
fn gaussian_moment(e: &[u32], cov: &[Vec<f64>], memo: &mut HashMap<Vec<u32>, f64>) -> f64 {
    let total: u32 = e.iter().sum();
    if total == 0 {
        return 1.0;
    }
    if total % 2 == 1 {
        return 0.0;
    }
    if let Some(v) = memo.get(e) {
        return *v;
    }
    let a = e.iter().position(|&x| x > 0).unwrap();
    let mut f = e.to_vec();
    f[a] -= 1;
    let mut sum = 0.0;
    for b in 0..e.len() {
        if f[b] == 0 || cov[a][b] == 0.0 {
            continue;
        }
        let mut g = f.clone();
        let mult = g[b] as f64;
        g[b] -= 1;
        sum += cov[a][b] * mult * gaussian_moment(&g, cov, memo);
    }
    memo.insert(e.to_vec(), sum);
    sum
}

/// Set partitions of {0..n} as block lists.
fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b].push(i);
            rec(i + 1, n, cur, out);
            cur[b].pop();
        }
        cur.push(vec![i]);
        rec(i + 1, n, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), &mut out);
    out
}

/// Oracle value with the absolute sum of every product entering the moments
/// and the Möbius inversion, which bounds its roundoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub scale: f64,
}

/// Joint cumulant of the Wick-ordered observables from Gaussian moments and
/// Möbius inversion over set partitions.
pub fn cumulant_oracle(toy: &GaussianToyModel) -> Result<OracleValue> {
    toy.validate()?;
    let total: u32 = toy.observables.iter().map(|p| p.degree()).sum();
    if total > 16 {
        return Err(Error::DegreeBound(format!("total degree {total} exceeds 16")));
    }
    let n = toy.observables.len();
    let cov = &toy.covariance;
    let ordered: Vec<PolyMap> = toy.observables.iter().map(|p| wick_order(&p.to_map(), cov)).collect();
    let mut memo = HashMap::new();
    let mut moments = HashMap::new();
    for mask in 1u32..(1 << n) {
        let mut prod = PolyMap::from([(vec![0u32; toy.k()], 1.0)]);
        for (i, p) in ordered.iter().enumerate() {
            if mask & (1 << i) != 0 {
                prod = poly_mul(&prod, p);
            }
        }
        let (m, abs) = prod.iter().fold((0.0, 0.0), |(m, a), (e, c)| {
            let t = c * gaussian_moment(e, cov, &mut memo);
            (m + t, a + t.abs())
        });
        moments.insert(mask, (m, abs));
    }
    let mut value = 0.0;
    let mut scale = 0.0;
    for part in set_partitions(n) {
        let b = part.len();
        let sign = if b % 2 == 1 { 1.0 } else { -1.0 };
        let weight = sign * (1..b).map(|x| x as f64).product::<f64>();
        let (term, abs) = part.iter().fold((weight, weight.abs()), |(t, a), block| {
            let (m, ma) = moments[&block.iter().fold(0u32, |m, &i| m | (1 << i))];
            (t * m, a * ma)
        });
        value += term;
        scale += abs;
    }
    Ok(OracleValue { value, scale })
}

/// Least-squares fit of ln(r·|K(u, r)|) against r.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub r_grid: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

/// Evenly spaced radii over [6, 16]/M₂.
pub fn default_decay_grid(ms: &MassSpectrum, points: usize) -> Vec<f64> {
    let m2 = ms.m2();
    (0..points)
        .map(|i| (6.0 + 10.0 * i as f64 / (points.max(2) - 1) as f64) / m2)
        .collect()
}

/// Linear least squares y ≈ a + b·x; returns (a, b, R²).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    (a, b, 1.0 - ss_res / ss_tot)
}

/// Spatial decay rate of the imaginary-time kernel at fixed u.
///
/// The largest entry modulus is fitted as ln(r·|K|) = c − rate·r, which
/// removes the 1/r prefactor of three-dimensional Yukawa tails.
pub fn cluster_decay_fit(
    ms: &MassSpectrum,
    mu: f64,
    beta: f64,
    u: f64,
    r_grid: &[f64],
    quad: &QuadratureConfig,
) -> Result<DecayFit> {
    require(r_grid.len() >= 3, || "need at least three radii".into())?;
    require(r_grid.windows(2).all(|w| w[1] > w[0]) && r_grid[0] > 0.0, || {
        "radii must be positive and increasing".into()
    })?;
    let magnitudes = r_grid
        .par_iter()
        .map(|&r| kms_kernel_imag_time(u, [r, 0.0, 0.0], ms, mu, beta, KernelPart::Full, quad).map(|k| k.max_abs()))
        .collect::<Result<Vec<f64>>>()?;
    if !magnitudes.windows(2).all(|w| w[1] < w[0]) {
        return Err(Error::FitRejected(format!("kernel magnitude is not monotone on the grid: {magnitudes:?}")));
    }
    let y: Vec<f64> = r_grid.iter().zip(&magnitudes).map(|(r, m)| (r * m).ln()).collect();
    let (intercept, slope, r_squared) = linear_fit(r_grid, &y);
    if !(r_squared >= 0.98) {
        return Err(Error::FitRejected(format!("R^2 = {r_squared} below 0.98")));
    }
    Ok(DecayFit { rate: -slope, intercept, r_squared, r_grid: r_grid.to_vec(), magnitudes })
}

/// Imaginary times and positions of n insertions after the KMS cyclic shift
/// with pivot m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReorderedArguments {
    pub pivot: usize,
    pub v: Vec<f64>,
    pub y: Vec<[f64; 3]>,
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Maps (u₁..u_n, x₁..x_n), with u₀ = 0 and x₀ = 0 implicit, to
/// v = (u_{m+1} − u_m, …, u_n − u_m, β − u_m, β + u₁ − u_m, …, β + u_{m−1} − u_m)
/// y = (x_{m+1} − x_m, …, x_n − x_m, −x_m, x₁ − x_m, …, x_{m−1} − x_m).
pub fn kms_reorder(u: &[f64], x: &[[f64; 3]], beta: f64, pivot: usize) -> Result<ReorderedArguments> {
    let n = u.len();
    require(x.len() == n, || "u and x lengths differ".into())?;
    require(pivot >= 1 && pivot <= n, || format!("pivot {pivot} outside 1..={n}"))?;
    let um = u[pivot - 1];
    let xm = x[pivot - 1];
    let mut v = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for j in pivot..n {
        v.push(u[j] - um);
        y.push(sub3(x[j], xm));
    }
    v.push(beta - um);
    y.push([-xm[0], -xm[1], -xm[2]]);
    for i in 0..pivot - 1 {
        v.push(beta + u[i] - um);
        y.push(sub3(x[i], xm));
    }
    Ok(ReorderedArguments { pivot, v, y })
}

/// Inverse of [`kms_reorder`].
pub fn kms_reorder_inverse(args: &ReorderedArguments, beta: f64) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
    let n = args.v.len();
    let m = args.pivot;
    require(m >= 1 && m <= n && args.y.len() == n, || "inconsistent reordered arguments".into())?;
    let origin = n - m;
    let um = beta - args.v[origin];
    let xm = [-args.y[origin][0], -args.y[origin][1], -args.y[origin][2]];
    let mut u = vec![0.0; n];
    let mut x = vec![[0.0; 3]; n];
    u[m - 1] = um;
    x[m - 1] = xm;
    for j in 1..=n - m {
        u[m - 1 + j] = args.v[j - 1] + um;
        x[m - 1 + j] = add3(args.y[j - 1], xm);
    }
    for i in 1..m {
        u[i - 1] = args.v[origin + i] - beta + um;
        x[i - 1] = add3(args.y[origin + i], xm);
    }
    Ok((u, x))
}

/// Pivot with u_m − u_{m−1} ≥ β/(n+1) (largest gap, u₀ = 0), or `None` when
/// β − u_n already satisfies the bound.
pub fn choose_pivot(u: &[f64], beta: f64) -> Option<usize> {
    let n = u.len();
    let bound = beta / (n as f64 + 1.0);
    if n == 0 || beta - u[n - 1] >= bound {
        return None;
    }
    let mut best = (0.0, 1);
    let mut prev = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        if ui - prev > best.0 {
            best = (ui - prev, i + 1);
        }
        prev = ui;
    }
    Some(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent brute force: every multiplicity vector, then filters.
    fn brute_force_count(n: usize, max_mult: u32, caps: Option<&[u32]>) -> usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|s| (s + 1..n).map(move |r| (s, r))).collect();
        let total = (max_mult as usize + 1).pow(pairs.len() as u32);
        let mut count = 0;
        for code in 0..total {
            let mut c = code;
            let mut deg = vec![0u32; n];
            let mut adj = vec![vec![false; n]; n];
            for &(s, r) in &pairs {
                let l = (c % (max_mult as usize + 1)) as u32;
                c /= max_mult as usize + 1;
                deg[s] += l;
                deg[r] += l;
                if l > 0 {
                    adj[s][r] = true;
                    adj[r][s] = true;
                }
            }
            if let Some(caps) = caps {
                if deg.iter().zip(caps).any(|(d, c)| d > c) {
                    continue;
                }
            }
            // Depth-first reachability from 0.
            let mut seen = vec![false; n];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(v) = stack.pop() {
                for w in 0..n {
                    if adj[v][w] && !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            if seen.iter().all(|&s| s) {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn enumeration_examples() {
        assert_eq!(enumerate_connected(2, &EnumerationBounds::new(3)).unwrap().len(), 3);
        let tri = enumerate_connected(3, &EnumerationBounds::new(1)).unwrap();
        assert_eq!(tri.len(), 4);
        let one = enumerate_connected(1, &EnumerationBounds::new(5)).unwrap();
        assert_eq!(one, vec![LabeledMultigraph { n_vertices: 1, edges: vec![] }]);
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for n in 1..=4 {
            for b in 1..=3 {
                let got = enumerate_connected(n, &EnumerationBounds::new(b)).unwrap();
                assert_eq!(got.len(), brute_force_count(n, b, None), "n={n} b={b}");
                let mut sorted = got.clone();
                sorted.dedup();
                assert_eq!(sorted.len(), got.len());
            }
        }
        let caps = [2, 3, 1, 2];
        let got = enumerate_connected(4, &EnumerationBounds::new(3).with_degrees(caps.to_vec())).unwrap();
        assert_eq!(got.len(), brute_force_count(4, 3, Some(&caps)));
    }

    #[test]
    fn explosion_guard() {
        let b = EnumerationBounds { limit: 1000, ..EnumerationBounds::new(4) };
        assert!(matches!(enumerate_connected(5, &b), Err(Error::TooManyGraphs { .. })));
    }

    #[test]
    fn symmetry_factors() {
        let g = |edges: Vec<(usize, usize, u32)>| {
            LabeledMultigraph::new(3, edges.into_iter().map(|(s, r, l)| EdgeBundle { s, r, multiplicity: l }).collect())
                .unwrap()
        };
        assert_eq!(symmetry_factor(&g(vec![(0, 1, 1)])), 1);
        assert_eq!(symmetry_factor(&g(vec![(0, 1, 2)])), 2);
        assert_eq!(symmetry_factor(&g(vec![(0, 1, 2), (1, 2, 3)])), 12);
        assert!(LabeledMultigraph::new(2, vec![EdgeBundle { s: 1, r: 1, multiplicity: 1 }]).is_err());
    }

    fn x_pow(n: u32) -> Polynomial {
        Polynomial::monomial(1.0, vec![n])
    }

    #[test]
    fn toy_examples() {
        let k = 0.7;
        let toy = GaussianToyModel::new(vec![vec![k]], vec![x_pow(2), x_pow(2)]).unwrap();
        assert_relative_eq!(graphsum_truncated(&toy).unwrap(), 2.0 * k * k, max_relative = 1e-15);
        assert_relative_eq!(cumulant_oracle(&toy).unwrap().value, 2.0 * k * k, max_relative = 1e-14);
        let toy = GaussianToyModel::new(vec![vec![k]], vec![x_pow(1), x_pow(1)]).unwrap();
        assert_relative_eq!(graphsum_truncated(&toy).unwrap(), k, max_relative = 1e-15);
        let toy = GaussianToyModel::new(vec![vec![k]], vec![x_pow(2), x_pow(2), x_pow(2)]).unwrap();
        assert_relative_eq!(graphsum_truncated(&toy).unwrap(), 8.0 * k.powi(3), max_relative = 1e-14);
        assert_relative_eq!(cumulant_oracle(&toy).unwrap().value, 8.0 * k.powi(3), max_relative = 1e-13);
        // One vertex: the mean of the Wick-ordered observable is its value at zero.
        let p = Polynomial::new(vec![
            Monomial { coeff: 1.5, exponents: vec![0] },
            Monomial { coeff: 2.0, exponents: vec![2] },
        ]);
        let toy = GaussianToyModel::new(vec![vec![k]], vec![p]).unwrap();
        assert_eq!(graphsum_truncated(&toy).unwrap(), 1.5);
        assert_relative_eq!(cumulant_oracle(&toy).unwrap().value, 1.5, max_relative = 1e-15);
        // Third cumulant of linear observables vanishes.
        let cov = vec![vec![1.0, 0.3], vec![0.3, 2.0]];
        let lin = |a: f64, b: f64| {
            Polynomial::new(vec![Monomial { coeff: a, exponents: vec![1, 0] }, Monomial { coeff: b, exponents: vec![0, 1] }])
        };
        let toy = GaussianToyModel::new(cov, vec![lin(1.0, 0.5), lin(-0.2, 1.0), lin(0.7, 0.7)]).unwrap();
        assert_eq!(cumulant_oracle(&toy).unwrap().value.abs() < 1e-15, true);
        assert_eq!(graphsum_truncated(&toy).unwrap(), 0.0);
    }

    #[test]
    fn wick_ordering_removes_self_contractions() {
        // :x⁴: = x⁴ − 6Kx² + 3K²
        let cov = vec![vec![0.5]];
        let w = wick_order(&x_pow(4).to_map(), &cov);
        assert_relative_eq!(w[&vec![2]], -3.0, max_relative = 1e-15);
        assert_relative_eq!(w[&vec![0]], 0.75, max_relative = 1e-15);
        let mut memo = HashMap::new();
        assert_relative_eq!(gaussian_moment(&[4], &cov, &mut memo), 0.75, max_relative = 1e-15);
        assert_relative_eq!(gaussian_moment(&[6], &cov, &mut memo), 15.0 * 0.125, max_relative = 1e-15);
    }

    #[test]
    fn set_partition_counts_are_bell_numbers() {
        let bell = [1, 1, 2, 5, 15, 52, 203];
        for (n, &b) in bell.iter().enumerate().skip(1) {
            assert_eq!(set_partitions(n).len(), b);
        }
    }

    #[test]
    fn graphsum_matches_oracle_on_random_toys() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let k = rng.gen_range(1..=3);
            let n_obs = rng.gen_range(1..=4);
            let toy = GaussianToyModel::random(&mut rng, k, n_obs, 4, 3);
            let g = graphsum_truncated(&toy).unwrap();
            let o = cumulant_oracle(&toy).unwrap();
            let tol = 1e-10 * o.value.abs() + 64.0 * f64::EPSILON * o.scale;
            assert!((g - o.value).abs() <= tol, "{g} vs {} (scale {})", o.value, o.scale);
        }
    }

    #[test]
    fn degree_guard() {
        let toy = GaussianToyModel::new(vec![vec![1.0]], vec![x_pow(9), x_pow(8)]).unwrap();
        assert!(matches!(cumulant_oracle(&toy), Err(Error::DegreeBound(_))));
    }

    #[test]
    fn invalid_covariance() {
        assert!(GaussianToyModel::new(vec![vec![1.0, 2.0], vec![2.0, 1.0]], vec![x_pow(1)]).is_err());
        assert!(GaussianToyModel::new(vec![vec![1.0, 0.5], vec![0.4, 1.0]], vec![x_pow(1)]).is_err());
    }

    #[test]
    fn decay_fit_tracks_lightest_mass() {
        let q = QuadratureConfig::default();
        let ms = MassSpectrum::from_masses(0.0, 2.0, 0.25).unwrap();
        let grid = default_decay_grid(&ms, 6);
        let fit = cluster_decay_fit(&ms, 0.6, 1.0, 0.5, &grid, &q).unwrap();
        assert!(fit.r_squared > 0.999);
        assert!((fit.rate / ms.m2() - 1.0).abs() < 0.05, "rate {}", fit.rate);
        let heavy = MassSpectrum::from_masses(0.0, 8.0, 1.0).unwrap();
        let fit2 = cluster_decay_fit(&heavy, 1.2, 0.5, 0.25, &grid.iter().map(|r| r / 2.0).collect::<Vec<_>>(), &q).unwrap();
        assert_relative_eq!(fit2.rate / fit.rate, 2.0, max_relative = 0.05);
    }

    #[test]
    fn pivot_choice() {
        assert_eq!(choose_pivot(&[0.1, 0.2], 1.0), None);
        let m = choose_pivot(&[0.1, 0.7, 0.95], 1.0).unwrap();
        assert_eq!(m, 2);
        let r = kms_reorder(&[0.1, 0.7, 0.95], &[[0.0; 3]; 3], 1.0, m).unwrap();
        assert!(1.0 - r.v.last().unwrap() >= 1.0 / 4.0);
    }

    proptest! {
        #[test]
        fn reorder_is_a_bijection(raw in prop::collection::vec(0.0f64..1.0, 1..6),
                                  pos in prop::collection::vec(-3.0f64..3.0, 18),
                                  pivot_seed in 0usize..100, beta in 0.5f64..3.0) {
            let mut u: Vec<f64> = raw.iter().map(|x| x * beta).collect();
            u.sort_by(f64::total_cmp);
            let n = u.len();
            let x: Vec<[f64; 3]> = (0..n).map(|i| [pos[3 * i], pos[3 * i + 1], pos[3 * i + 2]]).collect();
            let m = 1 + pivot_seed % n;
            let r = kms_reorder(&u, &x, beta, m).unwrap();
            // Stays on the ordered simplex.
            prop_assert!(r.v.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            prop_assert!(r.v.iter().all(|&v| v >= -1e-12 && v <= beta + 1e-12));
            let prev = if m >= 2 { u[m - 2] } else { 0.0 };
            prop_assert!((beta - r.v[n - 1] - (u[m - 1] - prev)).abs() < 1e-12);
            let (u2, x2) = kms_reorder_inverse(&r, beta).unwrap();
            for i in 0..n {
                prop_assert!((u2[i] - u[i]).abs() < 1e-12);
                for c in 0..3 { prop_assert!((x2[i][c] - x[i][c]).abs() < 1e-12); }
            }
        }

        #[test]
        fn symmetry_factor_is_multiplicative(a in 1u32..5, b in 1u32..5) {
            let single = |l| LabeledMultigraph::new(4, vec![EdgeBundle { s: 0, r: 1, multiplicity: l }]).unwrap();
            let both = LabeledMultigraph::new(4, vec![
                EdgeBundle { s: 0, r: 1, multiplicity: a },
                EdgeBundle { s: 2, r: 3, multiplicity: b },
            ]).unwrap();
            prop_assert_eq!(symmetry_factor(&both), symmetry_factor(&single(a)) * symmetry_factor(&single(b)));
        }
    }
}
