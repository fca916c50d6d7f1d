//! Run configuration: strict TOML parsing, defaults and validation.

use crate::model::ModelParams;
use crate::quad::QuadratureConfig;
use serde::{Deserialize, Serialize};

/// Either an explicit list or an evenly spaced (optionally logarithmic) range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range {
        min: f64,
        max: f64,
        points: usize,
        #[serde(default)]
        log: bool,
    },
}

impl Grid {
    pub fn linear(min: f64, max: f64, points: usize) -> Self {
        Grid::Range { min, max, points, log: false }
    }

    pub fn logarithmic(min: f64, max: f64, points: usize) -> Self {
        Grid::Range { min, max, points, log: true }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Range { min, max, points, log } => {
                if *points == 1 {
                    return vec![*min];
                }
                let n = (*points - 1) as f64;
                (0..*points)
                    .map(|i| {
                        let s = i as f64 / n;
                        if *log {
                            (min.ln() + s * (max.ln() - min.ln())).exp()
                        } else {
                            min + s * (max - min)
                        }
                    })
                    .collect()
            }
        }
    }

    fn validate(&self, name: &str) -> Result<(), String> {
        if let Grid::Range { min, max, points, log } = self {
            if *points == 0 {
                return Err(format!("{name}: points must be positive"));
            }
            if *log && !(*min > 0.0) {
                return Err(format!("{name}: logarithmic grid needs min > 0"));
            }
            if *points > 1 && !(max > min) {
                return Err(format!("{name}: max must exceed min"));
            }
        }
        let v = self.values();
        if v.is_empty() {
            return Err(format!("{name} must be nonempty"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(format!("{name} must be finite"));
        }
        if !v.windows(2).all(|w| w[1] > w[0]) {
            return Err(format!("{name} must be strictly increasing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionSection {
    /// Momenta (E).
    pub p_grid: Grid,
}

impl Default for DispersionSection {
    fn default() -> Self {
        DispersionSection { p_grid: Grid::linear(0.0, 5.0, 51) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermalScanSection {
    /// Inverse temperatures (1/E).
    pub beta_grid: Grid,
}

impl Default for ThermalScanSection {
    fn default() -> Self {
        ThermalScanSection { beta_grid: Grid::logarithmic(0.1, 10.0, 50) }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TcSolveSection {
    /// Target charge density (E³); defaults to ρ_cr at the configured β.
    pub rho_target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GoldstoneSection {
    /// Spatial cutoff radii in units of 1/M₁.
    pub r_grid: Grid,
    /// Time-smearing half-width in units of 1/M₁.
    pub eps: f64,
    /// Gaussian frequency-window width for the spectral check, in units of M₁.
    pub window_width: f64,
    /// Plane waves in the divergence test configuration.
    pub modes: usize,
    /// Sample points for the divergence identities.
    pub samples: usize,
}

impl Default for GoldstoneSection {
    fn default() -> Self {
        GoldstoneSection {
            r_grid: Grid::Values(vec![10.0, 20.0, 40.0, 80.0]),
            eps: 0.1,
            window_width: 0.5,
            modes: 4,
            samples: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphsSection {
    pub n_vertices: usize,
    pub max_multiplicity: u32,
    pub max_degree: Option<Vec<u32>>,
    pub limit: u64,
    /// Random Gaussian toys for the oracle cross-check.
    pub toys: usize,
    pub k_max: usize,
    pub degree_max: u32,
    pub observables_max: usize,
}

impl Default for GraphsSection {
    fn default() -> Self {
        GraphsSection {
            n_vertices: 3,
            max_multiplicity: 1,
            max_degree: None,
            limit: 10_000_000,
            toys: 200,
            k_max: 3,
            degree_max: 4,
            observables_max: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HadamardSection {
    /// Time separations for the coefficient tables (1/E).
    pub x0_grid: Grid,
    /// Finite-difference steps for the transport ladder (1/E).
    pub h_grid: Grid,
    /// Time separation at which the transport residual is probed (1/E).
    pub probe_x0: f64,
    /// Squared momenta for the first-order ΔΦ² scaling table (E²).
    pub p_sq_grid: Grid,
    /// Renormalization parameter of ΔΦ² (E²).
    pub a: f64,
}

impl Default for HadamardSection {
    fn default() -> Self {
        HadamardSection {
            x0_grid: Grid::linear(0.0, 2.0, 21),
            h_grid: Grid::Values((0..8).rev().map(|i| 0.1 / 2f64.powi(i)).collect()),
            probe_x0: 0.7,
            p_sq_grid: Grid::Values((1..=6).map(|i| -(10f64.powi(-i))).collect()),
            a: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayFitSection {
    /// Imaginary times as fractions of β.
    pub u_fractions: Grid,
    /// Radii in units of 1/M₂.
    pub r_grid: Grid,
}

impl Default for DecayFitSection {
    fn default() -> Self {
        DecayFitSection { u_fractions: Grid::Values(vec![0.25, 0.5]), r_grid: Grid::linear(6.0, 16.0, 8) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub m: f64,
    pub mu: f64,
    pub lambda: f64,
    pub beta: f64,
    #[serde(default)]
    pub m_v: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default = "yes")]
    pub plot_script: bool,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub dispersion: DispersionSection,
    #[serde(default)]
    pub thermal_scan: ThermalScanSection,
    #[serde(default)]
    pub tc_solve: TcSolveSection,
    #[serde(default)]
    pub goldstone: GoldstoneSection,
    #[serde(default)]
    pub graphs: GraphsSection,
    #[serde(default)]
    pub hadamard: HadamardSection,
    #[serde(default)]
    pub decay_fit: DecayFitSection,
}

fn yes() -> bool {
    true
}

const TOP_KEYS: &[&str] = &[
    "m", "mu", "lambda", "beta", "m_v", "seed", "out_dir", "plot_script", "quadrature", "dispersion",
    "thermal_scan", "tc_solve", "goldstone", "graphs", "hadamard", "decay_fit",
];

fn section_keys(section: &str) -> Option<&'static [&'static str]> {
    Some(match section {
        "quadrature" => &["rtol", "atol", "p_cutoff", "max_subdivisions", "scheme"],
        "dispersion" => &["p_grid"],
        "thermal_scan" => &["beta_grid"],
        "tc_solve" => &["rho_target"],
        "goldstone" => &["r_grid", "eps", "window_width", "modes", "samples"],
        "graphs" => &[
            "n_vertices", "max_multiplicity", "max_degree", "limit", "toys", "k_max", "degree_max", "observables_max",
        ],
        "hadamard" => &["x0_grid", "h_grid", "probe_x0", "p_sq_grid", "a"],
        "decay_fit" => &["u_fractions", "r_grid"],
        _ => return None,
    })
}

fn suggestion(key: &str, known: &[&str]) -> Option<String> {
    known
        .iter()
        .map(|k| (strsim::levenshtein(key, k), *k))
        .filter(|(d, k)| *d <= 2.max(k.len() / 3))
        .min()
        .map(|(_, k)| k.to_string())
}

fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(key).is_some_and(|rest| {
            let rest = rest.trim_start();
            rest.starts_with('=') || (t.starts_with('[') && rest.starts_with(']'))
        }) || t.strip_prefix('[').is_some_and(|r| r.trim_start().starts_with(key) && r.contains(']'))
    })
    .map(|i| i + 1)
}

fn unknown_key(text: &str, key: &str, section: Option<&str>, known: &[&str]) -> String {
    let place = match section {
        Some(s) => format!("unknown key `{key}` in [{s}]"),
        None => format!("unknown key `{key}`"),
    };
    let line = line_of(text, key).map(|l| format!("line {l}: ")).unwrap_or_default();
    match suggestion(key, known) {
        Some(s) => format!("{line}{place} (did you mean `{s}`?)"),
        None => format!("{line}{place}; expected one of: {}", known.join(", ")),
    }
}

/// Parses and validates a configuration document, rejecting unknown keys.
pub fn parse_config(text: &str) -> Result<RunConfig, String> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| format!("parse error: {e}"))?;
    for (key, value) in &table {
        if !TOP_KEYS.contains(&key.as_str()) {
            return Err(unknown_key(text, key, None, TOP_KEYS));
        }
        if let (Some(known), Some(inner)) = (section_keys(key), value.as_table()) {
            for k in inner.keys() {
                if !known.contains(&k.as_str()) {
                    return Err(unknown_key(text, k, Some(key), known));
                }
            }
        }
    }
    let cfg: RunConfig = toml::from_str(text).map_err(|e| format!("parse error: {e}"))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn model(&self) -> Result<ModelParams, String> {
        ModelParams::with_virtual_mass(self.m, self.mu, self.lambda, self.beta, self.m_v).map_err(|e| e.to_string())
    }

    pub fn validate(&self) -> Result<(), String> {
        let params = self.model()?;
        params.spectrum().map_err(|e| e.to_string())?;
        self.quadrature.validate().map_err(|e| e.to_string())?;
        self.dispersion.p_grid.validate("dispersion.p_grid")?;
        if self.dispersion.p_grid.values()[0] < 0.0 {
            return Err("dispersion.p_grid must be nonnegative".into());
        }
        self.thermal_scan.beta_grid.validate("thermal_scan.beta_grid")?;
        if self.thermal_scan.beta_grid.values()[0] <= 0.0 {
            return Err("thermal_scan.beta_grid must be positive".into());
        }
        if let Some(r) = self.tc_solve.rho_target {
            if !(r > 0.0 && r.is_finite()) {
                return Err("tc_solve.rho_target must be positive".into());
            }
        }
        let g = &self.goldstone;
        g.r_grid.validate("goldstone.r_grid")?;
        if g.r_grid.values()[0] <= 0.0 {
            return Err("goldstone.r_grid must be positive".into());
        }
        if !(g.eps > 0.0 && g.eps.is_finite()) || !(g.window_width > 0.0 && g.window_width.is_finite()) {
            return Err("goldstone.eps and goldstone.window_width must be positive".into());
        }
        if g.modes == 0 || g.samples == 0 {
            return Err("goldstone.modes and goldstone.samples must be positive".into());
        }
        let gr = &self.graphs;
        if gr.n_vertices == 0 {
            return Err("graphs.n_vertices must be positive".into());
        }
        if gr.k_max == 0 || gr.degree_max == 0 || gr.observables_max == 0 {
            return Err("graphs.k_max, graphs.degree_max and graphs.observables_max must be positive".into());
        }
        if let Some(d) = &gr.max_degree {
            if d.len() != gr.n_vertices {
                return Err(format!("graphs.max_degree has {} entries for {} vertices", d.len(), gr.n_vertices));
            }
        }
        let h = &self.hadamard;
        h.x0_grid.validate("hadamard.x0_grid")?;
        h.h_grid.validate("hadamard.h_grid")?;
        h.p_sq_grid.validate("hadamard.p_sq_grid")?;
        if h.h_grid.values()[0] <= 0.0 {
            return Err("hadamard.h_grid must be positive".into());
        }
        if !(h.a >= 0.0 && h.a.is_finite()) || !h.probe_x0.is_finite() {
            return Err("hadamard.a must be >= 0 and hadamard.probe_x0 finite".into());
        }
        let d = &self.decay_fit;
        d.u_fractions.validate("decay_fit.u_fractions")?;
        d.r_grid.validate("decay_fit.r_grid")?;
        if d.u_fractions.values().iter().any(|&u| !(u > 0.0 && u < 1.0)) {
            return Err("decay_fit.u_fractions must lie in (0, 1)".into());
        }
        if d.r_grid.values()[0] <= 0.0 {
            return Err("decay_fit.r_grid must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "m = 1\nmu = 1.4142135\nlambda = 1\nbeta = 1\n";

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.m_v, 0.0);
        assert_eq!(cfg.graphs.n_vertices, 3);
        assert_eq!(cfg.quadrature, QuadratureConfig::default());
        let ms = cfg.model().unwrap().spectrum().unwrap();
        assert!(ms.phi > 0.0 && ms.m2_sq == 0.0);
    }

    #[test]
    fn negative_beta_is_rejected() {
        let err = parse_config("m = 1\nmu = 1.4\nlambda = 1\nbeta = -1\n").unwrap_err();
        assert!(err.contains("beta must be positive"), "{err}");
    }

    #[test]
    fn unknown_key_suggests_nearest() {
        let err = parse_config("mas = 1\nmu = 1.4\nlambda = 1\nbeta = 1\n").unwrap_err();
        assert!(err.contains("`mas`") && err.contains("did you mean `m`"), "{err}");
        assert!(err.starts_with("line 1"), "{err}");
        let err = parse_config(&format!("{MINIMAL}[graphs]\nn_vertex = 2\n")).unwrap_err();
        assert!(err.contains("did you mean `n_vertices`") && err.contains("line 6"), "{err}");
    }

    #[test]
    fn grids_parse_in_both_forms() {
        let cfg = parse_config(&format!(
            "{MINIMAL}[thermal_scan]\nbeta_grid = {{ min = 0.5, max = 2.0, points = 3, log = true }}\n[dispersion]\np_grid = [0.0, 0.5]\n"
        ))
        .unwrap();
        let b = cfg.thermal_scan.beta_grid.values();
        assert!((b[1] - 1.0).abs() < 1e-15 && b.len() == 3);
        assert_eq!(cfg.dispersion.p_grid.values(), vec![0.0, 0.5]);
        let err = parse_config(&format!("{MINIMAL}[dispersion]\np_grid = [0.5, 0.1]\n")).unwrap_err();
        assert!(err.contains("strictly increasing"));
    }

    #[test]
    fn syntax_errors_report_position() {
        let err = parse_config("m = \n").unwrap_err();
        assert!(err.contains("line 1"), "{err}");
    }
}
