use super::config::RunConfig;
use super::output::{Cell, OutputDir, Table};
use super::{CliError, Command};
use crate::goldstone::{
    charge_commutator, divergence_residual, goldstone_spectral_check, plane_wave_mode, DivergenceOrder,
    FieldConfiguration, FrequencyWindow,
};
use crate::graphs::{
    cluster_decay_fit, cumulant_oracle, enumerate_connected, graphsum_truncated, EnumerationBounds, GaussianToyModel,
};
use crate::hadamard::{delta_phi2_first_order, observed_orders, transport_residual, u_coeff, v0_coeff, v1_coinciding};
use crate::model::{omega_pm, sound_speed, MassSpectrum, Momentum3};
use crate::propagators::Sign;
use crate::thermal::{critical_temperature, thermal_expectations};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub(super) fn dispatch(command: Command, cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let params = cfg.model().map_err(CliError::Config)?;
    let ms = params.spectrum()?;
    match command {
        Command::Dispersion => dispersion(cfg, &ms, out),
        Command::ThermalScan => thermal_scan(cfg, &ms, out),
        Command::TcSolve => tc_solve(cfg, &ms, out),
        Command::Goldstone => goldstone(cfg, &ms, out),
        Command::Graphs => graphs(cfg, out),
        Command::HadamardCheck => hadamard_check(cfg, &ms, out),
        Command::DecayFit => decay_fit(cfg, &ms, out),
    }
}

fn spectrum_meta(t: &mut Table, cfg: &RunConfig, ms: &MassSpectrum) {
    t.meta("model", format!("m={} mu={} lambda={} beta={} m_v={}", cfg.m, cfg.mu, cfg.lambda, cfg.beta, cfg.m_v))
        .meta("phi", ms.phi)
        .meta("m1_sq", ms.m1_sq)
        .meta("m2_sq", ms.m2_sq);
}

fn plot(out: &mut OutputDir, cfg: &RunConfig, t: &Table, x: usize, ys: &[usize], log: &str) -> Result<(), CliError> {
    if cfg.plot_script {
        out.write_plot(t, x, ys, log)?;
    }
    Ok(())
}

fn dispersion(cfg: &RunConfig, ms: &MassSpectrum, out: &mut OutputDir) -> Result<(), CliError> {
    let mut t = Table::new("dispersion", &["p[E]", "omega_plus[E]", "omega_minus[E]"]);
    spectrum_meta(&mut t, cfg, ms);
    if ms.is_gapless() && ms.phi > 0.0 {
        t.meta("sound_speed", sound_speed(ms, cfg.mu)?);
    }
    for p in cfg.dispersion.p_grid.values() {
        let (a, b) = omega_pm(ms, cfg.mu, p)?;
        t.push(vec![p.into(), a.into(), b.into()]);
    }
    out.lap("dispersion");
    out.write_table(&t)?;
    plot(out, cfg, &t, 0, &[1, 2], "")
}

fn thermal_scan(cfg: &RunConfig, ms: &MassSpectrum, out: &mut OutputDir) -> Result<(), CliError> {
    let betas = cfg.thermal_scan.beta_grid.values();
    let rows = betas
        .par_iter()
        .map(|&b| thermal_expectations(ms, cfg.mu, b, &cfg.quadrature))
        .collect::<crate::Result<Vec<_>>>()?;
    out.lap("thermal integrals");
    let mut t = Table::new(
        "thermal_scan",
        &[
            "beta[1/E]", "T[E]", "psi_sq[E^2]", "j_tilde[E^3]", "rho_cr[E^3]", "m_b1_sq[E^2]", "m_b2_sq[E^2]",
            "condensate_charge[E^3]", "total_charge[E^3]",
        ],
    );
    spectrum_meta(&mut t, cfg, ms);
    for (b, o) in betas.iter().zip(&rows) {
        t.push(vec![
            (*b).into(),
            (1.0 / b).into(),
            o.psi_sq.into(),
            o.j_tilde.into(),
            o.rho_cr.into(),
            o.m_b1_sq.into(),
            o.m_b2_sq.into(),
            o.condensate_charge.into(),
            o.total_charge().into(),
        ]);
    }
    out.write_table(&t)?;
    plot(out, cfg, &t, 1, &[4], "xy")
}

fn tc_solve(cfg: &RunConfig, ms: &MassSpectrum, out: &mut OutputDir) -> Result<(), CliError> {
    let params = cfg.model().map_err(CliError::Config)?;
    let target = match cfg.tc_solve.rho_target {
        Some(r) => r,
        None => thermal_expectations(ms, cfg.mu, cfg.beta, &cfg.quadrature)?.rho_cr,
    };
    let tc = critical_temperature(&params, target, &cfg.quadrature)?;
    out.lap("root solve");
    let mut t = Table::new("tc_solve", &["rho_target[E^3]", "T_cr[E]", "beta_cr[1/E]", "rho_at_root[E^3]", "iterations"]);
    spectrum_meta(&mut t, cfg, ms);
    t.meta("target_source", if cfg.tc_solve.rho_target.is_some() { "config" } else { "rho_cr at configured beta" });
    t.push(vec![target.into(), tc.t_cr.into(), (1.0 / tc.t_cr).into(), tc.rho_at_root.into(), tc.iterations.into()]);
    Ok(out.write_table(&t)?)
}

fn goldstone(cfg: &RunConfig, ms: &MassSpectrum, out: &mut OutputDir) -> Result<(), CliError> {
    let g = &cfg.goldstone;
    let m1 = ms.m1();
    let eps = g.eps / m1;
    let radii: Vec<f64> = g.r_grid.values().iter().map(|r| r / m1).collect();
    let results = radii
        .par_iter()
        .map(|&r| charge_commutator(r, eps, ms, cfg.mu, ms.phi, &cfg.quadrature))
        .collect::<crate::Result<Vec<_>>>()?;
    let mut t = Table::new(
        "goldstone_commutator",
        &["R[1/E]", "R_M1", "value_1", "value_2", "target_2", "quadrature_error", "pre_asymptotic"],
    );
    spectrum_meta(&mut t, cfg, ms);
    t.meta("time_half_width", eps).meta("cutoff", "smoothstep C6, outer radius 1.25R");
    let stable: Vec<f64> = results.iter().filter(|r| !r.pre_asymptotic).map(|r| r.value[1]).collect();
    let spread = stable.windows(2).map(|w| (w[1] - w[0]).abs() / w[0].abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    t.meta("r_stability", spread);
    for (r, res) in radii.iter().zip(&results) {
        t.push(vec![
            (*r).into(),
            (r * m1).into(),
            res.value[0].into(),
            res.value[1].into(),
            ms.phi.into(),
            res.quadrature_error.into(),
            res.pre_asymptotic.into(),
        ]);
    }
    out.lap("charge commutator");
    out.write_table(&t)?;

    let window = FrequencyWindow::Gaussian { width: g.window_width * m1 };
    let check = goldstone_spectral_check(&window, &radii, ms, cfg.mu, ms.phi, &cfg.quadrature)?;
    let mut s = Table::new("goldstone_spectral", &["R[1/E]", "value_2", "target", "error"]);
    spectrum_meta(&mut s, cfg, ms);
    s.meta("window", format!("gaussian width {}", g.window_width * m1))
        .meta("gapless", ms.is_gapless())
        .meta("monotone", check.monotone)
        .meta("converged", check.converged);
    for ((r, v), e) in radii.iter().zip(&check.values).zip(&check.errors) {
        s.push(vec![(*r).into(), (*v).into(), check.target.into(), (*e).into()]);
    }
    out.lap("spectral check");
    out.write_table(&s)?;
    plot(out, cfg, &s, 0, &[3], "xy")?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let modes = (0..g.modes)
        .map(|i| {
            let p = Momentum3([rng.gen_range(-1.0..1.0) * m1, rng.gen_range(-1.0..1.0) * m1, rng.gen_range(-1.0..1.0) * m1]);
            let branch = if i % 2 == 0 { Sign::Minus } else { Sign::Plus };
            let c = Complex64::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
            plane_wave_mode(branch, p, ms, cfg.mu).map(|m| (m, c))
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let field = FieldConfiguration { modes };
    let points: Vec<(f64, [f64; 3])> = (0..g.samples)
        .map(|_| {
            let x = [rng.gen_range(-5.0..5.0) / m1, rng.gen_range(-5.0..5.0) / m1, rng.gen_range(-5.0..5.0) / m1];
            (rng.gen_range(-5.0..5.0) / m1, x)
        })
        .collect();
    let mut d = Table::new("goldstone_divergence", &["order", "t", "x", "y", "z", "divergence", "closed_form", "scale"]);
    spectrum_meta(&mut d, cfg, ms);
    let mut worst: f64 = 0.0;
    for order in [DivergenceOrder::Linearized, DivergenceOrder::Full] {
        let rep = divergence_residual(&field, ms, cfg.mu, cfg.lambda, ms.phi, order, &points);
        worst = worst.max(rep.max_relative_residual);
        let name = match order {
            DivergenceOrder::Linearized => "linearized",
            DivergenceOrder::Full => "full",
        };
        for p in &rep.samples {
            d.push(vec![
                name.into(),
                p.t.into(),
                p.x[0].into(),
                p.x[1].into(),
                p.x[2].into(),
                p.divergence.into(),
                p.closed_form.into(),
                p.scale.into(),
            ]);
        }
    }
    d.meta("max_relative_residual", worst);
    out.lap("divergence identities");
    out.write_table(&d)?;
    if worst > 1e-10 {
        return Err(CliError::Invariant(format!("divergence identity residual {worst} exceeds 1e-10")));
    }
    Ok(())
}

fn edges_label(g: &crate::graphs::LabeledMultigraph) -> String {
    g.edges.iter().map(|e| format!("{}-{}x{}", e.s, e.r, e.multiplicity)).collect::<Vec<_>>().join(" ")
}

fn graphs(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let gc = &cfg.graphs;
    let bounds = EnumerationBounds {
        max_multiplicity: gc.max_multiplicity,
        max_degree: gc.max_degree.clone(),
        limit: gc.limit as u128,
    };
    let list = enumerate_connected(gc.n_vertices, &bounds)?;
    out.lap("enumeration");
    let mut t = Table::new("graphs", &["index", "edges", "edge_count", "symmetry_factor"]);
    t.meta("n_vertices", gc.n_vertices).meta("max_multiplicity", gc.max_multiplicity).meta("count", list.len());
    for (i, g) in list.iter().enumerate() {
        t.push(vec![i.into(), edges_label(g).into(), (g.edge_count() as usize).into(), Cell::S(crate::graphs::symmetry_factor(g).to_string())]);
    }
    out.write_table(&t)?;
    out.write_json("graphs.json", &list.iter().map(|g| g.to_json()).collect::<Vec<_>>())?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let toys: Vec<GaussianToyModel> = (0..gc.toys)
        .map(|_| {
            let k = rng.gen_range(1..=gc.k_max);
            let n = rng.gen_range(1..=gc.observables_max);
            GaussianToyModel::random(&mut rng, k, n, gc.degree_max, 3)
        })
        .collect();
    let checks = toys
        .par_iter()
        .map(|toy| Ok((graphsum_truncated(toy)?, cumulant_oracle(toy)?)))
        .collect::<crate::Result<Vec<_>>>()?;
    out.lap("oracle cross-check");
    let mut o = Table::new("graphs_oracle", &["toy", "k", "observables", "graphsum", "oracle", "abs_diff", "tolerance", "pass"]);
    o.meta("tolerance", "1e-10*|oracle| + 64*eps*scale");
    let mut failures = 0;
    for (i, (toy, (g, orc))) in toys.iter().zip(&checks).enumerate() {
        let tol = 1e-10 * orc.value.abs() + 64.0 * f64::EPSILON * orc.scale;
        let diff = (g - orc.value).abs();
        let pass = diff <= tol;
        failures += usize::from(!pass);
        o.push(vec![
            i.into(),
            toy.k().into(),
            toy.observables.len().into(),
            (*g).into(),
            orc.value.into(),
            diff.into(),
            tol.into(),
            pass.into(),
        ]);
    }
    o.meta("failures", failures);
    out.write_table(&o)?;
    if failures > 0 {
        return Err(CliError::Invariant(format!("{failures} toys disagree with the cumulant oracle")));
    }
    Ok(())
}

fn hadamard_check(cfg: &RunConfig, ms: &MassSpectrum, out: &mut OutputDir) -> Result<(), CliError> {
    let h = &cfg.hadamard;
    let mu = cfg.mu;
    let mut c = Table::new(
        "hadamard_coefficients",
        &[
            "x0[1/E]", "U_I", "U_sigma2_im", "V0_I_re", "V0_I_im", "V0_sigma1_re", "V0_sigma1_im", "V0_sigma2_re",
            "V0_sigma2_im", "V0_sigma3_re", "V0_sigma3_im",
        ],
    );
    spectrum_meta(&mut c, cfg, ms);
    c.meta("sigma_convention", "sigma = eta(x-y, x-y)/2, signature (-,+,+,+)");
    for x0 in h.x0_grid.values() {
        let u = u_coeff(x0, mu);
        let v = v0_coeff(x0, ms, mu);
        let mut row: Vec<Cell> = vec![x0.into(), u.c[0].re.into(), u.c[2].im.into()];
        for z in v.c {
            row.push(z.re.into());
            row.push(z.im.into());
        }
        c.push(row);
    }
    out.write_table(&c)?;

    let mut steps = h.h_grid.values();
    steps.reverse();
    let residuals = steps.iter().map(|&s| transport_residual(h.probe_x0, mu, s)).collect::<crate::Result<Vec<_>>>()?;
    let orders = observed_orders(&residuals);
    let mut l = Table::new("hadamard_transport", &["h[1/E]", "residual", "observed_order"]);
    l.meta("probe_x0", h.probe_x0);
    for (i, (s, r)) in steps.iter().zip(&residuals).enumerate() {
        let order = if i == 0 { f64::NAN } else { orders[i - 1] };
        l.push(vec![(*s).into(), (*r).into(), order.into()]);
    }
    out.write_table(&l)?;
    plot(out, cfg, &l, 0, &[1], "xy")?;

    let v1 = v1_coinciding(ms, mu);
    let mut v = Table::new("hadamard_v1", &["channel", "re", "im"]);
    for (name, z) in ["I", "sigma1", "sigma2", "sigma3"].iter().zip(v1.c) {
        v.push(vec![(*name).into(), z.re.into(), z.im.into()]);
    }
    out.write_table(&v)?;

    let mut d = Table::new("hadamard_delta_phi2", &["p_sq[E^2]", "re", "im", "abs_over_abs_p_sq", "crossed_cut"]);
    d.meta("a", h.a).meta("delta_m_sq", ms.dm_sq);
    for p_sq in h.p_sq_grid.values() {
        let r = delta_phi2_first_order(p_sq, cfg.m, ms.dm_sq, h.a, &cfg.quadrature)?;
        let ratio = if p_sq == 0.0 { 0.0 } else { r.value.norm() / p_sq.abs() };
        d.push(vec![p_sq.into(), r.value.re.into(), r.value.im.into(), ratio.into(), r.crossed_cut.into()]);
    }
    out.lap("hadamard tables");
    Ok(out.write_table(&d)?)
}

fn decay_fit(cfg: &RunConfig, ms: &MassSpectrum, out: &mut OutputDir) -> Result<(), CliError> {
    if !(ms.m2_sq > 0.0) {
        return Err(CliError::Config("decay-fit needs a gapped spectrum (M2 > 0); set m_v > 0".into()));
    }
    let m2 = ms.m2();
    let radii: Vec<f64> = cfg.decay_fit.r_grid.values().iter().map(|r| r / m2).collect();
    let mut f = Table::new("decay_fit", &["u[1/E]", "rate[E]", "rate_over_m2", "r_squared", "intercept"]);
    spectrum_meta(&mut f, cfg, ms);
    f.meta("fit", "ln(r*max|K_ij|) linear in r");
    let mut samples = Table::new("decay_samples", &["u[1/E]", "r[1/E]", "max_abs_kernel"]);
    for frac in cfg.decay_fit.u_fractions.values() {
        let u = frac * cfg.beta;
        let fit = cluster_decay_fit(ms, cfg.mu, cfg.beta, u, &radii, &cfg.quadrature)?;
        f.push(vec![u.into(), fit.rate.into(), (fit.rate / m2).into(), fit.r_squared.into(), fit.intercept.into()]);
        for (r, m) in fit.r_grid.iter().zip(&fit.magnitudes) {
            samples.push(vec![u.into(), (*r).into(), (*m).into()]);
        }
    }
    out.lap("kernel fits");
    out.write_table(&f)?;
    out.write_table(&samples)?;
    plot(out, cfg, &samples, 1, &[2], "y")
}
