use std::path::Path;
use std::process::Command;

const GAPLESS: &str = "m = 1.0\nmu = 1.4142135623730951\nlambda = 1.0\nbeta = 1.0\n";

fn run(args: &[&str], config: &str, out: &Path) -> i32 {
    let cfg = out.with_extension("toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_kmsbec"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn body(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    body(path).lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn dispersion_starts_at_the_massless_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    assert_eq!(run(&["dispersion"], GAPLESS, &out), 0);
    let r = rows(&out.join("dispersion.csv"));
    assert_eq!(num(&r[0][0]), 0.0);
    assert_eq!(num(&r[0][2]), 0.0);
    assert!(num(&r[0][1]) > 0.0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert!(out.join("dispersion.gp").exists());
}

#[test]
fn tc_solve_inverts_thermal_scan() {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("scan");
    let cfg = format!("{GAPLESS}[thermal_scan]\nbeta_grid = [1.0]\n");
    assert_eq!(run(&["thermal-scan"], &cfg, &scan), 0);
    let rho = num(&rows(&scan.join("thermal_scan.csv"))[0][4]);
    let tc = dir.path().join("tc");
    let cfg = format!("{GAPLESS}[tc_solve]\nrho_target = {rho:e}\n");
    assert_eq!(run(&["tc-solve"], &cfg, &tc), 0);
    let t = num(&rows(&tc.join("tc_solve.csv"))[0][1]);
    assert!((t - 1.0).abs() < 1e-6, "T_cr = {t}");
}

#[test]
fn graphs_counts_three_vertex_simple_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let cfg = format!("{GAPLESS}[graphs]\nn_vertices = 3\nmax_multiplicity = 1\ntoys = 20\n");
    assert_eq!(run(&["graphs"], &cfg, &out), 0);
    assert_eq!(rows(&out.join("graphs.csv")).len(), 4);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("graphs.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 4);
    assert!(rows(&out.join("graphs_oracle.csv")).iter().all(|r| r[7] == "true"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    assert_eq!(run(&["dispersion"], "mas = 1.0\nmu = 1.0\nlambda = 1.0\nbeta = 1.0\n", &out), 2);
    let err: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(err["exit_code"], 2);
    let msg = err["message"].as_str().unwrap();
    assert!(msg.contains("line 1") && msg.contains("`m`"), "{msg}");
}

#[test]
fn invalid_parameters_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["dispersion"], "m = 1.0\nmu = 1.0\nlambda = -1.0\nbeta = 1.0\n", &dir.path().join("a")), 2);
    assert_eq!(run(&["decay-fit"], GAPLESS, &dir.path().join("b")), 2);
}

#[test]
fn reruns_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{GAPLESS}seed = 7\n[graphs]\ntoys = 30\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&["graphs", "--threads", "1"], &cfg, &a), 0);
    assert_eq!(run(&["graphs", "--threads", "4"], &cfg, &b), 0);
    for f in ["graphs.csv", "graphs_oracle.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn goldstone_run_reports_the_condensate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let cfg = format!("{GAPLESS}[goldstone]\nr_grid = [10.0, 20.0]\nmodes = 2\nsamples = 4\n");
    assert_eq!(run(&["goldstone"], &cfg, &out), 0);
    for r in rows(&out.join("goldstone_commutator.csv")) {
        assert!((num(&r[3]) - 1.0).abs() < 1e-8);
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    for name in ["condensate.toml", "gapped.toml"] {
        let text = std::fs::read_to_string(format!("{dir}/{name}")).unwrap();
        kmsbec::cli::parse_config(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
