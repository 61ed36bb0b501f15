//! End-to-end runs of the `hsgp` binary and of the command functions.

use std::path::{Path, PathBuf};
use std::process::Command;

use hsgp_core::diagnostics::{build_table, min_basis_functions};
use hsgp_core::KernelFamily;
use hsgp_harness::config::{ExperimentConfig, GridSettings};
use hsgp_harness::dataset::{Dataset, Split};
use hsgp_harness::experiments::{self, Diagnosis};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hsgp"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hsgp-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

fn run(args: &[&str]) -> std::process::Output {
    bin().args(args).output().unwrap()
}

#[test]
fn simulate_defaults_and_reproducibility() {
    let dir = scratch("simulate");
    let cfg = write_config(&dir, "c.json", r#"{"seed": 5}"#);
    let (a, b) = (dir.join("a.csv"), dir.join("b.csv"));
    for out in [&a, &b] {
        let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let ds = Dataset::load(&a).unwrap();
    assert_eq!(ds.len(), 250);
    assert_eq!((ds.count(Split::Train), ds.count(Split::InterpTest), ds.count(Split::ExtrapTest)), (155, 45, 50));
    let meta = ds.meta.unwrap();
    assert_eq!((meta.family, meta.lengthscale, meta.noise_sd), (KernelFamily::Matern32, 0.15, 0.2));

    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "6", "--out", b.to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn zero_noise_gives_latent_targets() {
    let cfg = ExperimentConfig::from_json(r#"{"data": {"noise_sd": 0}}"#).unwrap();
    let ds = experiments::simulate(&cfg).unwrap();
    assert_eq!(ds.y, ds.f);
}

#[test]
fn exit_codes() {
    let dir = scratch("exit");
    let bad = write_config(&dir, "bad.json", r#"{"basis": {"m": 0}}"#);
    assert_eq!(run(&["simulate", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let wrong = write_config(&dir, "wrong.json", r#"{"experiment": "timing"}"#);
    assert_eq!(run(&["simulate", "--config", wrong.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.join("nope.json");
    assert_eq!(run(&["table", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    let ok = write_config(&dir, "ok.json", r#"{"experiment": "simulate", "data": {"n": 20, "n_interp": 4, "n_extrap": 4}}"#);
    assert_eq!(run(&["simulate", "--config", ok.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn table_matches_library_and_is_monotone() {
    let dir = scratch("table");
    let cfg = write_config(
        &dir,
        "t.json",
        r#"{"grid": {"families": ["SquaredExponential"], "lengthscales": [0.2, 0.3, 0.5], "c": [1.5, 2.0, 2.5]}}"#,
    );
    let out = dir.join("t.csv");
    let o = run(&["table", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("family,lengthscale_over_S,c,min_m"));
    let rows: Vec<(f64, f64, i64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 9);
    let direct = min_basis_functions(KernelFamily::SquaredExponential, 0.3, 2.0).unwrap().unwrap() as i64;
    assert!(rows.contains(&(0.3, 2.0, direct)));
    let at = |l: f64, c: f64| rows.iter().find(|r| r.0 == l && r.1 == c).unwrap().2;
    for &c in &[1.5, 2.0, 2.5] {
        assert!(at(0.5, c) <= at(0.3, c) && at(0.3, c) <= at(0.2, c));
    }
    for &l in &[0.2, 0.3, 0.5] {
        assert!(at(l, 1.5) <= at(l, 2.0) && at(l, 2.0) <= at(l, 2.5));
    }
    let lib = build_table(KernelFamily::SquaredExponential, &[0.2, 0.3, 0.5], &[1.5, 2.0, 2.5]).unwrap();
    assert_eq!(lib.len(), rows.len());
}

#[test]
fn periodic_table_goes_to_a_sibling_file() {
    let dir = scratch("periodic");
    let cfg = write_config(&dir, "p.json", r#"{"grid": {"families": ["PeriodicSE"], "lengthscales": [0.5, 1.0]}}"#);
    let out = dir.join("p.csv");
    assert!(run(&["table", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let text = std::fs::read_to_string(dir.join("p.csv.periodic.csv")).unwrap();
    assert!(text.starts_with("family,lengthscale,min_J\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn fit_then_diagnose_pass() {
    let dir = scratch("fit");
    let cfg = write_config(
        &dir,
        "f.json",
        r#"{"seed": 3, "kernel": {"family": "SquaredExponential", "alpha": 1, "lengthscale": 0.4},
            "basis": {"m": 40, "c": 1.5}}"#,
    );
    let out = dir.join("fit.csv");
    let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let preds = std::fs::read_to_string(&out).unwrap();
    assert!(preds.starts_with("x_1,split,f,y,mean,sd\n"));
    assert_eq!(preds.lines().count(), 251);
    let model = dir.join("fit.csv.model.json");
    assert!(model.exists());

    let dcfg = write_config(&dir, "d.json", &format!(r#"{{"fitted_model": {:?}}}"#, model.to_str().unwrap()));
    let o = run(&["diagnose", "--config", dcfg.to_str().unwrap()]);
    assert!(o.status.success());
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.starts_with("pass (margin "), "{msg}");
}

#[test]
fn fit_with_mcmc_writes_a_reproducible_trace() {
    let dir = scratch("mcmc");
    let cfg = write_config(
        &dir,
        "m.json",
        r#"{"seed": 2, "data": {"n": 80, "n_interp": 10, "n_extrap": 10},
            "basis": {"m": 20, "c": 1.5},
            "inference": {"method": "mcmc", "mcmc": {"iters": 200, "warmup": 100}}}"#,
    );
    let (a, b) = (dir.join("a.csv"), dir.join("b.csv"));
    for out in [&a, &b] {
        let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ta = std::fs::read_to_string(dir.join("a.csv.trace.csv")).unwrap();
    assert_eq!(ta, std::fs::read_to_string(dir.join("b.csv.trace.csv")).unwrap());
    assert!(ta.starts_with("iter,sigma,alpha,lengthscale,beta_1,"));
    assert_eq!(ta.lines().count(), 201);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn diagnose_flags_an_underresolved_configuration() {
    let cfg = ExperimentConfig::from_json(
        r#"{"kernel": {"family": "SquaredExponential", "alpha": 1, "lengthscale": 0.05}, "basis": {"m": 10, "c": 1.5}}"#,
    )
    .unwrap();
    let d = experiments::diagnose(&cfg).unwrap();
    assert!(!d.passed());
    assert!(matches!(d, Diagnosis::Config(_)));
    assert!(d.summary().starts_with("fail"));
    assert!(d.summary().contains("increase m or decrease c"));
}

#[test]
fn interp_extrap_without_extrapolation_drops_the_column() {
    let cfg = ExperimentConfig {
        data: hsgp_harness::config::DataSettings {
            n: 60,
            n_interp: 10,
            n_extrap: 0,
            ..Default::default()
        },
        basis: hsgp_harness::config::BasisSettings { m: 30, c: 1.5 },
        grid: GridSettings {
            replications: Some(1),
            ..Default::default()
        },
        ..Default::default()
    };
    let rows = experiments::interp_extrap(&cfg).unwrap();
    let mut buf = Vec::new();
    experiments::write_interp_extrap_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("replication,method,m,srmse_interp\n"));
    assert!(text.contains("\n0,exact,-,"));
}

#[test]
fn rmse_grid_orders_and_reproduces() {
    let dir = scratch("rmse");
    let cfg = write_config(
        &dir,
        "r.json",
        r#"{"seed": 1, "data": {"n": 120, "n_interp": 0, "n_extrap": 0}, "grid": {"m": [5, 15, 64], "c": [1.05, 1.5, 2.0, 2.5]}}"#,
    );
    let (a, b) = (dir.join("a.csv"), dir.join("b.csv"));
    for out in [&a, &b] {
        let o = run(&["rmse-grid", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    let at = |m: f64, c: f64| rows.iter().find(|r| r[0] == m && r[1] == c).unwrap()[2];
    assert!(at(15.0, 2.0) < at(5.0, 2.0));
    assert!(at(64.0, 2.5) < 0.05);
    // too small a box does not converge with m
    assert!(at(64.0, 1.05) > 10.0 * at(64.0, 1.5));
}

#[test]
fn lengthscale_recovery_exact_column_ignores_the_basis() {
    let cfg = ExperimentConfig::from_json(
        r#"{"seed": 9, "data": {"n": 80, "n_interp": 0, "n_extrap": 0},
            "grid": {"lengthscales": [0.05], "m": [6, 24], "replications": 2}}"#,
    )
    .unwrap();
    let rows = experiments::lengthscale_recovery(&cfg).unwrap();
    assert_eq!(rows.len(), 4);
    for pair in rows.chunks(2) {
        assert_eq!(pair[0].replication, pair[1].replication);
        assert_eq!(pair[0].lengthscale_exact, pair[1].lengthscale_exact);
        assert_eq!(pair[0].exact_lo, pair[1].exact_lo);
    }
    // ℓ = 0.05 cannot be represented by 6 functions
    assert!(rows.iter().filter(|r| r.m == 6).all(|r| !r.check_passed));
    let mut buf = Vec::new();
    experiments::write_recovery_csv(&rows, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
}

#[test]
fn shipped_configs_load_and_name_their_command() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let stem = path.file_stem().unwrap().to_str().unwrap().replace('_', "-");
        let name = cfg.experiment.expect("shipped configs name their command").name();
        assert!(stem.starts_with(name), "{} declares {name}", path.display());
        count += 1;
    }
    assert!(count >= 8);
}
