//! The experiment commands as library functions returning typed rows, plus
//! their CSV writers. Cells own RNG streams derived from (master seed, cell
//! index) and results come back in cell order, so output does not depend on
//! scheduling.

use std::io::{self, Write};
use std::time::Instant;

use hsgp_core::diagnostics::{build_periodic_table, build_table, diagnostics_report, PeriodicTableRow, TableRow};
use hsgp_core::{
    build_tuples, check_fit, covariance_tv_error, log_joint, DiagnosticsReport, FitCheck, Hsgp,
    HsgpProblem, Hyperparameters, KernelFamily,
};
use hsgp_core::inference::ExactProblem;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DataSettings, ExperimentConfig, KernelSettings, Method, ModelKind};
use crate::dataset::{derive_seed, Dataset, Split};
use crate::error::{config_err, HarnessError, Result};
use crate::fitting::{fit_and_predict, rmse, srmse, Fitted, ModelSpec};

/// Interior evaluation grid: this many points spanning ±[`GRID_FRACTION`]·S.
pub const GRID_POINTS: usize = 101;
pub const GRID_FRACTION: f64 = 0.9;

/// Stream indices under a cell seed.
const DATA_STREAM: u64 = 0;
const CHAIN_STREAM: u64 = 1;

fn csv_opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Evenly spaced points over the central `GRID_FRACTION` of the data range.
pub fn interior_grid(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (lo, hi) = (x.column(0).min(), x.column(0).max());
    let (center, half) = (0.5 * (lo + hi), 0.5 * (hi - lo) * GRID_FRACTION);
    DMatrix::from_fn(GRID_POINTS, 1, |i, _| center - half + 2.0 * half * i as f64 / (GRID_POINTS - 1) as f64)
}

fn half_range(x: &DMatrix<f64>) -> f64 {
    0.5 * (x.column(0).max() - x.column(0).min())
}

// ---------------------------------------------------------------- simulate

pub fn simulate(cfg: &ExperimentConfig) -> Result<Dataset> {
    Dataset::simulate(&cfg.kernel_or(KernelSettings::matern_default()), &cfg.data, cfg.seed)
}

// ---------------------------------------------------------------- rmse-grid

pub const RMSE_GRID_M: [usize; 7] = [5, 10, 15, 20, 30, 40, 64];
pub const RMSE_GRID_C: [f64; 4] = [1.05, 1.5, 2.0, 2.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub m: usize,
    pub c: f64,
    /// RMSE between HSGP and exact posterior means, averaged over replications.
    pub rmse_mean_vs_exact: f64,
    /// RMSE between HSGP and exact posterior sds, averaged over replications.
    pub rmse_sd_vs_exact: f64,
}

fn whole_dataset(kernel: &KernelSettings, data: &DataSettings, seed: u64) -> Result<Dataset> {
    let all_train = DataSettings {
        n_interp: 0,
        n_extrap: 0,
        ..data.clone()
    };
    Dataset::simulate(kernel, &all_train, seed)
}

/// HSGP vs exact GP on the same data for every (m, c), fitted on all points
/// and compared on the interior grid.
pub fn rmse_grid(cfg: &ExperimentConfig) -> Result<Vec<RmseRow>> {
    let kernel = cfg.kernel_or(KernelSettings::se_default());
    let ms = cfg.grid.m_or(&RMSE_GRID_M);
    let cs = cfg.grid.c_or(&RMSE_GRID_C);
    let reps = cfg.replications_or(1);
    let per_rep: Vec<Vec<(f64, f64)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(cfg.seed, r as u64);
            let ds = whole_dataset(&kernel, &cfg.data, derive_seed(seed, DATA_STREAM))?;
            let grid = interior_grid(&ds.x);
            let chain = derive_seed(seed, CHAIN_STREAM);
            let exact = fit_and_predict(&ModelSpec::Exact, kernel.family, &ds.x, &ds.y, &grid, &cfg.priors, &cfg.inference, chain)?;
            let mut out = Vec::with_capacity(ms.len() * cs.len());
            for &m in &ms {
                for &c in &cs {
                    let model = ModelSpec::hsgp_from_data(&ds.x, m, c)?;
                    let fit = fit_and_predict(&model, kernel.family, &ds.x, &ds.y, &grid, &cfg.priors, &cfg.inference, chain)?;
                    out.push((
                        rmse(&fit.prediction.mean, &exact.prediction.mean),
                        rmse(&fit.prediction.sd, &exact.prediction.sd),
                    ));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (k, (m, c)) in ms.iter().flat_map(|&m| cs.iter().map(move |&c| (m, c))).enumerate() {
        let mean = |f: fn(&(f64, f64)) -> f64| per_rep.iter().map(|r| f(&r[k])).sum::<f64>() / reps as f64;
        rows.push(RmseRow {
            m,
            c,
            rmse_mean_vs_exact: mean(|p| p.0),
            rmse_sd_vs_exact: mean(|p| p.1),
        });
    }
    Ok(rows)
}

pub fn write_rmse_csv<W: Write>(rows: &[RmseRow], mut w: W) -> io::Result<()> {
    writeln!(w, "m,c,rmse_mean_vs_exact,rmse_sd_vs_exact")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.m, r.c, r.rmse_mean_vs_exact, r.rmse_sd_vs_exact)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- lengthscale-recovery

pub const RECOVERY_LENGTHSCALES: [f64; 3] = [0.1, 0.3, 1.0];
pub const RECOVERY_M: [usize; 2] = [8, 32];
/// Candidate boundary factors; each (true ℓ, m) uses the most accurate one.
pub const RECOVERY_C: [f64; 6] = [1.2, 1.5, 2.0, 2.5, 3.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub true_lengthscale: f64,
    pub replication: usize,
    pub m: usize,
    pub c: f64,
    pub lengthscale_exact: f64,
    pub exact_lo: Option<f64>,
    pub exact_hi: Option<f64>,
    pub lengthscale_hsgp: f64,
    pub hsgp_lo: Option<f64>,
    pub hsgp_hi: Option<f64>,
    /// Smallest reliable lengthscale in input units; `None` if no lengthscale
    /// in range qualifies.
    pub min_lengthscale: Option<f64>,
    pub check_passed: bool,
    /// RMSE between HSGP and exact posterior means on the interior grid.
    pub rmse: f64,
}

/// Boundary factor with the smallest covariance error for `ℓ/S` at `m`
/// basis functions; ties go to the earlier candidate.
pub fn best_boundary_factor(family: KernelFamily, lengthscale_over_s: f64, m: usize, candidates: &[f64]) -> Result<f64> {
    let mut best = (f64::INFINITY, candidates[0]);
    for &c in candidates {
        let e = covariance_tv_error(family, lengthscale_over_s, 1.0, c, m)?;
        if e < best.0 {
            best = (e, c);
        }
    }
    Ok(best.1)
}

/// For each true ℓ and replication: simulate, fit the exact GP once, fit the
/// HSGP for every m, and run the post-fit lengthscale check.
pub fn lengthscale_recovery(cfg: &ExperimentConfig) -> Result<Vec<RecoveryRow>> {
    let base = cfg.kernel_or(KernelSettings::se_default());
    let lengthscales = cfg.grid.lengthscales_or(&RECOVERY_LENGTHSCALES);
    let ms = cfg.grid.m_or(&RECOVERY_M);
    let candidates = cfg.grid.c_or(&RECOVERY_C);
    let reps = cfg.replications_or(20);
    let cells: Vec<(usize, f64, usize)> = lengthscales
        .iter()
        .enumerate()
        .flat_map(|(i, &l)| (0..reps).map(move |r| (i, l, r)))
        .collect();
    let s_nominal = 0.5 * (cfg.data.x_max - cfg.data.x_min);
    let chosen_c: Vec<Vec<f64>> = lengthscales
        .iter()
        .map(|&l| ms.iter().map(|&m| best_boundary_factor(base.family, l / s_nominal, m, &candidates)).collect())
        .collect::<Result<_>>()?;
    let per_cell: Vec<Vec<RecoveryRow>> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(li, l, r))| {
            let kernel = KernelSettings { lengthscale: l, ..base };
            let seed = derive_seed(cfg.seed, idx as u64);
            let ds = whole_dataset(&kernel, &cfg.data, derive_seed(seed, DATA_STREAM))?;
            let grid = interior_grid(&ds.x);
            let s = half_range(&ds.x);
            let chain = derive_seed(seed, CHAIN_STREAM);
            let exact = fit_and_predict(&ModelSpec::Exact, kernel.family, &ds.x, &ds.y, &grid, &cfg.priors, &cfg.inference, chain)?;
            let mut rows = Vec::with_capacity(ms.len());
            for (mi, &m) in ms.iter().enumerate() {
                let c = chosen_c[li][mi];
                let model = ModelSpec::hsgp_from_data(&ds.x, m, c)?;
                let fit = fit_and_predict(&model, kernel.family, &ds.x, &ds.y, &grid, &cfg.priors, &cfg.inference, chain)?;
                let l_hat = fit.hyper.lengthscales[0];
                let check = check_fit(l_hat, s, m, c, kernel.family)?;
                rows.push(RecoveryRow {
                    true_lengthscale: l,
                    replication: r,
                    m,
                    c,
                    lengthscale_exact: exact.hyper.lengthscales[0],
                    exact_lo: exact.lengthscale_intervals[0].map(|i| i.0),
                    exact_hi: exact.lengthscale_intervals[0].map(|i| i.1),
                    lengthscale_hsgp: l_hat,
                    hsgp_lo: fit.lengthscale_intervals[0].map(|i| i.0),
                    hsgp_hi: fit.lengthscale_intervals[0].map(|i| i.1),
                    min_lengthscale: check.threshold.map(|t| t * s),
                    check_passed: check.passed,
                    rmse: rmse(&fit.prediction.mean, &exact.prediction.mean),
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

pub fn write_recovery_csv<W: Write>(rows: &[RecoveryRow], mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "true_lengthscale,replication,m,c,lengthscale_exact,exact_lo,exact_hi,lengthscale_hsgp,hsgp_lo,hsgp_hi,min_lengthscale,check,rmse"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.true_lengthscale,
            r.replication,
            r.m,
            r.c,
            r.lengthscale_exact,
            csv_opt(r.exact_lo),
            csv_opt(r.exact_hi),
            r.lengthscale_hsgp,
            csv_opt(r.hsgp_lo),
            csv_opt(r.hsgp_hi),
            csv_opt(r.min_lengthscale),
            if r.check_passed { "pass" } else { "fail" },
            r.rmse
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------- interp-extrap

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpExtrapRow {
    pub replication: usize,
    pub method: ModelKind,
    /// `None` for the exact GP.
    pub m: Option<usize>,
    pub srmse_interp: f64,
    /// `None` when the extrapolation split is empty.
    pub srmse_extrap: Option<f64>,
}

/// Fit on the training split; score both test splits against the latent f.
/// The HSGP box covers all inputs, so extrapolation points lie inside it.
pub fn interp_extrap(cfg: &ExperimentConfig) -> Result<Vec<InterpExtrapRow>> {
    let kernel = cfg.kernel_or(KernelSettings::matern_default());
    let ms = cfg.grid.m_or(&[cfg.basis.m]);
    let reps = cfg.replications_or(5);
    if cfg.data.n_interp == 0 {
        return config_err("interp-extrap needs data.n_interp > 0");
    }
    let per_rep: Vec<Vec<InterpExtrapRow>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(cfg.seed, r as u64);
            let ds = Dataset::simulate(&kernel, &cfg.data, derive_seed(seed, DATA_STREAM))?;
            let train = ds.part(Split::Train);
            let interp = ds.part(Split::InterpTest);
            let extrap = ds.part(Split::ExtrapTest);
            let has_extrap = !extrap.y.is_empty();
            let xstar = DMatrix::from_fn(interp.x.nrows() + extrap.x.nrows(), 1, |i, _| {
                if i < interp.x.nrows() { interp.x[i] } else { extrap.x[i - interp.x.nrows()] }
            });
            let chain = derive_seed(seed, CHAIN_STREAM);
            let score = |fit: &Fitted| {
                let k = interp.x.nrows();
                let p = &fit.prediction.mean;
                let si = srmse(&p.rows(0, k).into_owned(), &interp.f);
                let se = has_extrap.then(|| srmse(&p.rows(k, p.len() - k).into_owned(), &extrap.f));
                (si, se)
            };
            let mut rows = Vec::with_capacity(1 + ms.len());
            let exact = fit_and_predict(&ModelSpec::Exact, kernel.family, &train.x, &train.y, &xstar, &cfg.priors, &cfg.inference, chain)?;
            let (si, se) = score(&exact);
            rows.push(InterpExtrapRow {
                replication: r,
                method: ModelKind::Exact,
                m: None,
                srmse_interp: si,
                srmse_extrap: se,
            });
            for &m in &ms {
                let model = ModelSpec::hsgp_from_data(&ds.x, m, cfg.basis.c)?;
                let fit = fit_and_predict(&model, kernel.family, &train.x, &train.y, &xstar, &cfg.priors, &cfg.inference, chain)?;
                let (si, se) = score(&fit);
                rows.push(InterpExtrapRow {
                    replication: r,
                    method: ModelKind::Hsgp,
                    m: Some(m),
                    srmse_interp: si,
                    srmse_extrap: se,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

fn method_name(m: ModelKind) -> &'static str {
    match m {
        ModelKind::Exact => "exact",
        ModelKind::Hsgp => "hsgp",
    }
}

/// The `srmse_extrap` column is omitted when no row has an extrapolation score.
pub fn write_interp_extrap_csv<W: Write>(rows: &[InterpExtrapRow], mut w: W) -> io::Result<()> {
    let extrap = rows.iter().any(|r| r.srmse_extrap.is_some());
    writeln!(w, "replication,method,m,srmse_interp{}", if extrap { ",srmse_extrap" } else { "" })?;
    for r in rows {
        write!(w, "{},{},{},{}", r.replication, method_name(r.method), r.m.map_or("-".into(), |m| m.to_string()), r.srmse_interp)?;
        if extrap {
            write!(w, ",{}", csv_opt(r.srmse_extrap))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- timing

pub const TIMING_N: [usize; 4] = [1000, 2000, 4000, 8000];
pub const TIMING_M: [usize; 1] = [30];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: ModelKind,
    pub n: usize,
    pub m: Option<usize>,
    pub seconds_per_eval: f64,
}

/// Synthetic inputs for timing: uniform x and a smooth signal plus noise.
/// Drawing from the GP prior would itself cost O(n³), and evaluation cost
/// does not depend on the values.
pub fn timing_data(n: usize, data: &DataSettings, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, 1, |_, _| rng.random_range(data.x_min..data.x_max));
    let y = DVector::from_fn(n, |i, _| (3.0 * x[i]).sin() + data.noise_sd * rng.sample::<f64, _>(StandardNormal));
    (x, y)
}

fn median_seconds(warmup: usize, evals: usize, mut f: impl FnMut() -> Result<f64>) -> Result<f64> {
    let mut sink = 0.0;
    for _ in 0..warmup {
        sink += f()?;
    }
    let mut times = Vec::with_capacity(evals);
    for _ in 0..evals {
        let t = Instant::now();
        sink += f()?;
        times.push(t.elapsed().as_secs_f64());
    }
    if !sink.is_finite() {
        return Err(HarnessError::Core(hsgp_core::HsgpError::Numerical("non-finite log density while timing".into())));
    }
    times.sort_by(f64::total_cmp);
    Ok(hsgp_core::inference::quantile(&times, 0.5))
}

/// Median wall time of one log-density evaluation: the HSGP joint density
/// with Φ precomputed, and the exact marginal likelihood with a fresh
/// Cholesky factorization each time.
pub fn timing(cfg: &ExperimentConfig) -> Result<Vec<TimingRow>> {
    let kernel = cfg.kernel_or(KernelSettings::matern_default());
    let ns = cfg.grid.n_or(&TIMING_N);
    let ms = cfg.grid.m_or(&TIMING_M);
    let c = cfg.grid.c_or(&[cfg.basis.c])[0];
    let t = &cfg.timing;
    let h = Hyperparameters::new(cfg.data.noise_sd.max(1e-3), kernel.alpha, vec![kernel.lengthscale])?;
    let mut rows = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let (x, y) = timing_data(n, &cfg.data, derive_seed(cfg.seed, i as u64));
        for &m in &ms {
            let hsgp = Hsgp::new(hsgp_core::DomainConfig::from_data(&x, &[c])?, build_tuples(&[m])?)?;
            let problem = HsgpProblem::new(hsgp, kernel.family, &x, &y)?;
            let beta = vec![0.1; m];
            let secs = median_seconds(t.warmup, t.evals, || Ok(log_joint(&problem, &h, &beta, &cfg.priors)?))?;
            rows.push(TimingRow {
                method: ModelKind::Hsgp,
                n,
                m: Some(m),
                seconds_per_eval: secs,
            });
        }
        if n <= t.exact_max_n {
            let problem = ExactProblem {
                family: kernel.family,
                x: x.clone(),
                y: y.clone(),
            };
            let secs = median_seconds(t.warmup, t.evals, || Ok(problem.fit(&h)?.log_marginal_likelihood()))?;
            rows.push(TimingRow {
                method: ModelKind::Exact,
                n,
                m: None,
                seconds_per_eval: secs,
            });
        }
    }
    Ok(rows)
}

pub fn write_timing_csv<W: Write>(rows: &[TimingRow], mut w: W) -> io::Result<()> {
    writeln!(w, "method,n,m,seconds_per_logdensity_eval")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", method_name(r.method), r.n, r.m.map_or("-".into(), |m| m.to_string()), r.seconds_per_eval)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- table

pub const TABLE_LENGTHSCALES: [f64; 8] = [0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5];
pub const TABLE_C: [f64; 6] = [1.05, 1.2, 1.5, 2.0, 2.5, 3.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    pub spectral: Vec<TableRow>,
    /// Present when the periodic family was requested.
    pub periodic: Option<Vec<PeriodicTableRow>>,
}

/// Minimum m per (ℓ/S, c) for every spectral family, and minimum J per ℓ for
/// the periodic kernel. Grid values in `grid.lengthscales` are ℓ/S for the
/// spectral families and ℓ for the periodic one.
pub fn table(cfg: &ExperimentConfig) -> Result<Tables> {
    let families = cfg.grid.families_or(&[KernelFamily::SquaredExponential, KernelFamily::Matern32]);
    let ls = cfg.grid.lengthscales_or(&TABLE_LENGTHSCALES);
    let cs = cfg.grid.c_or(&TABLE_C);
    let mut spectral = Vec::new();
    let mut periodic = None;
    for f in families {
        if f.has_spectral_density() {
            spectral.extend(build_table(f, &ls, &cs)?);
        } else {
            periodic = Some(build_periodic_table(&ls)?);
        }
    }
    Ok(Tables { spectral, periodic })
}

// ---------------------------------------------------------------- fit / diagnose

/// Everything `diagnose` needs to re-check a fit, plus the estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModelFile {
    pub model: ModelSpec,
    pub family: KernelFamily,
    pub method: Method,
    pub hyperparameters: Hyperparameters,
    pub lengthscale_intervals: Vec<Option<(f64, f64)>>,
    pub interval_level: f64,
    pub n_train: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub dataset: Dataset,
    pub fitted: Fitted,
    pub model: FittedModelFile,
}

/// Fit one model on the training split (of `data.path` if given, else a
/// simulated dataset) and predict at every input.
pub fn fit(cfg: &ExperimentConfig) -> Result<FitOutput> {
    let kernel = cfg.kernel_or(KernelSettings::matern_default());
    let dataset = match &cfg.data.path {
        Some(p) => Dataset::load(p)?,
        None => Dataset::simulate(&kernel, &cfg.data, derive_seed(cfg.seed, DATA_STREAM))?,
    };
    let train = dataset.part(Split::Train);
    if train.y.is_empty() {
        return config_err("dataset has no training points");
    }
    let model = match cfg.model.unwrap_or(ModelKind::Hsgp) {
        ModelKind::Exact => ModelSpec::Exact,
        ModelKind::Hsgp => ModelSpec::hsgp_from_data(&dataset.x, cfg.basis.m, cfg.basis.c)?,
    };
    let chain = derive_seed(cfg.seed, CHAIN_STREAM);
    let fitted = fit_and_predict(&model, kernel.family, &train.x, &train.y, &dataset.x, &cfg.priors, &cfg.inference, chain)?;
    let file = FittedModelFile {
        model,
        family: kernel.family,
        method: cfg.inference.method,
        hyperparameters: fitted.hyper.clone(),
        lengthscale_intervals: fitted.lengthscale_intervals.clone(),
        interval_level: cfg.inference.interval_level,
        n_train: train.y.len(),
        seed: cfg.seed,
    };
    Ok(FitOutput { dataset, fitted, model: file })
}

/// Header `x_1..x_D,split,f,y,mean,sd`.
pub fn write_predictions_csv<W: Write>(out: &FitOutput, mut w: W) -> io::Result<()> {
    let ds = &out.dataset;
    let d = ds.x.ncols();
    let mut header: Vec<String> = (1..=d).map(|k| format!("x_{k}")).collect();
    header.extend(["split", "f", "y", "mean", "sd"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    let p = &out.fitted.prediction;
    for i in 0..ds.len() {
        let xs: Vec<String> = (0..d).map(|k| ds.x[(i, k)].to_string()).collect();
        writeln!(w, "{},{},{},{},{},{}", xs.join(","), ds.split[i], ds.f[i], ds.y[i], p.mean[i], p.sd[i])?;
    }
    Ok(())
}

/// Result of `diagnose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Diagnosis {
    /// Post-fit check of an HSGP fit.
    Fit(FitCheck),
    /// A priori report for the configured kernel and basis.
    Config(DiagnosticsReport),
}

impl Diagnosis {
    pub fn passed(&self) -> bool {
        match self {
            Diagnosis::Fit(c) => c.passed,
            Diagnosis::Config(r) => r.passed,
        }
    }

    /// One-line verdict, starting with "pass" or "fail".
    pub fn summary(&self) -> String {
        match self {
            Diagnosis::Fit(c) => {
                let threshold = c.threshold.map_or("not achievable".to_string(), |t| format!("{t:.4}"));
                if c.passed {
                    format!("pass (margin {:.4}; ℓ̂/S = {:.4}, threshold {threshold})", c.margin.unwrap_or(f64::NAN), c.lengthscale_over_s)
                } else {
                    format!(
                        "fail (ℓ̂/S = {:.4}, threshold {threshold}): {}",
                        c.lengthscale_over_s,
                        c.remediation.as_deref().unwrap_or("")
                    )
                }
            }
            Diagnosis::Config(r) => {
                let verdict = if r.passed { "pass" } else { "fail" };
                let min_m = r.min_m.map_or("not achievable".to_string(), |m| m.to_string());
                let tail = if r.passed { String::new() } else { format!(": {}", hsgp_core::diagnostics::REMEDIATION) };
                format!("{verdict} (TV error {:.3e}, threshold {}, minimum m {min_m}){tail}", r.tv_error_normalized, r.threshold)
            }
        }
    }
}

/// With `fitted_model` set, check the fitted lengthscale against the basis;
/// otherwise report on the configured kernel (ℓ read as ℓ/S) and basis.
pub fn diagnose(cfg: &ExperimentConfig) -> Result<Diagnosis> {
    match &cfg.fitted_model {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(crate::error::io_err(path))?;
            let file: FittedModelFile = serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            match &file.model {
                ModelSpec::Exact => config_err("the lengthscale check applies to HSGP fits only"),
                ModelSpec::Hsgp { domain, m } => {
                    if domain.dim() != 1 {
                        return config_err("the lengthscale check is univariate");
                    }
                    let check = check_fit(
                        file.hyperparameters.lengthscales[0],
                        domain.half_ranges()[0],
                        *m,
                        domain.boundary_factors()[0],
                        file.family,
                    )?;
                    Ok(Diagnosis::Fit(check))
                }
            }
        }
        None => {
            let k = cfg.kernel_or(KernelSettings::se_default());
            Ok(Diagnosis::Config(diagnostics_report(k.family, k.lengthscale, cfg.basis.c, cfg.basis.m)?))
        }
    }
}
