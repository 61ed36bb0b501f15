//! `hsgp <command> --config <path.json> [--out <path>] [--seed N]`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use hsgp_core::diagnostics::{write_periodic_table_csv, write_table_csv};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{config_err, io_err, Result};
use crate::experiments as ex;

#[derive(Debug, Parser)]
#[command(name = "hsgp", version, about = "Hilbert-space approximate GP experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output path; defaults to the config's `output`, else stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset with train / interp-test / extrap-test splits.
    Simulate(CommonArgs),
    /// Fit one model; writes predictions, the model file and any MCMC trace.
    Fit(CommonArgs),
    /// Check a fitted lengthscale (or a kernel/basis pair) against the basis.
    Diagnose(CommonArgs),
    /// Minimum-m (and periodic minimum-J) tables.
    Table(CommonArgs),
    /// HSGP-vs-exact RMSE over a grid of m and c.
    RmseGrid(CommonArgs),
    /// Lengthscale estimates of both models with the post-fit check.
    LengthscaleRecovery(CommonArgs),
    /// SRMSE on interpolation and extrapolation splits.
    InterpExtrap(CommonArgs),
    /// Seconds per log-density evaluation.
    Timing(CommonArgs),
}

impl Command {
    pub fn experiment(&self) -> Experiment {
        match self {
            Command::Simulate(_) => Experiment::Simulate,
            Command::Fit(_) => Experiment::Fit,
            Command::Diagnose(_) => Experiment::Diagnose,
            Command::Table(_) => Experiment::Table,
            Command::RmseGrid(_) => Experiment::RmseGrid,
            Command::LengthscaleRecovery(_) => Experiment::LengthscaleRecovery,
            Command::InterpExtrap(_) => Experiment::InterpExtrap,
            Command::Timing(_) => Experiment::Timing,
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a)
            | Command::Fit(a)
            | Command::Diagnose(a)
            | Command::Table(a)
            | Command::RmseGrid(a)
            | Command::LengthscaleRecovery(a)
            | Command::InterpExtrap(a)
            | Command::Timing(a) => a,
        }
    }
}

/// `path` with `suffix` appended to the file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn emit(out: Option<&Path>, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory");
    match out {
        Some(p) => std::fs::write(p, buf).map_err(io_err(p)),
        None => std::io::stdout().write_all(&buf).map_err(io_err(Path::new("<stdout>"))),
    }
}

/// Load and validate the config for `experiment`, applying overrides.
pub fn load_config(experiment: Experiment, args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(e) = cfg.experiment {
        if e != experiment {
            return config_err(format!("config is for {:?} but the command is {:?}", e.name(), experiment.name()));
        }
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Run one experiment with an already-loaded config. Returns a short status
/// line for stderr (or the verdict, for `diagnose`).
pub fn run_experiment(experiment: Experiment, cfg: &ExperimentConfig, out: Option<&Path>) -> Result<String> {
    match experiment {
        Experiment::Simulate => {
            let ds = ex::simulate(cfg)?;
            match out {
                Some(p) => ds.save(p)?,
                None => emit(None, |w| ds.write_csv(w))?,
            }
            Ok(format!("simulated {} points", ds.len()))
        }
        Experiment::Fit => {
            let Some(p) = out else {
                return config_err("fit needs an output path (--out or config output)");
            };
            let res = ex::fit(cfg)?;
            emit(Some(p), |w| ex::write_predictions_csv(&res, w))?;
            let model_path = sibling(p, ".model.json");
            let json = serde_json::to_string_pretty(&res.model).expect("model file serializes") + "\n";
            std::fs::write(&model_path, json).map_err(io_err(&model_path))?;
            if let Some(trace) = &res.fitted.trace {
                emit(Some(&sibling(p, ".trace.csv")), |w| trace.write_csv(w))?;
            }
            Ok(format!("fitted on {} training points; model in {}", res.model.n_train, model_path.display()))
        }
        Experiment::Diagnose => {
            let d = ex::diagnose(cfg)?;
            if let Some(p) = out {
                let json = serde_json::to_string_pretty(&d).expect("diagnosis serializes") + "\n";
                std::fs::write(p, json).map_err(io_err(p))?;
            }
            Ok(d.summary())
        }
        Experiment::Table => {
            let t = ex::table(cfg)?;
            emit(out, |w| write_table_csv(&t.spectral, w))?;
            if let Some(periodic) = &t.periodic {
                match out {
                    Some(p) => emit(Some(&sibling(p, ".periodic.csv")), |w| write_periodic_table_csv(periodic, w))?,
                    None => emit(None, |w| {
                        writeln!(w)?;
                        write_periodic_table_csv(periodic, w)
                    })?,
                }
            }
            Ok(format!("{} table rows", t.spectral.len() + t.periodic.map_or(0, |p| p.len())))
        }
        Experiment::RmseGrid => {
            let rows = ex::rmse_grid(cfg)?;
            emit(out, |w| ex::write_rmse_csv(&rows, w))?;
            Ok(format!("{} grid cells", rows.len()))
        }
        Experiment::LengthscaleRecovery => {
            let rows = ex::lengthscale_recovery(cfg)?;
            emit(out, |w| ex::write_recovery_csv(&rows, w))?;
            Ok(format!("{} fits", rows.len()))
        }
        Experiment::InterpExtrap => {
            let rows = ex::interp_extrap(cfg)?;
            emit(out, |w| ex::write_interp_extrap_csv(&rows, w))?;
            Ok(format!("{} rows", rows.len()))
        }
        Experiment::Timing => {
            let rows = ex::timing(cfg)?;
            emit(out, |w| ex::write_timing_csv(&rows, w))?;
            Ok(format!("{} timings", rows.len()))
        }
    }
}

/// Parse-free entry point used by `main` and the integration tests.
pub fn run(command: &Command) -> Result<String> {
    let experiment = command.experiment();
    let args = command.args();
    let cfg = load_config(experiment, args)?;
    let out = args.out.clone().or_else(|| cfg.output.clone());
    run_experiment(experiment, &cfg, out.as_deref())
}
