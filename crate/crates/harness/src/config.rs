//! JSON experiment configuration. Every field has a default, so `{}` is a
//! valid config for every command.

use std::path::{Path, PathBuf};

use hsgp_core::inference::{McmcConfig, PriorConfig, DEFAULT_BUDGET};
use hsgp_core::KernelFamily;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, io_err, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Fit,
    Diagnose,
    Table,
    RmseGrid,
    LengthscaleRecovery,
    InterpExtrap,
    Timing,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Fit => "fit",
            Experiment::Diagnose => "diagnose",
            Experiment::Table => "table",
            Experiment::RmseGrid => "rmse-grid",
            Experiment::LengthscaleRecovery => "lengthscale-recovery",
            Experiment::InterpExtrap => "interp-extrap",
            Experiment::Timing => "timing",
        }
    }
}

/// Data-generating / model kernel for univariate experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSettings {
    pub family: KernelFamily,
    pub alpha: f64,
    pub lengthscale: f64,
}

impl KernelSettings {
    /// Matérn-3/2, α = 1, ℓ = 0.15.
    pub fn matern_default() -> Self {
        KernelSettings {
            family: KernelFamily::Matern32,
            alpha: 1.0,
            lengthscale: 0.15,
        }
    }

    /// Squared exponential, α = 1, ℓ = 0.3.
    pub fn se_default() -> Self {
        KernelSettings {
            family: KernelFamily::SquaredExponential,
            alpha: 1.0,
            lengthscale: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSettings {
    pub n: usize,
    pub n_interp: usize,
    pub n_extrap: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub noise_sd: f64,
    /// Read this dataset instead of simulating (fit only).
    pub path: Option<PathBuf>,
}

impl Default for DataSettings {
    fn default() -> Self {
        DataSettings {
            n: 250,
            n_interp: 45,
            n_extrap: 50,
            x_min: -1.0,
            x_max: 1.0,
            noise_sd: 0.2,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisSettings {
    pub m: usize,
    pub c: f64,
}

impl Default for BasisSettings {
    fn default() -> Self {
        BasisSettings { m: 80, c: 1.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Map,
    Mcmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Hsgp,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSettings {
    pub method: Method,
    pub budget: usize,
    pub mcmc: McmcConfig,
    /// Kept draws used for exact-GP predictive moments under MCMC.
    pub predictive_draws: usize,
    /// Central probability of the reported lengthscale intervals.
    pub interval_level: f64,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        InferenceSettings {
            method: Method::Map,
            budget: DEFAULT_BUDGET,
            mcmc: McmcConfig::default(),
            predictive_draws: 200,
            interval_level: 0.95,
        }
    }
}

/// Sweep axes; empty vectors fall back to the per-command defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub m: Vec<usize>,
    pub c: Vec<f64>,
    pub lengthscales: Vec<f64>,
    pub n: Vec<usize>,
    pub families: Vec<KernelFamily>,
    pub replications: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSettings {
    pub evals: usize,
    pub warmup: usize,
    /// Exact-GP timings are skipped above this n.
    pub exact_max_n: usize,
}

impl Default for TimingSettings {
    fn default() -> Self {
        TimingSettings {
            evals: 50,
            warmup: 5,
            exact_max_n: 2000,
        }
    }
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; if present it must match the command being run.
    pub experiment: Option<Experiment>,
    pub seed: u64,
    /// `None` selects the command's default kernel.
    pub kernel: Option<KernelSettings>,
    pub data: DataSettings,
    pub basis: BasisSettings,
    pub priors: PriorConfig,
    pub model: Option<ModelKind>,
    pub inference: InferenceSettings,
    pub grid: GridSettings,
    pub timing: TimingSettings,
    /// Fitted-model JSON consumed by `diagnose`.
    pub fitted_model: Option<PathBuf>,
    /// Default output path when `--out` is not given.
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if !(d.x_min.is_finite() && d.x_max.is_finite() && d.x_min < d.x_max) {
            return config_err("data.x_min must be below data.x_max");
        }
        if !(d.noise_sd.is_finite() && d.noise_sd >= 0.0) {
            return config_err("data.noise_sd must be non-negative");
        }
        if d.n_interp + d.n_extrap >= d.n {
            return config_err("test splits leave no training data");
        }
        if !d.n_extrap.is_multiple_of(2) {
            return config_err("data.n_extrap must be even (split between both ends)");
        }
        if self.basis.m == 0 || !(self.basis.c >= 1.0) {
            return config_err("basis needs m ≥ 1 and c ≥ 1");
        }
        if let Some(k) = &self.kernel {
            if !(k.alpha > 0.0 && k.lengthscale > 0.0) {
                return config_err("kernel alpha and lengthscale must be positive");
            }
        }
        let level = self.inference.interval_level;
        if !(level > 0.0 && level < 1.0) {
            return config_err("inference.interval_level must lie in (0, 1)");
        }
        if self.inference.mcmc.iters == 0 {
            return config_err("inference.mcmc.iters must be positive");
        }
        if self.grid.c.iter().any(|c| !(*c >= 1.0)) || self.grid.m.contains(&0) {
            return config_err("grid values need m ≥ 1 and c ≥ 1");
        }
        if self.grid.lengthscales.iter().any(|l| !(*l > 0.0)) {
            return config_err("grid lengthscales must be positive");
        }
        if self.timing.evals == 0 {
            return config_err("timing.evals must be positive");
        }
        Ok(())
    }

    pub fn kernel_or(&self, default: KernelSettings) -> KernelSettings {
        self.kernel.unwrap_or(default)
    }

    pub fn replications_or(&self, default: usize) -> usize {
        self.grid.replications.unwrap_or(default)
    }
}

fn or_default<T: Clone>(v: &[T], default: &[T]) -> Vec<T> {
    if v.is_empty() {
        default.to_vec()
    } else {
        v.to_vec()
    }
}

impl GridSettings {
    pub fn m_or(&self, default: &[usize]) -> Vec<usize> {
        or_default(&self.m, default)
    }

    pub fn c_or(&self, default: &[f64]) -> Vec<f64> {
        or_default(&self.c, default)
    }

    pub fn lengthscales_or(&self, default: &[f64]) -> Vec<f64> {
        or_default(&self.lengthscales, default)
    }

    pub fn n_or(&self, default: &[usize]) -> Vec<usize> {
        or_default(&self.n, default)
    }

    pub fn families_or(&self, default: &[KernelFamily]) -> Vec<KernelFamily> {
        or_default(&self.families, default)
    }
}
