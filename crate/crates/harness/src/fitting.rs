//! Hyperparameter inference and prediction for one dataset, shared by the
//! experiment commands. Both models go through the same path so that every
//! comparison differs only in the covariance approximation.

use hsgp_core::inference::{
    laplace_covariance, maximize, mcmc_exact, mcmc_sample, predict_from_trace, central_interval, ExactPosterior, ExactProblem,
    HsgpPosterior, LogDensity, MapResult, McmcConfig, McmcTrace,
};
use hsgp_core::{build_tuples, predict_exact, DomainConfig, Hsgp, HsgpProblem, Hyperparameters, KernelFamily, Prediction, PriorConfig};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::{InferenceSettings, Method, ModelKind};
use crate::error::Result;

/// Step of the finite-difference Hessian for Laplace intervals (log scale).
const LAPLACE_STEP: f64 = 1e-3;

/// Lengthscale multiples of the half-range used as MAP starting points.
const LENGTHSCALE_STARTS: [f64; 3] = [0.1, 0.3, 1.0];

/// Which model to fit, and the basis when it is the approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    Exact,
    Hsgp { domain: DomainConfig, m: usize },
}

impl ModelSpec {
    /// Univariate HSGP on the box spanned by `x_all` with boundary factor `c`.
    pub fn hsgp_from_data(x_all: &DMatrix<f64>, m: usize, c: f64) -> Result<Self> {
        Ok(ModelSpec::Hsgp {
            domain: DomainConfig::from_data(x_all, &vec![c; x_all.ncols()])?,
            m,
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Exact => ModelKind::Exact,
            ModelSpec::Hsgp { .. } => ModelKind::Hsgp,
        }
    }
}

/// Fitted hyperparameters, predictions and (under MCMC) the trace.
#[derive(Debug, Clone)]
pub struct Fitted {
    /// MAP estimate, or posterior medians under MCMC.
    pub hyper: Hyperparameters,
    /// Central interval (`interval_level`) for each lengthscale; `None` if the Laplace
    /// Hessian was not negative definite.
    pub lengthscale_intervals: Vec<Option<(f64, f64)>>,
    pub prediction: Prediction,
    pub trace: Option<McmcTrace>,
    pub converged: bool,
}

fn sample_sd(y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let mean = y.mean();
    (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

/// Deterministic starting points: σ = sd(y)/2, α = var(y), ℓ from
/// [`LENGTHSCALE_STARTS`] times the per-dimension half-range.
pub fn starting_points(x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<Hyperparameters> {
    let sd = sample_sd(y).max(1e-3);
    let half: Vec<f64> = x.column_iter().map(|c| (0.5 * (c.max() - c.min())).max(1e-3)).collect();
    LENGTHSCALE_STARTS
        .iter()
        .map(|&f| Hyperparameters {
            noise_sd: 0.5 * sd,
            alpha: sd * sd,
            lengthscales: half.iter().map(|s| f * s).collect(),
        })
        .collect()
}

/// Best MAP over the starting points; ties keep the earliest start.
pub fn multi_start_map<T: LogDensity>(target: &T, starts: &[Hyperparameters], budget: usize) -> Result<MapResult> {
    let mut best: Option<MapResult> = None;
    let mut last_err = None;
    for s in starts {
        match maximize(target, s, budget) {
            Ok(r) if best.as_ref().is_none_or(|b| r.log_posterior > b.log_posterior) => best = Some(r),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(b) => Ok(b),
        None => Err(last_err.expect("at least one start").into()),
    }
}

fn laplace_intervals<T: LogDensity>(target: &T, map: &MapResult, level: f64) -> Vec<Option<(f64, f64)>> {
    let mode = map.hyper.to_log();
    let d = map.hyper.lengthscales.len();
    let z = normal_quantile(0.5 + 0.5 * level);
    match laplace_covariance(target, &mode, LAPLACE_STEP) {
        Some(cov) => (0..d)
            .map(|k| {
                let half = z * cov[(2 + k, 2 + k)].sqrt();
                Some(((mode[2 + k] - half).exp(), (mode[2 + k] + half).exp()))
            })
            .collect(),
        None => vec![None; d],
    }
}

fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn median_hyper(trace: &McmcTrace) -> Hyperparameters {
    let med = |v: Vec<f64>| hsgp_core::inference::quantile(&v, 0.5);
    Hyperparameters {
        noise_sd: med(trace.noise_draws()),
        alpha: med(trace.alpha_draws()),
        lengthscales: (0..trace.lengthscale_dims).map(|d| med(trace.lengthscale_draws(d))).collect(),
    }
}

fn trace_intervals(trace: &McmcTrace, level: f64) -> Vec<Option<(f64, f64)>> {
    (0..trace.lengthscale_dims)
        .map(|d| Some(central_interval(&trace.lengthscale_draws(d), level)))
        .collect()
}

/// Mixture moments of exact-GP predictions over up to `max_draws` evenly
/// thinned trace rows.
fn exact_mixture_prediction(problem: &ExactProblem, trace: &McmcTrace, xstar: &DMatrix<f64>, max_draws: usize) -> Result<Prediction> {
    let stride = trace.kept.div_ceil(max_draws.max(1)).max(1);
    let q = xstar.nrows();
    let mut sum = DVector::zeros(q);
    let mut sum_sq = DVector::zeros(q);
    let mut count = 0.0;
    for i in (0..trace.kept).step_by(stride) {
        let fit = problem.fit(&trace.hyperparameters(i))?;
        let p = predict_exact(&fit, xstar)?;
        sum_sq += p.mean.component_mul(&p.mean) + p.sd.component_mul(&p.sd);
        sum += p.mean;
        count += 1.0;
    }
    let mean = sum / count;
    let sd = DVector::from_fn(q, |i, _| (sum_sq[i] / count - mean[i] * mean[i]).max(0.0).sqrt());
    Ok(Prediction { mean, sd })
}

/// Fit `model` to `(x, y)` and predict the latent function at `xstar`.
/// The MCMC chain (if any) is seeded with `seed` and started at the MAP.
pub fn fit_and_predict(
    model: &ModelSpec,
    family: KernelFamily,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    xstar: &DMatrix<f64>,
    priors: &PriorConfig,
    inference: &InferenceSettings,
    seed: u64,
) -> Result<Fitted> {
    let starts = starting_points(x, y);
    let mcmc = McmcConfig { seed, ..inference.mcmc };
    match model {
        ModelSpec::Exact => {
            let problem = ExactProblem {
                family,
                x: x.clone(),
                y: y.clone(),
            };
            let target = ExactPosterior { problem: &problem, priors };
            let map = multi_start_map(&target, &starts, inference.budget)?;
            match inference.method {
                Method::Map => Ok(Fitted {
                    lengthscale_intervals: laplace_intervals(&target, &map, inference.interval_level),
                    prediction: predict_exact(&problem.fit(&map.hyper)?, xstar)?,
                    hyper: map.hyper,
                    trace: None,
                    converged: map.converged,
                }),
                Method::Mcmc => {
                    let trace = mcmc_exact(&problem, priors, &map.hyper, &mcmc)?;
                    Ok(Fitted {
                        hyper: median_hyper(&trace),
                        lengthscale_intervals: trace_intervals(&trace, inference.interval_level),
                        prediction: exact_mixture_prediction(&problem, &trace, xstar, inference.predictive_draws)?,
                        trace: Some(trace),
                        converged: map.converged,
                    })
                }
            }
        }
        ModelSpec::Hsgp { domain, m } => {
            let hsgp = Hsgp::new(domain.clone(), build_tuples(&vec![*m; domain.dim()])?)?;
            let problem = HsgpProblem::new(hsgp, family, x, y)?;
            let target = HsgpPosterior { problem: &problem, priors };
            let map = multi_start_map(&target, &starts, inference.budget)?;
            match inference.method {
                Method::Map => Ok(Fitted {
                    lengthscale_intervals: laplace_intervals(&target, &map, inference.interval_level),
                    prediction: hsgp_core::predict_hsgp(&problem.weight_posterior(&map.hyper)?, xstar)?,
                    hyper: map.hyper,
                    trace: None,
                    converged: map.converged,
                }),
                Method::Mcmc => {
                    let trace = mcmc_sample(&problem, priors, &map.hyper, &mcmc)?;
                    Ok(Fitted {
                        hyper: median_hyper(&trace),
                        lengthscale_intervals: trace_intervals(&trace, inference.interval_level),
                        prediction: predict_from_trace(&problem, &trace, xstar)?,
                        trace: Some(trace),
                        converged: map.converged,
                    })
                }
            }
        }
    }
}

/// Root mean square difference.
pub fn rmse(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    ((a - b).norm_squared() / a.len() as f64).sqrt()
}

/// RMSE against the truth divided by the population sd of the truth.
pub fn srmse(pred: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    let mean = truth.mean();
    let sd = (truth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / truth.len() as f64).sqrt();
    rmse(pred, truth) / sd
}
