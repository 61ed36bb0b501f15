//! Inference for the basis-function model.
//!
//! With hyperparameters fixed the weights have a conjugate Gaussian posterior.
//! Hyperparameters live on the log scale; their marginal density integrates
//! the weights out through m*-dimensional sufficient statistics
//! (`ΦᵀΦ`, `Φᵀy`, `yᵀy`), so one evaluation costs O(m*³) once Φ is built.
//! The sampler is random-walk Metropolis on that collapsed density followed by
//! an exact draw of the weights, which targets the same joint posterior as
//! alternating hyperparameter and weight updates.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{ensure_positive, input_err, HsgpError, Result};
use crate::exact::{fit_exact, GpFit, Prediction};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::model::Hsgp;
use crate::optim::nelder_mead_max;

/// Default evaluation budget for MAP searches.
pub const DEFAULT_BUDGET: usize = 2000;
/// Initial simplex edge on the log scale.
const MAP_STEP: f64 = 0.5;

/// `Gamma(shape, rate)`: density ∝ x^(shape−1) e^(−rate·x), mean shape/rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGamma")]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

#[derive(Deserialize)]
struct RawGamma {
    shape: f64,
    rate: f64,
}

impl TryFrom<RawGamma> for GammaPrior {
    type Error = HsgpError;
    fn try_from(r: RawGamma) -> Result<Self> {
        GammaPrior::new(r.shape, r.rate)
    }
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        ensure_positive("shape", shape)?;
        ensure_positive("rate", rate)?;
        Ok(GammaPrior { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln() - self.rate * x
    }
}

/// Independent Gamma priors on σ, α and every lengthscale (shape–rate
/// convention, so the lengthscale default has mean 0.15).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub noise_prior: GammaPrior,
    pub alpha_prior: GammaPrior,
    pub lengthscale_prior: GammaPrior,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            noise_prior: GammaPrior { shape: 1.0, rate: 1.0 },
            alpha_prior: GammaPrior { shape: 1.0, rate: 1.0 },
            lengthscale_prior: GammaPrior { shape: 3.75, rate: 25.0 },
        }
    }
}

impl PriorConfig {
    /// Prior log-density of the hyperparameters on their natural scale.
    pub fn log_density(&self, h: &Hyperparameters) -> f64 {
        self.noise_prior.log_pdf(h.noise_sd)
            + self.alpha_prior.log_pdf(h.alpha)
            + h.lengthscales.iter().map(|&l| self.lengthscale_prior.log_pdf(l)).sum::<f64>()
    }

    /// Prior log-density of the log-hyperparameters (adds the Jacobian Σ log θ).
    pub fn log_density_log_scale(&self, h: &Hyperparameters) -> f64 {
        self.log_density(h) + h.to_log().iter().sum::<f64>()
    }
}

/// (σ, α, ℓ_1..ℓ_D). The log-scale vector is laid out in the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub noise_sd: f64,
    pub alpha: f64,
    pub lengthscales: Vec<f64>,
}

impl Hyperparameters {
    pub fn new(noise_sd: f64, alpha: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let h = Hyperparameters {
            noise_sd,
            alpha,
            lengthscales,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("noise_sd", self.noise_sd)?;
        ensure_positive("alpha", self.alpha)?;
        if self.lengthscales.is_empty() {
            return input_err("need at least one lengthscale");
        }
        for &l in &self.lengthscales {
            ensure_positive("lengthscale", l)?;
        }
        Ok(())
    }

    pub fn to_log(&self) -> Vec<f64> {
        let mut v = vec![self.noise_sd.ln(), self.alpha.ln()];
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v
    }

    pub fn from_log(theta: &[f64]) -> Self {
        Hyperparameters {
            noise_sd: theta[0].exp(),
            alpha: theta[1].exp(),
            lengthscales: theta[2..].iter().map(|t| t.exp()).collect(),
        }
    }

    pub fn kernel(&self, family: KernelFamily) -> Result<KernelSpec> {
        KernelSpec::new(family, self.alpha, self.lengthscales.clone(), None)
    }
}

/// The configuration a weight posterior was computed under, kept so that
/// predictions can rebuild the features.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSnapshot {
    pub spec: KernelSpec,
    pub hsgp: Hsgp,
    pub noise_sd: f64,
}

/// Gaussian posterior of the standard-normal weights β.
#[derive(Debug, Clone)]
pub struct WeightPosterior {
    pub mean: DVector<f64>,
    /// Lower-triangular `F` with `F Fᵀ = (I + Φ̃ᵀΦ̃/σ²)⁻¹`.
    pub cov_factor: DMatrix<f64>,
    pub snapshot: Option<ModelSnapshot>,
}

/// Cholesky of the weight precision `I + G/σ²`.
fn precision_factor(gram: &DMatrix<f64>, noise_sd: f64) -> Result<Cholesky<f64, Dyn>> {
    let s2 = noise_sd * noise_sd;
    let m = gram.nrows();
    let a = DMatrix::from_fn(m, m, |i, j| gram[(i, j)] / s2 + if i == j { 1.0 } else { 0.0 });
    Cholesky::new(a).ok_or_else(|| HsgpError::Numerical("weight precision is not positive definite".into()))
}

/// Posterior from `G = Φ̃ᵀΦ̃` and `b = Φ̃ᵀy`.
///
/// The covariance factor is obtained from the Cholesky factor of the
/// index-reversed precision, so it comes out lower-triangular without forming
/// the inverse explicitly.
pub fn weight_posterior_from_stats(gram: &DMatrix<f64>, rhs: &DVector<f64>, noise_sd: f64) -> Result<WeightPosterior> {
    ensure_positive("noise_sd", noise_sd)?;
    let m = gram.nrows();
    if gram.ncols() != m || rhs.len() != m {
        return input_err("sufficient statistics have inconsistent sizes");
    }
    if gram.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
        return input_err("non-finite design or targets");
    }
    let rev = |i: usize| m - 1 - i;
    let reversed = DMatrix::from_fn(m, m, |i, j| gram[(rev(i), rev(j))]);
    let chol = precision_factor(&reversed, noise_sd)?;
    let mut upper = DMatrix::identity(m, m);
    chol.l_dirty().lower_triangle().tr_solve_lower_triangular_mut(&mut upper);
    let cov_factor = DMatrix::from_fn(m, m, |i, j| upper[(rev(i), rev(j))]);
    let mean = &cov_factor * (cov_factor.transpose() * rhs) / (noise_sd * noise_sd);
    Ok(WeightPosterior {
        mean,
        cov_factor,
        snapshot: None,
    })
}

/// Conjugate posterior of β for `y = Φ̃β + ε`, `β ~ N(0, I)`, `ε ~ N(0, σ²I)`.
pub fn fit_weights(phi_scaled: &DMatrix<f64>, y: &DVector<f64>, noise_sd: f64) -> Result<WeightPosterior> {
    if phi_scaled.nrows() != y.len() {
        return input_err(format!("{} design rows but {} targets", phi_scaled.nrows(), y.len()));
    }
    if phi_scaled.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return input_err("non-finite design or targets");
    }
    let gram = phi_scaled.transpose() * phi_scaled;
    let rhs = phi_scaled.transpose() * y;
    weight_posterior_from_stats(&gram, &rhs, noise_sd)
}

/// Fit the weights for a kernel and basis, keeping the configuration for prediction.
pub fn fit_hsgp(hsgp: &Hsgp, spec: &KernelSpec, x: &DMatrix<f64>, y: &DVector<f64>, noise_sd: f64) -> Result<WeightPosterior> {
    let features = hsgp.scaled_design(spec, x)?;
    let mut post = fit_weights(&features, y, noise_sd)?;
    post.snapshot = Some(ModelSnapshot {
        spec: spec.clone(),
        hsgp: hsgp.clone(),
        noise_sd,
    });
    Ok(post)
}

impl WeightPosterior {
    pub fn num_weights(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.cov_factor * self.cov_factor.transpose()
    }

    /// Latent mean and sd for rows of scaled features.
    pub fn predict_features(&self, features: &DMatrix<f64>) -> Result<Prediction> {
        if features.ncols() != self.num_weights() {
            return input_err("feature matrix has the wrong number of columns");
        }
        let mean = features * &self.mean;
        let g = features * &self.cov_factor;
        let sd = DVector::from_iterator(g.nrows(), g.row_iter().map(|r| r.norm()));
        Ok(Prediction { mean, sd })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.num_weights(), |_, _| -> f64 { StandardNormal.sample(rng) });
        &self.mean + &self.cov_factor * z
    }
}

/// Latent posterior mean and sd of `f(x*) = Φ̃(x*)β`.
pub fn predict_hsgp(post: &WeightPosterior, xstar: &DMatrix<f64>) -> Result<Prediction> {
    let snap = post
        .snapshot
        .as_ref()
        .ok_or_else(|| HsgpError::Input("posterior was fitted without a model snapshot; use predict_features".into()))?;
    let features = snap.hsgp.scaled_design(&snap.spec, xstar)?;
    post.predict_features(&features)
}

/// Data and basis with the hyperparameter-free pieces precomputed.
#[derive(Debug, Clone)]
pub struct HsgpProblem {
    hsgp: Hsgp,
    family: KernelFamily,
    x: DMatrix<f64>,
    y: DVector<f64>,
    phi: DMatrix<f64>,
    phit_phi: DMatrix<f64>,
    phit_y: DVector<f64>,
    yty: f64,
}

impl HsgpProblem {
    pub fn new(hsgp: Hsgp, family: KernelFamily, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        if !family.has_spectral_density() {
            return Err(HsgpError::Unsupported(format!("{family} has no Laplace-basis expansion")));
        }
        if x.nrows() != y.len() || x.nrows() == 0 {
            return input_err("need matching, non-empty inputs and targets");
        }
        if y.iter().any(|v| !v.is_finite()) {
            return input_err("targets must be finite");
        }
        let phi = hsgp.design(x)?.phi;
        let phit_phi = phi.transpose() * &phi;
        let phit_y = phi.transpose() * y;
        Ok(HsgpProblem {
            hsgp,
            family,
            x: x.clone(),
            y: y.clone(),
            yty: y.dot(y),
            phi,
            phit_phi,
            phit_y,
        })
    }

    pub fn hsgp(&self) -> &Hsgp {
        &self.hsgp
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.y
    }

    /// Unscaled eigenfunction matrix Φ.
    pub fn design(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn check(&self, h: &Hyperparameters) -> Result<KernelSpec> {
        h.validate()?;
        if h.lengthscales.len() != self.hsgp.dim() {
            return input_err("lengthscale count does not match the domain dimension");
        }
        h.kernel(self.family)
    }

    fn scaled_stats(&self, h: &Hyperparameters) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let spec = self.check(h)?;
        let s = self.hsgp.spectral_diag(&spec)?.sqrt();
        let m = s.len();
        let gram = DMatrix::from_fn(m, m, |i, j| s[i] * s[j] * self.phit_phi[(i, j)]);
        let rhs = DVector::from_fn(m, |i, _| s[i] * self.phit_y[i]);
        Ok((gram, rhs))
    }

    /// `log N(y | 0, Φ̃Φ̃ᵀ + σ²I)` via the matrix determinant lemma and Woodbury.
    pub fn log_marginal(&self, h: &Hyperparameters) -> Result<f64> {
        let (gram, rhs) = self.scaled_stats(h)?;
        let s2 = h.noise_sd * h.noise_sd;
        let chol = precision_factor(&gram, h.noise_sd)?;
        let l = chol.l_dirty();
        let mut w = rhs;
        l.solve_lower_triangular_mut(&mut w);
        let n = self.len() as f64;
        let log_det = n * s2.ln() + 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let quad = self.yty / s2 - w.norm_squared() / (s2 * s2);
        Ok(-0.5 * quad - 0.5 * log_det - 0.5 * n * (2.0 * PI).ln())
    }

    /// Conditional posterior of β given the hyperparameters.
    pub fn weight_posterior(&self, h: &Hyperparameters) -> Result<WeightPosterior> {
        let (gram, rhs) = self.scaled_stats(h)?;
        let mut post = weight_posterior_from_stats(&gram, &rhs, h.noise_sd)?;
        post.snapshot = Some(ModelSnapshot {
            spec: h.kernel(self.family)?,
            hsgp: self.hsgp.clone(),
            noise_sd: h.noise_sd,
        });
        Ok(post)
    }

    /// `log N(y | Φ̃β, σ²I)`.
    pub fn log_likelihood(&self, h: &Hyperparameters, beta: &[f64]) -> Result<f64> {
        let spec = self.check(h)?;
        if beta.len() != self.hsgp.num_basis() {
            return input_err("weight vector has the wrong length");
        }
        let diag = self.hsgp.spectral_diag(&spec)?;
        let f = crate::model::evaluate_with_design(&self.phi, &diag, beta);
        let s2 = h.noise_sd * h.noise_sd;
        let n = self.len() as f64;
        let rss = (&self.y - f).norm_squared();
        Ok(-0.5 * rss / s2 - 0.5 * n * (2.0 * PI * s2).ln())
    }
}

/// Joint log-density of (log σ, log α, log ℓ, β) given the data: likelihood,
/// standard-normal weight prior, Gamma hyperpriors and the log-scale Jacobian.
pub fn log_joint(problem: &HsgpProblem, h: &Hyperparameters, beta: &[f64], priors: &PriorConfig) -> Result<f64> {
    let lik = problem.log_likelihood(h, beta)?;
    let weights = -0.5 * beta.iter().map(|b| b * b).sum::<f64>() - 0.5 * beta.len() as f64 * (2.0 * PI).ln();
    Ok(lik + weights + priors.log_density_log_scale(h))
}

/// A log-density over log-hyperparameters.
pub trait LogDensity {
    fn dim(&self) -> usize;
    /// −∞ for points where the density cannot be evaluated.
    fn log_density(&self, theta: &[f64]) -> f64;
}

/// Weight-marginalized HSGP posterior over log-hyperparameters.
pub struct HsgpPosterior<'a> {
    pub problem: &'a HsgpProblem,
    pub priors: &'a PriorConfig,
}

impl LogDensity for HsgpPosterior<'_> {
    fn dim(&self) -> usize {
        2 + self.problem.hsgp.dim()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let h = Hyperparameters::from_log(theta);
        match self.problem.log_marginal(&h) {
            Ok(v) if v.is_finite() => v + self.priors.log_density_log_scale(&h),
            _ => f64::NEG_INFINITY,
        }
    }
}

/// Data for the exact GP with unknown hyperparameters.
#[derive(Debug, Clone)]
pub struct ExactProblem {
    pub family: KernelFamily,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl ExactProblem {
    pub fn fit(&self, h: &Hyperparameters) -> Result<GpFit<KernelSpec>> {
        fit_exact(&self.x, &self.y, &h.kernel(self.family)?, h.noise_sd)
    }
}

/// Exact-GP posterior over log-hyperparameters.
pub struct ExactPosterior<'a> {
    pub problem: &'a ExactProblem,
    pub priors: &'a PriorConfig,
}

impl LogDensity for ExactPosterior<'_> {
    fn dim(&self) -> usize {
        2 + self.problem.x.ncols()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let h = Hyperparameters::from_log(theta);
        match self.problem.fit(&h) {
            Ok(fit) => {
                let v = fit.log_marginal_likelihood();
                if v.is_finite() {
                    v + self.priors.log_density_log_scale(&h)
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Result of a MAP search.
#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub hyper: Hyperparameters,
    /// Log posterior (up to a constant) at `hyper`, on the log scale.
    pub log_posterior: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Maximize any log-hyperparameter density from `init`.
pub fn maximize<T: LogDensity>(target: &T, init: &Hyperparameters, budget: usize) -> Result<MapResult> {
    init.validate()?;
    let theta0 = init.to_log();
    if theta0.len() != target.dim() {
        return input_err("initial hyperparameters have the wrong dimension");
    }
    if !target.log_density(&theta0).is_finite() {
        return input_err("log-density is not finite at the initial hyperparameters");
    }
    let r = nelder_mead_max(|t| target.log_density(t), &theta0, MAP_STEP, budget);
    Ok(MapResult {
        hyper: Hyperparameters::from_log(&r.x),
        log_posterior: r.value,
        evaluations: r.evaluations,
        converged: r.converged,
    })
}

/// MAP hyperparameters of the HSGP model with the weights integrated out.
pub fn optimize_map(problem: &HsgpProblem, priors: &PriorConfig, init: &Hyperparameters, budget: usize) -> Result<MapResult> {
    maximize(&HsgpPosterior { problem, priors }, init, budget)
}

/// MAP hyperparameters of the exact GP.
pub fn optimize_map_exact(problem: &ExactProblem, priors: &PriorConfig, init: &Hyperparameters, budget: usize) -> Result<MapResult> {
    maximize(&ExactPosterior { problem, priors }, init, budget)
}

/// Gaussian (Laplace) approximation at a mode: the covariance of the
/// log-hyperparameters from a central-difference Hessian with step `h`.
/// `None` if the Hessian is not negative definite.
pub fn laplace_covariance<T: LogDensity>(target: &T, mode: &[f64], h: f64) -> Option<DMatrix<f64>> {
    let d = mode.len();
    let f = |dx: &[(usize, f64)]| {
        let mut t = mode.to_vec();
        for &(k, v) in dx {
            t[k] += v;
        }
        target.log_density(&t)
    };
    let f0 = f(&[]);
    let mut neg_hess = DMatrix::zeros(d, d);
    for i in 0..d {
        let second = (f(&[(i, h)]) - 2.0 * f0 + f(&[(i, -h)])) / (h * h);
        neg_hess[(i, i)] = -second;
        for j in 0..i {
            let mixed = (f(&[(i, h), (j, h)]) - f(&[(i, h), (j, -h)]) - f(&[(i, -h), (j, h)]) + f(&[(i, -h), (j, -h)])) / (4.0 * h * h);
            neg_hess[(i, j)] = -mixed;
            neg_hess[(j, i)] = -mixed;
        }
    }
    if neg_hess.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Cholesky::new(neg_hess).map(|c| c.inverse())
}

/// Sampler settings. `iters` counts kept draws after `warmup`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub iters: usize,
    pub warmup: usize,
    pub seed: u64,
    pub target_accept: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            iters: 2000,
            warmup: 1000,
            seed: 0,
            target_accept: 0.3,
        }
    }
}

/// Adaptive random-walk Metropolis over log-hyperparameters.
///
/// During warmup the global proposal scale follows a Robbins–Monro update
/// toward `target_accept`; halfway through, the proposal shape switches to the
/// empirical covariance of the second warmup quarter. Everything is frozen for
/// the kept iterations. `on_kept` sees every kept state and may draw from the
/// chain's RNG. Returns the acceptance rate over kept iterations.
pub fn adaptive_metropolis<T, F>(target: &T, init: &[f64], config: &McmcConfig, mut on_kept: F) -> Result<f64>
where
    T: LogDensity,
    F: FnMut(&[f64], &mut ChaCha8Rng) -> Result<()>,
{
    let d = target.dim();
    if init.len() != d {
        return input_err("initial state has the wrong dimension");
    }
    if !(config.target_accept > 0.0 && config.target_accept < 1.0) {
        return input_err("target_accept must lie in (0, 1)");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = init.to_vec();
    let mut lp = target.log_density(&state);
    if !lp.is_finite() {
        return input_err("log-density is not finite at the initial state");
    }

    let mut shape = DMatrix::<f64>::identity(d, d);
    let mut log_scale = 0.1f64.ln();
    let mut gain_clock = 0usize;
    let mut warm_states: Vec<Vec<f64>> = Vec::new();
    let (quarter, half) = (config.warmup / 4, config.warmup / 2);
    let mut accepted = 0usize;

    for it in 0..config.warmup + config.iters {
        let z = DVector::from_fn(d, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let step = &shape * z * log_scale.exp();
        let proposal: Vec<f64> = state.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let lp_new = target.log_density(&proposal);
        let u: f64 = rng.random();
        let log_ratio = lp_new - lp;
        let accept_prob = if lp_new.is_finite() { log_ratio.min(0.0).exp() } else { 0.0 };
        let accept = lp_new.is_finite() && u.ln() < log_ratio;
        if accept {
            state = proposal;
            lp = lp_new;
        }

        if it < config.warmup {
            gain_clock += 1;
            log_scale += (accept_prob - config.target_accept) / (gain_clock as f64).powf(0.6);
            if it >= quarter && it < half {
                warm_states.push(state.clone());
            }
            if it + 1 == half && warm_states.len() > 2 * d {
                if let Some(l) = empirical_factor(&warm_states) {
                    shape = l;
                    log_scale = (2.38 / (d as f64).sqrt()).ln();
                    gain_clock = 0;
                }
            }
        } else {
            if accept {
                accepted += 1;
            }
            on_kept(&state, &mut rng)?;
        }
    }
    Ok(if config.iters == 0 {
        0.0
    } else {
        accepted as f64 / config.iters as f64
    })
}

fn empirical_factor(states: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let d = states[0].len();
    let n = states.len() as f64;
    let mean: Vec<f64> = (0..d).map(|k| states.iter().map(|s| s[k]).sum::<f64>() / n).collect();
    let cov = DMatrix::from_fn(d, d, |i, j| {
        states.iter().map(|s| (s[i] - mean[i]) * (s[j] - mean[j])).sum::<f64>() / (n - 1.0) + if i == j { 1e-8 } else { 0.0 }
    });
    Cholesky::new(cov).map(|c| c.l())
}

/// Kept draws of (log σ, log α, log ℓ_1..ℓ_D, β_1..β_m), one row per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcTrace {
    pub draws: DMatrix<f64>,
    pub acceptance_rate: f64,
    pub seed: u64,
    pub warmup: usize,
    pub kept: usize,
    pub lengthscale_dims: usize,
    pub num_weights: usize,
}

impl McmcTrace {
    fn num_hyper(&self) -> usize {
        2 + self.lengthscale_dims
    }

    pub fn hyperparameters(&self, i: usize) -> Hyperparameters {
        let row: Vec<f64> = (0..self.num_hyper()).map(|k| self.draws[(i, k)]).collect();
        Hyperparameters::from_log(&row)
    }

    pub fn beta(&self, i: usize) -> Vec<f64> {
        (0..self.num_weights).map(|k| self.draws[(i, self.num_hyper() + k)]).collect()
    }

    /// Natural-scale draws of lengthscale `d`.
    pub fn lengthscale_draws(&self, d: usize) -> Vec<f64> {
        self.draws.column(2 + d).iter().map(|v| v.exp()).collect()
    }

    pub fn noise_draws(&self) -> Vec<f64> {
        self.draws.column(0).iter().map(|v| v.exp()).collect()
    }

    pub fn alpha_draws(&self) -> Vec<f64> {
        self.draws.column(1).iter().map(|v| v.exp()).collect()
    }

    /// Header `iter,sigma,alpha,lengthscale…,beta_1..beta_m`, hyperparameters
    /// on the natural scale.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = vec!["iter".to_string(), "sigma".into(), "alpha".into()];
        if self.lengthscale_dims == 1 {
            header.push("lengthscale".into());
        } else {
            header.extend((1..=self.lengthscale_dims).map(|d| format!("lengthscale_{d}")));
        }
        header.extend((1..=self.num_weights).map(|j| format!("beta_{j}")));
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.draws.nrows() {
            let mut fields = vec![i.to_string()];
            for k in 0..self.draws.ncols() {
                let v = self.draws[(i, k)];
                fields.push(if k < self.num_hyper() { v.exp() } else { v }.to_string());
            }
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Central interval holding `level` of the draws.
pub fn central_interval(values: &[f64], level: f64) -> (f64, f64) {
    let tail = 0.5 * (1.0 - level);
    (quantile(values, tail), quantile(values, 1.0 - tail))
}

/// MCMC over hyperparameters and weights of the HSGP model.
pub fn mcmc_sample(problem: &HsgpProblem, priors: &PriorConfig, init: &Hyperparameters, config: &McmcConfig) -> Result<McmcTrace> {
    init.validate()?;
    let target = HsgpPosterior { problem, priors };
    let m = problem.hsgp.num_basis();
    let dh = target.dim();
    let mut rows: Vec<f64> = Vec::with_capacity(config.iters * (dh + m));
    let rate = adaptive_metropolis(&target, &init.to_log(), config, |theta, rng| {
        let post = problem.weight_posterior(&Hyperparameters::from_log(theta))?;
        rows.extend_from_slice(theta);
        rows.extend(post.sample(rng).iter());
        Ok(())
    })?;
    Ok(McmcTrace {
        draws: DMatrix::from_row_slice(config.iters, dh + m, &rows),
        acceptance_rate: rate,
        seed: config.seed,
        warmup: config.warmup,
        kept: config.iters,
        lengthscale_dims: dh - 2,
        num_weights: m,
    })
}

/// MCMC over the exact GP's hyperparameters (no weights).
pub fn mcmc_exact(problem: &ExactProblem, priors: &PriorConfig, init: &Hyperparameters, config: &McmcConfig) -> Result<McmcTrace> {
    init.validate()?;
    let target = ExactPosterior { problem, priors };
    let dh = target.dim();
    let mut rows: Vec<f64> = Vec::with_capacity(config.iters * dh);
    let rate = adaptive_metropolis(&target, &init.to_log(), config, |theta, _| {
        rows.extend_from_slice(theta);
        Ok(())
    })?;
    Ok(McmcTrace {
        draws: DMatrix::from_row_slice(config.iters, dh, &rows),
        acceptance_rate: rate,
        seed: config.seed,
        warmup: config.warmup,
        kept: config.iters,
        lengthscale_dims: dh - 2,
        num_weights: 0,
    })
}

/// Posterior mean and sd of f(x*) across the draws of an HSGP trace.
pub fn predict_from_trace(problem: &HsgpProblem, trace: &McmcTrace, xstar: &DMatrix<f64>) -> Result<Prediction> {
    if trace.num_weights != problem.hsgp.num_basis() || trace.kept == 0 {
        return input_err("trace does not match this problem");
    }
    let phi = problem.hsgp.design(xstar)?.phi;
    let q = xstar.nrows();
    let mut sum = DVector::zeros(q);
    let mut sum_sq = DVector::zeros(q);
    for i in 0..trace.kept {
        let h = trace.hyperparameters(i);
        let spec = h.kernel(problem.family)?;
        let diag = problem.hsgp.spectral_diag(&spec)?;
        let f = crate::model::evaluate_with_design(&phi, &diag, &trace.beta(i));
        sum_sq += f.component_mul(&f);
        sum += f;
    }
    let k = trace.kept as f64;
    let mean = sum / k;
    let sd = DVector::from_fn(q, |i, _| (sum_sq[i] / k - mean[i] * mean[i]).max(0.0).sqrt());
    Ok(Prediction { mean, sd })
}
