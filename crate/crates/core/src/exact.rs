//! Dense Gaussian-process regression: the ground truth the reduced-rank model
//! is measured against.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure_positive, input_err, HsgpError, Result};
use crate::kernels::{cross_gram, gram, Covariance, KernelSpec};

/// Initial diagonal jitter relative to the kernel magnitude.
pub const JITTER_START: f64 = 1e-8;
/// Largest relative jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-4;

/// Posterior (or predictive) mean and standard deviation at a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub sd: DVector<f64>,
}

/// Cholesky of `a + (base + jitter)·I`, escalating jitter ×10 from
/// `JITTER_START·scale` to `JITTER_MAX·scale`. Returns the factor and the
/// jitter that was used.
pub fn jittered_cholesky(a: &DMatrix<f64>, base: f64, scale: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = JITTER_START * scale;
    loop {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += base + jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
        jitter *= 10.0;
        if jitter > JITTER_MAX * scale * (1.0 + 1e-9) {
            break;
        }
    }
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    Err(HsgpError::Numerical(format!(
        "Cholesky failed for a {n}×{n} matrix after jitter up to {max:e}; eigenvalues span [{lo:e}, {hi:e}] with diagonal shift {base:e}",
        n = a.nrows(),
        max = JITTER_MAX * scale,
        lo = eig.min(),
        hi = eig.max(),
    )))
}

/// Exact GP conditioned on `(x, y)` under Gaussian noise.
#[derive(Debug, Clone)]
pub struct GpFit<K> {
    kernel: K,
    x: DMatrix<f64>,
    y: DVector<f64>,
    noise_sd: f64,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    weights: DVector<f64>,
}

/// Fit the exact GP `y ~ N(0, K + σ²I)`.
pub fn fit_exact(x: &DMatrix<f64>, y: &DVector<f64>, spec: &KernelSpec, noise_sd: f64) -> Result<GpFit<KernelSpec>> {
    GpFit::new(spec.clone(), x, y, noise_sd)
}

impl<K: Covariance> GpFit<K> {
    pub fn new(kernel: K, x: &DMatrix<f64>, y: &DVector<f64>, noise_sd: f64) -> Result<Self> {
        if x.nrows() == 0 {
            return input_err("need at least one observation");
        }
        if x.nrows() != y.len() {
            return input_err(format!("{} input rows but {} targets", x.nrows(), y.len()));
        }
        if x.ncols() != kernel.dim() {
            return input_err("input dimension does not match the kernel");
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return input_err("inputs and targets must be finite");
        }
        ensure_positive("noise_sd", noise_sd)?;
        let k = gram(&kernel, x);
        let (chol, jitter) = jittered_cholesky(&k, noise_sd * noise_sd, kernel.magnitude())?;
        let weights = chol.solve(y);
        Ok(GpFit {
            kernel,
            x: x.clone(),
            y: y.clone(),
            noise_sd,
            chol,
            jitter,
            weights,
        })
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular `L` with `L Lᵀ = K + (σ² + jitter) I`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `log N(y | 0, K + σ²I)`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.y.len() as f64;
        let log_det_half: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * self.y.dot(&self.weights) - log_det_half - 0.5 * n * (2.0 * PI).ln()
    }

    /// Posterior of the latent function at `xstar`.
    pub fn predict(&self, xstar: &DMatrix<f64>) -> Result<Prediction> {
        self.predict_inner(xstar, false)
    }

    /// Posterior predictive for new observations (latent variance plus σ²).
    pub fn predict_noisy(&self, xstar: &DMatrix<f64>) -> Result<Prediction> {
        self.predict_inner(xstar, true)
    }

    fn predict_inner(&self, xstar: &DMatrix<f64>, noisy: bool) -> Result<Prediction> {
        if xstar.ncols() != self.x.ncols() {
            return input_err("prediction inputs have the wrong dimension");
        }
        let kstar = cross_gram(&self.kernel, &self.x, xstar);
        let mean = kstar.transpose() * &self.weights;
        let mut v = kstar;
        self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
        let extra = if noisy { self.noise_sd * self.noise_sd } else { 0.0 };
        let rows = crate::kernels::rows_of(xstar);
        let sd = DVector::from_iterator(
            xstar.nrows(),
            rows.iter().enumerate().map(|(j, r)| {
                let prior = self.kernel.eval(r, r);
                let var = prior - v.column(j).norm_squared();
                (var.max(0.0) + extra).sqrt()
            }),
        );
        Ok(Prediction { mean, sd })
    }
}

/// Latent posterior mean and sd of an exact fit at `xstar`.
pub fn predict_exact<K: Covariance>(fit: &GpFit<K>, xstar: &DMatrix<f64>) -> Result<Prediction> {
    fit.predict(xstar)
}

/// Draw `f ~ N(0, K)` at the rows of `x` and `y = f + σε`, reproducibly from `seed`.
pub fn sample_prior(spec: &KernelSpec, x: &DMatrix<f64>, noise_sd: f64, seed: u64) -> Result<(DVector<f64>, DVector<f64>)> {
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return input_err("noise_sd must be finite and non-negative");
    }
    let k = spec.gram_matrix(x)?;
    let (chol, _) = jittered_cholesky(&k, 0.0, spec.alpha)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.nrows();
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let f = chol.l_dirty().lower_triangle() * z;
    let eps = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    let y = &f + eps * noise_sd;
    Ok((f, y))
}
