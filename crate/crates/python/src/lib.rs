//! Python bindings. Inputs are plain lists: a flat list of floats for
//! one-dimensional data, or a list of rows.

use hsgp_core::inference::MapResult;
use hsgp_core::{self as core, HsgpError, HsgpProblem, Hyperparameters, KernelFamily, KernelSpec, McmcConfig, PriorConfig};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: HsgpError) -> PyErr {
    match e {
        HsgpError::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[derive(FromPyObject)]
enum Inputs {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl Inputs {
    fn matrix(self) -> PyResult<DMatrix<f64>> {
        match self {
            Inputs::Flat(v) => Ok(DMatrix::from_column_slice(v.len(), 1, &v)),
            Inputs::Rows(rows) => {
                let d = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != d) {
                    return Err(PyValueError::new_err("input rows have different lengths"));
                }
                Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
            }
        }
    }
}

fn family(name: &str) -> PyResult<KernelFamily> {
    name.parse().map_err(to_py)
}

fn prediction(p: core::Prediction) -> (Vec<f64>, Vec<f64>) {
    (p.mean.as_slice().to_vec(), p.sd.as_slice().to_vec())
}

fn hyper_dict<'py>(py: Python<'py>, h: &Hyperparameters) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("noise_sd", h.noise_sd)?;
    d.set_item("alpha", h.alpha)?;
    d.set_item("lengthscales", h.lengthscales.clone())?;
    Ok(d)
}

/// A stationary kernel: `"se"`, `"matern32"` or `"periodic"`.
#[pyclass(module = "hsgp", frozen)]
struct Kernel {
    spec: KernelSpec,
}

#[pymethods]
impl Kernel {
    #[new]
    #[pyo3(signature = (family_name, alpha, lengthscales, omega0=None))]
    fn new(family_name: &str, alpha: f64, lengthscales: Vec<f64>, omega0: Option<f64>) -> PyResult<Self> {
        let spec = KernelSpec::new(family(family_name)?, alpha, lengthscales, omega0).map_err(to_py)?;
        Ok(Kernel { spec })
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.spec.family.name()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    #[getter]
    fn lengthscales(&self) -> Vec<f64> {
        self.spec.lengthscales.clone()
    }

    fn covariance(&self, x: Vec<f64>, x2: Vec<f64>) -> PyResult<f64> {
        self.spec.covariance(&x, &x2).map_err(to_py)
    }

    fn spectral_density(&self, omega: f64) -> PyResult<f64> {
        self.spec.spectral_density(omega).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Kernel({:?}, alpha={}, lengthscales={:?})", self.spec.family.name(), self.spec.alpha, self.spec.lengthscales)
    }
}

/// Laplace basis on `[-S, S]` extended by the boundary factor `c`.
#[pyclass(module = "hsgp", frozen)]
struct Hsgp {
    inner: core::Hsgp,
    half_range: f64,
    c: f64,
    m: usize,
}

#[pymethods]
impl Hsgp {
    #[new]
    fn new(half_range: f64, c: f64, m: usize) -> PyResult<Self> {
        let inner = core::Hsgp::univariate(half_range, c, m).map_err(to_py)?;
        Ok(Hsgp { inner, half_range, c, m })
    }

    #[getter]
    fn num_basis(&self) -> usize {
        self.inner.num_basis()
    }

    fn approx_covariance(&self, kernel: &Kernel, x: f64, x2: f64) -> PyResult<f64> {
        self.inner.approx_covariance(&kernel.spec, &[x], &[x2]).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Hsgp(half_range={}, c={}, m={})", self.half_range, self.c, self.m)
    }
}

/// Gaussian posterior of the basis weights for fixed hyperparameters.
#[pyclass(module = "hsgp", frozen)]
struct WeightPosterior {
    inner: core::WeightPosterior,
}

#[pymethods]
impl WeightPosterior {
    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean.as_slice().to_vec()
    }

    /// Latent-function mean and standard deviation at `x`.
    fn predict(&self, x: Inputs) -> PyResult<(Vec<f64>, Vec<f64>)> {
        core::predict_hsgp(&self.inner, &x.matrix()?).map(prediction).map_err(to_py)
    }
}

/// Exact GP conditioned on data.
#[pyclass(module = "hsgp", frozen)]
struct ExactFit {
    inner: core::GpFit<KernelSpec>,
}

#[pymethods]
impl ExactFit {
    fn predict(&self, x: Inputs) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.inner.predict(&x.matrix()?).map(prediction).map_err(to_py)
    }

    fn log_marginal_likelihood(&self) -> f64 {
        self.inner.log_marginal_likelihood()
    }
}

#[pyfunction]
fn fit_hsgp(hsgp: &Hsgp, kernel: &Kernel, x: Inputs, y: Vec<f64>, noise_sd: f64) -> PyResult<WeightPosterior> {
    let inner = core::fit_hsgp(&hsgp.inner, &kernel.spec, &x.matrix()?, &DVector::from_vec(y), noise_sd).map_err(to_py)?;
    Ok(WeightPosterior { inner })
}

#[pyfunction]
fn fit_exact(kernel: &Kernel, x: Inputs, y: Vec<f64>, noise_sd: f64) -> PyResult<ExactFit> {
    let inner = core::fit_exact(&x.matrix()?, &DVector::from_vec(y), &kernel.spec, noise_sd).map_err(to_py)?;
    Ok(ExactFit { inner })
}

/// Draw `(f, y)` from the prior at `x`.
#[pyfunction]
fn sample_prior(kernel: &Kernel, x: Inputs, noise_sd: f64, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let (f, y) = core::sample_prior(&kernel.spec, &x.matrix()?, noise_sd, seed).map_err(to_py)?;
    Ok((f.as_slice().to_vec(), y.as_slice().to_vec()))
}

#[pyfunction]
fn covariance_tv_error(family_name: &str, lengthscale: f64, half_range: f64, c: f64, m: usize) -> PyResult<f64> {
    core::covariance_tv_error(family(family_name)?, lengthscale, half_range, c, m).map_err(to_py)
}

/// Smallest m meeting the accuracy threshold, or `None`.
#[pyfunction]
fn min_basis_functions(family_name: &str, lengthscale_over_s: f64, c: f64) -> PyResult<Option<usize>> {
    core::min_basis_functions(family(family_name)?, lengthscale_over_s, c).map_err(to_py)
}

/// Smallest ℓ/S representable with `m` functions, or `None`.
#[pyfunction]
fn min_lengthscale(family_name: &str, m: usize, c: f64) -> PyResult<Option<f64>> {
    core::min_lengthscale(family(family_name)?, m, c).map_err(to_py)
}

#[pyfunction]
fn check_fit<'py>(
    py: Python<'py>,
    lengthscale: f64,
    half_range: f64,
    m: usize,
    c: f64,
    family_name: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let r = core::check_fit(lengthscale, half_range, m, c, family(family_name)?).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("passed", r.passed)?;
    d.set_item("lengthscale_over_s", r.lengthscale_over_s)?;
    d.set_item("threshold", r.threshold)?;
    d.set_item("margin", r.margin)?;
    d.set_item("remediation", r.remediation)?;
    Ok(d)
}

/// Variance coefficients of the cosine expansion, orders `0..=j_max`.
#[pyfunction]
fn periodic_coefficients(lengthscale: f64, j_max: usize, omega0: f64) -> PyResult<Vec<f64>> {
    core::periodic::periodic_coefficients(lengthscale, j_max, omega0).map(|b| b.coeffs).map_err(to_py)
}

fn problem(hsgp: &Hsgp, family_name: &str, x: Inputs, y: Vec<f64>) -> PyResult<HsgpProblem> {
    HsgpProblem::new(hsgp.inner.clone(), family(family_name)?, &x.matrix()?, &DVector::from_vec(y)).map_err(to_py)
}

/// MAP hyperparameters of the HSGP model under the default priors.
#[pyfunction]
#[pyo3(signature = (hsgp, family_name, x, y, noise_sd, alpha, lengthscale, budget=2000))]
#[allow(clippy::too_many_arguments)]
fn optimize_map<'py>(
    py: Python<'py>,
    hsgp: &Hsgp,
    family_name: &str,
    x: Inputs,
    y: Vec<f64>,
    noise_sd: f64,
    alpha: f64,
    lengthscale: f64,
    budget: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let p = problem(hsgp, family_name, x, y)?;
    let init = Hyperparameters::new(noise_sd, alpha, vec![lengthscale]).map_err(to_py)?;
    let MapResult { hyper, log_posterior, converged, .. } =
        core::optimize_map(&p, &PriorConfig::default(), &init, budget).map_err(to_py)?;
    let d = hyper_dict(py, &hyper)?;
    d.set_item("log_posterior", log_posterior)?;
    d.set_item("converged", converged)?;
    Ok(d)
}

/// Posterior draws of (σ, α, ℓ) under the default priors.
#[pyfunction]
#[pyo3(signature = (hsgp, family_name, x, y, noise_sd, alpha, lengthscale, iters=2000, warmup=1000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn mcmc_sample<'py>(
    py: Python<'py>,
    hsgp: &Hsgp,
    family_name: &str,
    x: Inputs,
    y: Vec<f64>,
    noise_sd: f64,
    alpha: f64,
    lengthscale: f64,
    iters: usize,
    warmup: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = problem(hsgp, family_name, x, y)?;
    let init = Hyperparameters::new(noise_sd, alpha, vec![lengthscale]).map_err(to_py)?;
    let config = McmcConfig { iters, warmup, seed, ..McmcConfig::default() };
    let trace = core::mcmc_sample(&p, &PriorConfig::default(), &init, &config).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("noise_sd", trace.noise_draws())?;
    d.set_item("alpha", trace.alpha_draws())?;
    d.set_item("lengthscale", trace.lengthscale_draws(0))?;
    d.set_item("acceptance_rate", trace.acceptance_rate)?;
    Ok(d)
}

#[pymodule]
fn hsgp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Kernel>()?;
    m.add_class::<Hsgp>()?;
    m.add_class::<WeightPosterior>()?;
    m.add_class::<ExactFit>()?;
    m.add_function(wrap_pyfunction!(fit_hsgp, m)?)?;
    m.add_function(wrap_pyfunction!(fit_exact, m)?)?;
    m.add_function(wrap_pyfunction!(sample_prior, m)?)?;
    m.add_function(wrap_pyfunction!(covariance_tv_error, m)?)?;
    m.add_function(wrap_pyfunction!(min_basis_functions, m)?)?;
    m.add_function(wrap_pyfunction!(min_lengthscale, m)?)?;
    m.add_function(wrap_pyfunction!(check_fit, m)?)?;
    m.add_function(wrap_pyfunction!(periodic_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_map, m)?)?;
    m.add_function(wrap_pyfunction!(mcmc_sample, m)?)?;
    Ok(())
}
