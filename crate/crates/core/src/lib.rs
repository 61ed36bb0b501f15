//! Reduced-rank Gaussian processes built from Laplace eigenfunctions.
//!
//! * [`kernels`]: squared-exponential, Matérn-3/2 and periodic kernels with spectral densities.
//! * [`basis`]: Dirichlet eigenpairs on a box and the tensor-product index set.
//! * [`model`]: the truncated covariance `Φ Δ Φᵀ` and the linear basis-function model.
//! * [`periodic`]: cosine-series expansion of the periodic squared-exponential kernel.
//! * [`exact`]: dense Cholesky GP regression used as ground truth.
//! * [`inference`]: weight posteriors, MAP hyperparameters and MCMC.
//! * [`diagnostics`]: total-variation accuracy criterion and minimum-m / minimum-ℓ lookups.
//! * [`optim`]: Nelder–Mead maximization used by the MAP search.

pub mod basis;
pub mod diagnostics;
pub mod error;
pub mod exact;
pub mod inference;
pub mod kernels;
pub mod model;
pub mod optim;
pub mod periodic;
pub mod quadrature;

pub use basis::{build_tuples, BasisConfig, DomainConfig};
pub use diagnostics::{check_fit, covariance_tv_error, min_basis_functions, min_lengthscale, DiagnosticsReport, FitCheck};
pub use error::{HsgpError, Result};
pub use exact::{fit_exact, predict_exact, sample_prior, GpFit, Prediction};
pub use inference::{
    fit_hsgp, fit_weights, log_joint, mcmc_sample, optimize_map, predict_hsgp, GammaPrior, HsgpProblem, Hyperparameters,
    McmcConfig, McmcTrace, PriorConfig, WeightPosterior,
};
pub use kernels::{Covariance, KernelFamily, KernelSpec};
pub use model::{Hsgp, SpectralDiag};
