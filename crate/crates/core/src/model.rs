//! Truncated Hilbert-space covariance and the linearized (basis-function) GP.
//!
//! The eigenfunction matrix Φ depends only on the inputs and the box; kernel
//! hyperparameters enter solely through the spectral diagonal Δ, stored as a
//! vector.

use nalgebra::{DMatrix, DVector};

use crate::basis::{design_matrix, multi_eigenfunction_unchecked, sqrt_eigenvalue, BasisConfig, DesignMatrix, DomainConfig};
use crate::error::{input_err, HsgpError, Result};
use crate::kernels::{Covariance, KernelSpec};

/// `S*(√λ*_j)` for every multivariate basis function, in tuple order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDiag {
    pub values: Vec<f64>,
}

impl SpectralDiag {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sqrt(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.sqrt()).collect()
    }
}

/// A box domain together with a tensor-product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Hsgp {
    domain: DomainConfig,
    basis: BasisConfig,
    boundaries: Vec<f64>,
}

impl Hsgp {
    pub fn new(domain: DomainConfig, basis: BasisConfig) -> Result<Self> {
        if domain.dim() != basis.dim() {
            return input_err(format!(
                "domain has {} dimensions but the basis has {}",
                domain.dim(),
                basis.dim()
            ));
        }
        let boundaries = domain.boundaries();
        Ok(Hsgp {
            domain,
            basis,
            boundaries,
        })
    }

    /// One-dimensional convenience: `[-S, S]`, boundary factor `c`, `m` functions.
    pub fn univariate(half_range: f64, boundary_factor: f64, m: usize) -> Result<Self> {
        Self::new(
            DomainConfig::symmetric(half_range, boundary_factor)?,
            crate::basis::build_tuples(&[m])?,
        )
    }

    pub fn domain(&self) -> &DomainConfig {
        &self.domain
    }

    pub fn basis(&self) -> &BasisConfig {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Number of basis functions m*.
    pub fn num_basis(&self) -> usize {
        self.basis.len()
    }

    fn check_spec(&self, spec: &KernelSpec) -> Result<()> {
        if !spec.family.has_spectral_density() {
            return Err(HsgpError::Unsupported(format!(
                "{} cannot be expanded in Laplace eigenfunctions",
                spec.family
            )));
        }
        if spec.dim() != self.dim() {
            return input_err(format!(
                "kernel has {} lengthscales but the domain has {} dimensions",
                spec.dim(),
                self.dim()
            ));
        }
        Ok(())
    }

    pub fn spectral_diag(&self, spec: &KernelSpec) -> Result<SpectralDiag> {
        self.check_spec(spec)?;
        let mut root = vec![0.0; self.dim()];
        let values = self
            .basis
            .tuples()
            .map(|t| {
                for (d, &j) in t.iter().enumerate() {
                    root[d] = sqrt_eigenvalue(j, self.boundaries[d]);
                }
                spec.spectral_unchecked(&root)
            })
            .collect();
        Ok(SpectralDiag { values })
    }

    /// Φ for raw (uncentered) inputs.
    pub fn design(&self, x: &DMatrix<f64>) -> Result<DesignMatrix> {
        let xc = self.domain.center_inputs(x)?;
        design_matrix(&xc, &self.domain, &self.basis)
    }

    /// Σ_j Δ_j φ*_j(x) φ*_j(x2) for raw inputs.
    pub fn approx_covariance(&self, spec: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64> {
        if x.len() != self.dim() || x2.len() != self.dim() {
            return input_err("point dimension does not match the domain");
        }
        Ok(self.approx_kernel(spec)?.eval(x, x2))
    }

    /// Φ Δ Φᵀ.
    pub fn approx_gram(&self, spec: &KernelSpec, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let diag = self.spectral_diag(spec)?;
        let scaled = scale_columns(&self.design(x)?.phi, &diag.sqrt());
        Ok(&scaled * scaled.transpose())
    }

    /// `f(x_i) = Σ_j √Δ_j φ*_j(x_i) β_j`.
    pub fn evaluate_function(&self, weights: &[f64], spec: &KernelSpec, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if weights.len() != self.num_basis() {
            return input_err(format!(
                "expected {} weights, got {}",
                self.num_basis(),
                weights.len()
            ));
        }
        let diag = self.spectral_diag(spec)?;
        let phi = self.design(x)?.phi;
        Ok(evaluate_with_design(&phi, &diag, weights))
    }

    /// Φ·diag(√Δ), the feature matrix whose weights have a standard-normal prior.
    pub fn scaled_design(&self, spec: &KernelSpec, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let diag = self.spectral_diag(spec)?;
        Ok(scale_columns(&self.design(x)?.phi, &diag.sqrt()))
    }

    /// The truncated kernel as a [`Covariance`] object.
    pub fn approx_kernel(&self, spec: &KernelSpec) -> Result<ApproxKernel<'_>> {
        let diag = self.spectral_diag(spec)?;
        Ok(ApproxKernel {
            hsgp: self,
            diag,
            alpha: spec.alpha,
        })
    }
}

/// Evaluate the basis expansion with a precomputed Φ: O(n·m*).
pub fn evaluate_with_design(phi: &DMatrix<f64>, diag: &SpectralDiag, weights: &[f64]) -> DVector<f64> {
    let coef = DVector::from_iterator(
        weights.len(),
        weights.iter().zip(&diag.values).map(|(b, s)| s.sqrt() * b),
    );
    phi * coef
}

/// Multiply column j of `m` by `scale[j]`.
pub fn scale_columns(m: &DMatrix<f64>, scale: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= scale[j];
    }
    out
}

/// Truncated kernel `Σ_j Δ_j φ*_j(x) φ*_j(x')`.
#[derive(Debug, Clone)]
pub struct ApproxKernel<'a> {
    hsgp: &'a Hsgp,
    diag: SpectralDiag,
    alpha: f64,
}

impl ApproxKernel<'_> {
    pub fn diag(&self) -> &SpectralDiag {
        &self.diag
    }
}

impl Covariance for ApproxKernel<'_> {
    fn dim(&self) -> usize {
        self.hsgp.dim()
    }

    fn magnitude(&self) -> f64 {
        self.alpha
    }

    fn eval(&self, x: &[f64], x2: &[f64]) -> f64 {
        let c = self.hsgp.domain.centers();
        let xc: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
        let x2c: Vec<f64> = x2.iter().zip(c).map(|(a, b)| a - b).collect();
        let l = &self.hsgp.boundaries;
        self.hsgp
            .basis
            .tuples()
            .zip(&self.diag.values)
            .map(|(t, s)| s * multi_eigenfunction_unchecked(t, l, &xc) * multi_eigenfunction_unchecked(t, l, &x2c))
            .sum()
    }
}
