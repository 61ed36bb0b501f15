//! Low-rank cosine-series representation of the periodic squared-exponential
//! kernel `k(τ) = α exp(-2 sin²(ω₀τ/2) / ℓ²)`.
//!
//! Writing `z = ℓ⁻²`, the kernel equals `α e^{-z} exp(z cos ω₀τ)`, whose
//! cosine coefficients are modified Bessel functions of the first kind.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, input_err, HsgpError, Result};
use crate::quadrature::trapezoid_uniform;

/// Largest Bessel argument accepted; beyond it `I_ν(z)` overflows `f64`.
pub const BESSEL_MAX_ARG: f64 = 700.0;
/// Normalized total-variation threshold used for the minimum-J search.
pub const PERIODIC_TV_THRESHOLD: f64 = 0.005;
pub const PERIODIC_MAX_TERMS: usize = 200;
const PERIODIC_QUAD_POINTS: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientScheme {
    /// Limit of the Taylor sub-sums: `q̃²_j = 2 I_j(ℓ⁻²) / e^{ℓ⁻²}`.
    Bessel,
    /// Finite J-th order Taylor truncation.
    Truncated,
}

/// Cosine orders `0..=J` with their variance coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicBasis {
    #[serde(rename = "J")]
    pub j_max: usize,
    pub omega0: f64,
    pub coeffs: Vec<f64>,
    pub scheme: CoefficientScheme,
}

impl PeriodicBasis {
    /// Number of linear-model features, `2J + 1`.
    pub fn num_features(&self) -> usize {
        2 * self.j_max + 1
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega0
    }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `ln I_ν(z)` from the power series, summed in log space.
fn ln_bessel_i(order: usize, z: f64) -> f64 {
    if z == 0.0 {
        return if order == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let ln_half = (0.5 * z).ln();
    let mut lt = order as f64 * ln_half - ln_factorial(order);
    let mut terms = vec![lt];
    let mut peak = lt;
    let cutoff = (1e-16f64).ln();
    let mut k = 0usize;
    loop {
        let kf = (k + 1) as f64;
        let step = 2.0 * ln_half - kf.ln() - (kf + order as f64).ln();
        lt += step;
        terms.push(lt);
        peak = peak.max(lt);
        k += 1;
        // terms decrease once step < 0; stop when negligible against the peak
        if step < 0.0 && lt - peak < cutoff {
            break;
        }
    }
    log_sum_exp(&terms)
}

fn check_bessel_arg(z: f64) -> Result<()> {
    if !(z.is_finite() && z >= 0.0) {
        return input_err(format!("Bessel argument must be finite and non-negative, got {z}"));
    }
    if z > BESSEL_MAX_ARG {
        return Err(HsgpError::Range(format!(
            "Bessel argument {z} exceeds {BESSEL_MAX_ARG}"
        )));
    }
    Ok(())
}

/// Modified Bessel function of the first kind `I_ν(z)` for integer order.
pub fn bessel_i(order: usize, z: f64) -> Result<f64> {
    check_bessel_arg(z)?;
    Ok(ln_bessel_i(order, z).exp())
}

/// `e^{-z} I_ν(z)`, finite over the whole accepted range.
pub fn bessel_i_scaled(order: usize, z: f64) -> Result<f64> {
    check_bessel_arg(z)?;
    Ok((ln_bessel_i(order, z) - z).exp())
}

fn check_basis_args(lengthscale: f64, j_max: usize, omega0: f64) -> Result<()> {
    ensure_positive("lengthscale", lengthscale)?;
    ensure_positive("omega0", omega0)?;
    if j_max == 0 {
        return input_err("J must be at least 1");
    }
    Ok(())
}

/// Bessel-form coefficients `q̃²_0 = I_0(z)/e^z`, `q̃²_j = 2 I_j(z)/e^z`, `z = ℓ⁻²`.
pub fn periodic_coefficients(lengthscale: f64, j_max: usize, omega0: f64) -> Result<PeriodicBasis> {
    check_basis_args(lengthscale, j_max, omega0)?;
    let z = lengthscale.powi(-2);
    let coeffs = (0..=j_max)
        .map(|j| {
            let q = bessel_i_scaled(j, z)?;
            Ok(if j == 0 { q } else { 2.0 * q })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PeriodicBasis {
        j_max,
        omega0,
        coeffs,
        scheme: CoefficientScheme::Bessel,
    })
}

/// J-th order Taylor truncation:
/// `q̃²_j = (2 / e^z) Σ_{i=0}^{⌊(J-j)/2⌋} (2ℓ²)^{-(j+2i)} / ((j+i)! i!)`, halved for `j = 0`.
pub fn periodic_coefficients_truncated(lengthscale: f64, j_max: usize, omega0: f64) -> Result<PeriodicBasis> {
    check_basis_args(lengthscale, j_max, omega0)?;
    let z = lengthscale.powi(-2);
    let ln_base = -(2.0 * lengthscale * lengthscale).ln();
    let coeffs = (0..=j_max)
        .map(|j| {
            let terms: Vec<f64> = (0..=(j_max - j) / 2)
                .map(|i| (j + 2 * i) as f64 * ln_base - ln_factorial(j + i) - ln_factorial(i) - z)
                .collect();
            let q = log_sum_exp(&terms).exp();
            if j == 0 {
                q
            } else {
                2.0 * q
            }
        })
        .collect();
    Ok(PeriodicBasis {
        j_max,
        omega0,
        coeffs,
        scheme: CoefficientScheme::Truncated,
    })
}

/// `α Σ_j q̃²_j cos(j ω₀ τ)`.
pub fn periodic_approx_cov(basis: &PeriodicBasis, alpha: f64, tau: f64) -> f64 {
    let p = basis.period();
    // reduce to [-P/2, P/2]; exact at multiples of P and symmetric under τ -> -τ
    let r = tau - p * (tau / p).round();
    let w = basis.omega0 * r;
    alpha
        * basis
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, q)| q * (j as f64 * w).cos())
            .sum::<f64>()
}

/// Features `[√q̃²_j cos(jω₀x)]_{j=0..J} ++ [√q̃²_j sin(jω₀x)]_{j=1..J}`.
/// With standard-normal weights scaled by `√α` these reproduce the truncated kernel.
pub fn periodic_design_matrix(x: &[f64], basis: &PeriodicBasis) -> DMatrix<f64> {
    let jm = basis.j_max;
    let roots: Vec<f64> = basis.coeffs.iter().map(|q| q.sqrt()).collect();
    DMatrix::from_fn(x.len(), 2 * jm + 1, |i, col| {
        let arg = basis.omega0 * x[i];
        if col <= jm {
            roots[col] * (col as f64 * arg).cos()
        } else {
            let j = col - jm;
            roots[j] * (j as f64 * arg).sin()
        }
    })
}

/// Normalized total-variation error of the J-term Bessel expansion over one
/// period, for every `J` in `1..=j_max`.
pub fn periodic_tv_errors(lengthscale: f64, j_max: usize) -> Result<Vec<f64>> {
    let full = periodic_coefficients(lengthscale, j_max, 1.0)?;
    let exact_kernel = crate::kernels::KernelSpec::periodic(1.0, lengthscale, 1.0)?;
    let n = PERIODIC_QUAD_POINTS;
    let taus: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / (n - 1) as f64).collect();
    let exact: Vec<f64> = taus
        .iter()
        .map(|&t| exact_kernel.covariance(&[t], &[0.0]).expect("1-d kernel"))
        .collect();
    let h = 2.0 * PI / (n - 1) as f64;
    let area = trapezoid_uniform(&exact, h);
    let mut approx: Vec<f64> = vec![full.coeffs[0]; n];
    let mut out = Vec::with_capacity(j_max);
    let mut diff = vec![0.0; n];
    for j in 1..=j_max {
        for (a, &t) in approx.iter_mut().zip(&taus) {
            *a += full.coeffs[j] * (j as f64 * t).cos();
        }
        for ((d, a), e) in diff.iter_mut().zip(&approx).zip(&exact) {
            *d = (e - a).abs();
        }
        out.push(trapezoid_uniform(&diff, h) / area);
    }
    Ok(out)
}

/// Smallest `J ≤ 200` whose expansion is within 0.5% normalized total
/// variation of the exact kernel; `None` if the cap is reached.
pub fn min_terms_periodic(lengthscale: f64) -> Result<Option<usize>> {
    let errs = periodic_tv_errors(lengthscale, PERIODIC_MAX_TERMS)?;
    Ok(errs
        .iter()
        .position(|&e| e < PERIODIC_TV_THRESHOLD)
        .map(|i| i + 1))
}
