//! Stationary covariance functions and their spectral densities.
//!
//! Spectral densities use the angular-frequency convention
//! `k(τ) = (2π)^-D ∫ S(s) exp(i s·τ) ds`, so that `S(√λ_j)` can be plugged
//! directly into the Laplace-eigenfunction expansion.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, input_err, HsgpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    SquaredExponential,
    Matern32,
    PeriodicSE,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "SquaredExponential",
            KernelFamily::Matern32 => "Matern32",
            KernelFamily::PeriodicSE => "PeriodicSE",
        }
    }

    /// Whether the family has a spectral density usable by the Hilbert-space expansion.
    pub fn has_spectral_density(self) -> bool {
        !matches!(self, KernelFamily::PeriodicSE)
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = HsgpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "squaredexponential" | "se" | "rbf" => Ok(KernelFamily::SquaredExponential),
            "matern32" | "matern3/2" | "m32" => Ok(KernelFamily::Matern32),
            "periodicse" | "periodic" => Ok(KernelFamily::PeriodicSE),
            _ => input_err(format!("unknown kernel family '{s}'")),
        }
    }
}

/// Anything that can be evaluated as a covariance between two input points.
///
/// Implemented by [`KernelSpec`] and by the truncated Hilbert-space kernel, so
/// the dense oracle can run on either.
pub trait Covariance {
    fn dim(&self) -> usize;
    /// Marginal variance scale, used to size numerical jitter.
    fn magnitude(&self) -> f64;
    /// Evaluate without dimension checks; callers guarantee `x.len() == x2.len() == dim()`.
    fn eval(&self, x: &[f64], x2: &[f64]) -> f64;
}

/// A stationary kernel with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec")]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub alpha: f64,
    pub lengthscales: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
}

#[derive(Deserialize)]
struct RawKernelSpec {
    family: KernelFamily,
    alpha: f64,
    lengthscales: Vec<f64>,
    #[serde(default)]
    omega0: Option<f64>,
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = HsgpError;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        KernelSpec::new(raw.family, raw.alpha, raw.lengthscales, raw.omega0)
    }
}

impl KernelSpec {
    pub fn new(
        family: KernelFamily,
        alpha: f64,
        lengthscales: Vec<f64>,
        omega0: Option<f64>,
    ) -> Result<Self> {
        let spec = KernelSpec {
            family,
            alpha,
            lengthscales,
            omega0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn squared_exponential(alpha: f64, lengthscales: Vec<f64>) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, alpha, lengthscales, None)
    }

    pub fn matern32(alpha: f64, lengthscales: Vec<f64>) -> Result<Self> {
        Self::new(KernelFamily::Matern32, alpha, lengthscales, None)
    }

    pub fn periodic(alpha: f64, lengthscale: f64, omega0: f64) -> Result<Self> {
        Self::new(KernelFamily::PeriodicSE, alpha, vec![lengthscale], Some(omega0))
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("alpha", self.alpha)?;
        if self.lengthscales.is_empty() {
            return input_err("lengthscales must have at least one entry");
        }
        for &l in &self.lengthscales {
            ensure_positive("lengthscale", l)?;
        }
        match self.family {
            KernelFamily::PeriodicSE => {
                let w = self
                    .omega0
                    .ok_or_else(|| HsgpError::Input("PeriodicSE requires omega0".into()))?;
                ensure_positive("omega0", w)?;
                if self.lengthscales.len() != 1 {
                    return Err(HsgpError::Unsupported(
                        "PeriodicSE is only defined for one-dimensional inputs".into(),
                    ));
                }
            }
            _ => {
                if let Some(w) = self.omega0 {
                    ensure_positive("omega0", w)?;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Same family and dimension with new magnitude and lengthscales.
    pub fn with_hyperparameters(&self, alpha: f64, lengthscales: Vec<f64>) -> Result<Self> {
        Self::new(self.family, alpha, lengthscales, self.omega0)
    }

    fn check_point(&self, name: &str, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return input_err(format!(
                "{name} has dimension {} but the kernel expects {}",
                x.len(),
                self.dim()
            ));
        }
        Ok(())
    }

    pub fn covariance(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_point("x", x)?;
        self.check_point("x2", x2)?;
        Ok(self.eval_unchecked(x, x2))
    }

    fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => {
                let r2 = scaled_sq_dist(x, x2, &self.lengthscales);
                self.alpha * (-0.5 * r2).exp()
            }
            KernelFamily::Matern32 => {
                let r = (3.0 * scaled_sq_dist(x, x2, &self.lengthscales)).sqrt();
                self.alpha * (1.0 + r) * (-r).exp()
            }
            KernelFamily::PeriodicSE => {
                let tau = x[0] - x2[0];
                let w = self.omega0.unwrap_or(1.0);
                let l = self.lengthscales[0];
                let s = (0.5 * w * tau).sin();
                self.alpha * (-2.0 * s * s / (l * l)).exp()
            }
        }
    }

    /// Univariate spectral density `S(ω)`.
    pub fn spectral_density(&self, omega: f64) -> Result<f64> {
        self.require_spectral()?;
        if self.dim() != 1 {
            return input_err("spectral_density takes a scalar frequency; use spectral_density_multi");
        }
        if !(omega.is_finite() && omega >= 0.0) {
            return input_err(format!("frequency must be finite and non-negative, got {omega}"));
        }
        Ok(self.spectral_unchecked(&[omega]))
    }

    /// Anisotropic D-dimensional spectral density at the frequency vector `s`.
    pub fn spectral_density_multi(&self, s: &[f64]) -> Result<f64> {
        self.require_spectral()?;
        self.check_point("s", s)?;
        if s.iter().any(|v| !v.is_finite()) {
            return input_err("frequency vector must be finite");
        }
        Ok(self.spectral_unchecked(s))
    }

    fn require_spectral(&self) -> Result<()> {
        if self.family.has_spectral_density() {
            Ok(())
        } else {
            Err(HsgpError::Unsupported(
                "the periodic kernel has no spectral density here; use the periodic expansion".into(),
            ))
        }
    }

    pub(crate) fn spectral_unchecked(&self, s: &[f64]) -> f64 {
        let d = self.dim();
        let l_prod: f64 = self.lengthscales.iter().product();
        let q: f64 = self
            .lengthscales
            .iter()
            .zip(s)
            .map(|(l, w)| l * l * w * w)
            .sum();
        match self.family {
            KernelFamily::SquaredExponential => {
                self.alpha * (2.0 * PI).powf(d as f64 / 2.0) * l_prod * (-0.5 * q).exp()
            }
            KernelFamily::Matern32 => {
                let df = d as f64;
                let norm = 2f64.powi(d as i32) * PI.powf(df / 2.0) * gamma_half(d + 3) * 3f64.powf(1.5)
                    / (0.5 * PI.sqrt());
                self.alpha * norm * l_prod * (3.0 + q).powf(-(df + 3.0) / 2.0)
            }
            KernelFamily::PeriodicSE => unreachable!("guarded by require_spectral"),
        }
    }

    /// Dense covariance matrix of the rows of `x` (n×D).
    pub fn gram_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() == 0 {
            return input_err("gram_matrix needs at least one input row");
        }
        if x.ncols() != self.dim() {
            return input_err(format!(
                "inputs have {} columns but the kernel expects {}",
                x.ncols(),
                self.dim()
            ));
        }
        Ok(gram(self, x))
    }
}

impl Covariance for KernelSpec {
    fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    fn magnitude(&self) -> f64 {
        self.alpha
    }

    fn eval(&self, x: &[f64], x2: &[f64]) -> f64 {
        self.eval_unchecked(x, x2)
    }
}

/// Dense symmetric matrix of `cov` over the rows of `x`.
pub fn gram<C: Covariance + ?Sized>(cov: &C, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let rows = rows_of(x);
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = cov.eval(&rows[i], &rows[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cross-covariance matrix between the rows of `a` (p×D) and `b` (q×D).
pub fn cross_gram<C: Covariance + ?Sized>(cov: &C, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ra = rows_of(a);
    let rb = rows_of(b);
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| cov.eval(&ra[i], &rb[j]))
}

pub(crate) fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|i| x.row(i).iter().copied().collect())
        .collect()
}

fn scaled_sq_dist(x: &[f64], x2: &[f64], lengthscales: &[f64]) -> f64 {
    x.iter()
        .zip(x2)
        .zip(lengthscales)
        .map(|((a, b), l)| {
            let d = (a - b) / l;
            d * d
        })
        .sum()
}

/// Γ(k/2) for a positive integer k.
fn gamma_half(k: usize) -> f64 {
    debug_assert!(k > 0);
    let (mut value, mut x) = if k.is_multiple_of(2) { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    let target = k as f64 / 2.0;
    while x < target - 0.25 {
        value *= x;
        x += 1.0;
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn se(alpha: f64, l: f64) -> KernelSpec {
        KernelSpec::squared_exponential(alpha, vec![l]).unwrap()
    }

    fn m32(alpha: f64, l: f64) -> KernelSpec {
        KernelSpec::matern32(alpha, vec![l]).unwrap()
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(se(1.0, 1.0).covariance(&[0.0], &[0.0]).unwrap(), 1.0);
        assert_eq!(m32(1.0, 1.0).covariance(&[0.0], &[0.0]).unwrap(), 1.0);
        assert_relative_eq!(
            se(1.0, 1.0).covariance(&[0.0], &[1.0]).unwrap(),
            0.606_530_659_712_633_4,
            epsilon = 1e-15
        );
        let p = KernelSpec::periodic(2.5, 0.7, 3.0).unwrap();
        assert_eq!(p.covariance(&[0.4], &[0.4]).unwrap(), 2.5);
    }

    #[test]
    fn covariance_errors() {
        let k = KernelSpec::squared_exponential(1.0, vec![1.0, 2.0]).unwrap();
        assert!(matches!(k.covariance(&[0.0], &[0.0, 1.0]), Err(HsgpError::Input(_))));
        let bad = KernelSpec::new(KernelFamily::PeriodicSE, 1.0, vec![1.0, 1.0], Some(1.0));
        assert!(matches!(bad, Err(HsgpError::Unsupported(_))));
        assert!(KernelSpec::squared_exponential(0.0, vec![1.0]).is_err());
        assert!(KernelSpec::squared_exponential(1.0, vec![-1.0]).is_err());
        assert!(KernelSpec::new(KernelFamily::PeriodicSE, 1.0, vec![1.0], None).is_err());
    }

    #[test]
    fn spectral_density_examples() {
        assert_relative_eq!(se(1.0, 1.0).spectral_density(0.0).unwrap(), 2.506_628_274_631_000_7, epsilon = 1e-12);
        assert_relative_eq!(se(1.0, 2.0).spectral_density(0.0).unwrap(), 5.013_256_549_262_001, epsilon = 1e-12);
        // 4·(√3)^3 / 3^2 written out independently of the general-D expression.
        let oracle = 4.0 * 3f64.sqrt().powi(3) / 9.0;
        assert_relative_eq!(m32(1.0, 1.0).spectral_density(0.0).unwrap(), oracle, epsilon = 1e-12);
        assert_relative_eq!(oracle, 2.309_401, epsilon = 1e-6);
        let p = KernelSpec::periodic(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(p.spectral_density(0.0), Err(HsgpError::Unsupported(_))));
    }

    #[test]
    fn spectral_density_multi_examples() {
        let k3 = KernelSpec::squared_exponential(1.0, vec![1.0; 3]).unwrap();
        assert_relative_eq!(k3.spectral_density_multi(&[0.0; 3]).unwrap(), (2.0 * PI).powf(1.5), epsilon = 1e-12);
        assert_relative_eq!(k3.spectral_density_multi(&[0.0; 3]).unwrap(), 15.749_610, epsilon = 1e-6);
        let m3 = KernelSpec::matern32(1.0, vec![1.0; 3]).unwrap();
        let oracle = 32.0 * PI * 3f64.powf(1.5) * 3f64.powi(-3);
        assert_relative_eq!(m3.spectral_density_multi(&[0.0; 3]).unwrap(), oracle, epsilon = 1e-12);
        assert_relative_eq!(oracle, 19.347_193, epsilon = 1e-6);
        let k1 = se(1.0, 1.0);
        assert_eq!(k1.spectral_density_multi(&[1.0]).unwrap(), k1.spectral_density(1.0).unwrap());
        assert!(k3.spectral_density_multi(&[0.0]).is_err());
    }

    #[test]
    fn matern_multi_matches_explicit_three_dim_form() {
        let ls = [0.4, 1.3, 0.8];
        let s = [0.7, -1.1, 2.0];
        let k = KernelSpec::matern32(1.7, ls.to_vec()).unwrap();
        let q: f64 = ls.iter().zip(&s).map(|(l, w)| l * l * w * w).sum();
        let explicit = 1.7 * 32.0 * PI * 3f64.powf(1.5) * ls.iter().product::<f64>() * (3.0 + q).powi(-3);
        assert_relative_eq!(k.spectral_density_multi(&s).unwrap(), explicit, max_relative = 1e-13);
        let kse = KernelSpec::squared_exponential(1.7, ls.to_vec()).unwrap();
        let explicit = 1.7 * (2.0 * PI).powf(1.5) * ls.iter().product::<f64>() * (-0.5 * q).exp();
        assert_relative_eq!(kse.spectral_density_multi(&s).unwrap(), explicit, max_relative = 1e-13);
    }

    #[test]
    fn spectral_density_is_non_increasing() {
        for k in [se(1.3, 0.4), m32(0.7, 2.0)] {
            let mut prev = f64::INFINITY;
            for i in 0..400 {
                let v = k.spectral_density(i as f64 * 0.05).unwrap();
                assert!(v > 0.0 && v <= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn gram_examples() {
        let k = se(1.0, 1.0);
        let g = k.gram_matrix(&DMatrix::from_row_slice(1, 1, &[3.0])).unwrap();
        assert_eq!(g, DMatrix::from_element(1, 1, 1.0));
        let g = k.gram_matrix(&DMatrix::from_row_slice(2, 1, &[0.5, 0.5])).unwrap();
        assert_eq!(g, DMatrix::from_element(2, 2, 1.0));
        let g = k.gram_matrix(&DMatrix::from_row_slice(2, 1, &[0.0, 1.0])).unwrap();
        let e = (-0.5f64).exp();
        assert_relative_eq!(g, DMatrix::from_row_slice(2, 2, &[1.0, e, e, 1.0]), epsilon = 1e-15);
        assert!(k.gram_matrix(&DMatrix::zeros(0, 1)).is_err());
    }

    #[test]
    fn gram_is_psd_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for spec in [
            KernelSpec::squared_exponential(2.0, vec![0.3, 0.9]).unwrap(),
            KernelSpec::matern32(0.5, vec![0.2, 1.5]).unwrap(),
        ] {
            let x = DMatrix::from_fn(50, 2, |_, _| rng.random_range(-1.0..1.0));
            let g = spec.gram_matrix(&x).unwrap();
            assert_eq!(g, g.transpose());
            for i in 0..50 {
                assert_eq!(g[(i, i)], spec.alpha);
            }
            let eig = SymmetricEigen::new(g).eigenvalues;
            assert!(eig.min() >= -1e-8 * spec.alpha, "min eigenvalue {}", eig.min());
        }
        let per = KernelSpec::periodic(1.0, 0.8, 2.0).unwrap();
        let x = DMatrix::from_fn(50, 1, |_, _| rng.random_range(-3.0..3.0));
        let eig = SymmetricEigen::new(per.gram_matrix(&x).unwrap()).eigenvalues;
        assert!(eig.min() >= -1e-8);
    }

    /// Composite Simpson on [a, b] with an even number of panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        let mut acc = f(a) + f(b);
        for i in 1..panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn wiener_khintchine_quadrature() {
        let k = se(1.0, 1.0);
        let total = simpson(|w| k.spectral_density(w.abs()).unwrap(), -20.0, 20.0, 20_000) / (2.0 * PI);
        assert_relative_eq!(total, 1.0, max_relative = 1e-4);
    }

    #[test]
    fn numerical_fourier_transform_matches_spectral_density() {
        for family in [KernelFamily::SquaredExponential, KernelFamily::Matern32] {
            for l in [0.3, 1.0] {
                let k = KernelSpec::new(family, 1.0, vec![l], None).unwrap();
                let tmax = 60.0 * l;
                for i in 0..=20 {
                    let w = i as f64 * 0.5;
                    let ft = 2.0 * simpson(|t| k.covariance(&[t], &[0.0]).unwrap() * (w * t).cos(), 0.0, tmax, 60_000);
                    let s = k.spectral_density(w).unwrap();
                    // Below ~1e-10·S(0) the transform is lost in cancellation
                    // error; compare absolutely there.
                    if s > 1e-10 * k.spectral_density(0.0).unwrap() {
                        assert_relative_eq!(ft, s, max_relative = 1e-3);
                    } else {
                        assert!((ft - s).abs() < 1e-13, "w={w} ft={ft} s={s}");
                    }
                }
            }
        }
    }

    #[test]
    fn json_field_names() {
        let k = se(1.5, 0.2);
        let v: serde_json::Value = serde_json::to_value(&k).unwrap();
        assert_eq!(v["family"], "SquaredExponential");
        assert_eq!(v["alpha"], 1.5);
        assert_eq!(v["lengthscales"][0], 0.2);
        assert!(v.get("omega0").is_none());
        let p: KernelSpec =
            serde_json::from_str(r#"{"family":"PeriodicSE","alpha":1,"lengthscales":[0.5],"omega0":6.5}"#).unwrap();
        assert_eq!(p.omega0, Some(6.5));
        assert!(serde_json::from_str::<KernelSpec>(r#"{"family":"Matern32","alpha":-1,"lengthscales":[1]}"#).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_stationary(
            x in prop::collection::vec(-5.0f64..5.0, 2),
            y in prop::collection::vec(-5.0f64..5.0, 2),
            shift in prop::collection::vec(-5.0f64..5.0, 2),
            l0 in 0.05f64..3.0, l1 in 0.05f64..3.0, alpha in 0.1f64..4.0,
        ) {
            for family in [KernelFamily::SquaredExponential, KernelFamily::Matern32] {
                let k = KernelSpec::new(family, alpha, vec![l0, l1], None).unwrap();
                let a = k.covariance(&x, &y).unwrap();
                prop_assert_eq!(a, k.covariance(&y, &x).unwrap());
                let xs: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
                let ys: Vec<f64> = y.iter().zip(&shift).map(|(a, b)| a + b).collect();
                let b = k.covariance(&xs, &ys).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * alpha);
                prop_assert!(a <= alpha && a >= 0.0);
            }
            let p = KernelSpec::periodic(alpha, l0, l1).unwrap();
            let a = p.covariance(&x[..1], &y[..1]).unwrap();
            prop_assert_eq!(a, p.covariance(&y[..1], &x[..1]).unwrap());
            let b = p.covariance(&[x[0] + shift[0]], &[y[0] + shift[0]]).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * alpha);
        }
    }
}
