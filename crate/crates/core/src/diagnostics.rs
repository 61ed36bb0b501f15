//! Accuracy of the truncated covariance and the lookups built on it.
//!
//! The error measure is the integrated absolute difference between the exact
//! stationary covariance `k(τ)` and its m-term expansion
//! `Σ_j S(√λ_j) φ_j(τ) φ_j(0)`, over `τ ∈ [0, S]`, divided by `∫_0^S k(τ) dτ`.
//! It depends only on ℓ/S, c and m.

use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{eigenfunction_unchecked, sqrt_eigenvalue};
use crate::error::{ensure_positive, input_err, HsgpError, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::periodic::min_terms_periodic;
use crate::quadrature::{trapezoid_uniform, uniform_grid};

/// Normalized error below which an approximation is accepted.
pub const TV_THRESHOLD: f64 = 0.01;
/// Trapezoid points on `[0, S]`.
pub const TV_QUADRATURE_POINTS: usize = 2001;
/// Largest m searched by [`min_basis_functions`].
pub const MAX_BASIS: usize = 512;
/// Range of ℓ/S searched by [`min_lengthscale`].
pub const LENGTHSCALE_RANGE: (f64, f64) = (1e-3, 10.0);
/// Bisection stops once the bracket is narrower than this (and than this
/// fraction of ℓ/S when ℓ/S < 1).
pub const LENGTHSCALE_TOL: f64 = 1e-3;
const SCAN_POINTS: usize = 61;

/// What to do when the fitted lengthscale is below the reliable range.
pub const REMEDIATION: &str = "increase m or decrease c (increasing m is usually preferred)";

fn check_args(family: KernelFamily, lengthscale: f64, half_range: f64, c: f64) -> Result<()> {
    if !family.has_spectral_density() {
        return Err(HsgpError::Unsupported(format!("{family} has no Laplace-basis expansion")));
    }
    ensure_positive("lengthscale", lengthscale)?;
    ensure_positive("half_range", half_range)?;
    if !(c.is_finite() && c >= 1.0) {
        return input_err(format!("boundary factor must be at least 1, got {c}"));
    }
    Ok(())
}

/// Normalized errors for m = 1..=m_max (element m−1), with magnitude `alpha`
/// carried through both the exact and the truncated covariance.
pub fn tv_error_curve_scaled(
    family: KernelFamily,
    lengthscale: f64,
    half_range: f64,
    c: f64,
    m_max: usize,
    alpha: f64,
) -> Result<Vec<f64>> {
    check_args(family, lengthscale, half_range, c)?;
    ensure_positive("alpha", alpha)?;
    if m_max == 0 {
        return input_err("m must be at least 1");
    }
    let spec = KernelSpec::new(family, alpha, vec![lengthscale], None)?;
    let l = c * half_range;
    let tau = uniform_grid(0.0, half_range, TV_QUADRATURE_POINTS);
    let h = half_range / (TV_QUADRATURE_POINTS - 1) as f64;
    let exact: Vec<f64> = tau.iter().map(|t| spec.covariance(&[*t], &[0.0]).unwrap()).collect();
    let norm = trapezoid_uniform(&exact, h);

    let mut approx = vec![0.0; tau.len()];
    let mut diff = vec![0.0; tau.len()];
    let mut out = Vec::with_capacity(m_max);
    for j in 1..=m_max {
        let w = spec.spectral_unchecked(&[sqrt_eigenvalue(j, l)]) * eigenfunction_unchecked(j, l, 0.0);
        for (i, t) in tau.iter().enumerate() {
            approx[i] += w * eigenfunction_unchecked(j, l, *t);
            diff[i] = (exact[i] - approx[i]).abs();
        }
        out.push(trapezoid_uniform(&diff, h) / norm);
    }
    Ok(out)
}

/// Normalized errors for m = 1..=m_max (element m−1).
pub fn tv_error_curve(family: KernelFamily, lengthscale: f64, half_range: f64, c: f64, m_max: usize) -> Result<Vec<f64>> {
    tv_error_curve_scaled(family, lengthscale, half_range, c, m_max, 1.0)
}

/// Normalized total-variation error of the m-term univariate expansion.
pub fn covariance_tv_error(family: KernelFamily, lengthscale: f64, half_range: f64, c: f64, m: usize) -> Result<f64> {
    Ok(*tv_error_curve(family, lengthscale, half_range, c, m)?.last().unwrap())
}

/// Smallest m ≤ [`MAX_BASIS`] meeting [`TV_THRESHOLD`], or `None`.
pub fn min_basis_functions(family: KernelFamily, lengthscale_over_s: f64, c: f64) -> Result<Option<usize>> {
    let curve = tv_error_curve(family, lengthscale_over_s, 1.0, c, MAX_BASIS)?;
    Ok(curve.iter().position(|&e| e < TV_THRESHOLD).map(|i| i + 1))
}

fn passes(family: KernelFamily, ls: f64, c: f64, m: usize) -> bool {
    covariance_tv_error(family, ls, 1.0, c, m).map(|e| e < TV_THRESHOLD).unwrap_or(false)
}

type CacheKey = (KernelFamily, usize, u64);

fn lengthscale_cache() -> &'static Mutex<HashMap<CacheKey, Option<f64>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Option<f64>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Smallest ℓ/S in [`LENGTHSCALE_RANGE`] whose m-term expansion meets
/// [`TV_THRESHOLD`], or `None`.
///
/// The error is not monotone in ℓ when c is small (long lengthscales feel the
/// boundary), so a log-spaced scan locates the first passing point and
/// bisection refines it. Results are memoized per (family, m, c).
pub fn min_lengthscale(family: KernelFamily, m: usize, c: f64) -> Result<Option<f64>> {
    check_args(family, 1.0, 1.0, c)?;
    if m == 0 {
        return input_err("m must be at least 1");
    }
    let key = (family, m, c.to_bits());
    if let Some(v) = lengthscale_cache().lock().unwrap().get(&key) {
        return Ok(*v);
    }
    let (lo, hi) = LENGTHSCALE_RANGE;
    let ratio = (hi / lo).ln() / (SCAN_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..SCAN_POINTS).map(|i| lo * (ratio * i as f64).exp()).collect();
    let result = match grid.iter().position(|&ls| passes(family, ls, c, m)) {
        None => None,
        Some(0) => Some(lo),
        Some(i) => {
            let (mut fail, mut pass) = (grid[i - 1], grid[i]);
            while pass - fail > LENGTHSCALE_TOL * pass.min(1.0) {
                let mid = (fail * pass).sqrt();
                if passes(family, mid, c, m) {
                    pass = mid;
                } else {
                    fail = mid;
                }
            }
            Some(pass)
        }
    };
    lengthscale_cache().lock().unwrap().insert(key, result);
    Ok(result)
}

/// Outcome of the post-fit lengthscale check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCheck {
    pub passed: bool,
    pub lengthscale_over_s: f64,
    /// Minimum reliable ℓ/S; `None` when no lengthscale in range qualifies.
    pub threshold: Option<f64>,
    /// `ℓ̂/S − threshold`.
    pub margin: Option<f64>,
    pub remediation: Option<String>,
}

/// Compare a fitted lengthscale with the smallest one the basis can represent.
/// The boundary is inclusive: `ℓ̂/S == threshold` passes.
pub fn check_fit(lengthscale_estimate: f64, half_range: f64, m: usize, c: f64, family: KernelFamily) -> Result<FitCheck> {
    check_args(family, lengthscale_estimate, half_range, c)?;
    let ratio = lengthscale_estimate / half_range;
    let threshold = min_lengthscale(family, m, c)?;
    let passed = threshold.is_some_and(|t| ratio >= t);
    Ok(FitCheck {
        passed,
        lengthscale_over_s: ratio,
        threshold,
        margin: threshold.map(|t| ratio - t),
        remediation: (!passed).then(|| REMEDIATION.to_string()),
    })
}

/// Error of one (family, ℓ/S, c, m) configuration against [`TV_THRESHOLD`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub family: KernelFamily,
    pub lengthscale_over_s: f64,
    pub c: f64,
    pub m: usize,
    pub tv_error_normalized: f64,
    pub passed: bool,
    pub threshold: f64,
    pub min_m: Option<usize>,
    pub min_lengthscale_over_s: Option<f64>,
}

pub fn diagnostics_report(family: KernelFamily, lengthscale_over_s: f64, c: f64, m: usize) -> Result<DiagnosticsReport> {
    let curve = tv_error_curve(family, lengthscale_over_s, 1.0, c, m.max(MAX_BASIS))?;
    let tv = curve[m - 1];
    Ok(DiagnosticsReport {
        family,
        lengthscale_over_s,
        c,
        m,
        tv_error_normalized: tv,
        passed: tv < TV_THRESHOLD,
        threshold: TV_THRESHOLD,
        min_m: curve[..MAX_BASIS].iter().position(|&e| e < TV_THRESHOLD).map(|i| i + 1),
        min_lengthscale_over_s: min_lengthscale(family, m, c)?,
    })
}

/// One cell of a minimum-m table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub family: KernelFamily,
    pub lengthscale_over_s: f64,
    pub c: f64,
    pub min_m: Option<usize>,
}

/// Minimum m over the grid `lengthscales × cs`, lengthscale-major order.
pub fn build_table(family: KernelFamily, lengthscales_over_s: &[f64], cs: &[f64]) -> Result<Vec<TableRow>> {
    let cells: Vec<(f64, f64)> = lengthscales_over_s
        .iter()
        .flat_map(|&l| cs.iter().map(move |&c| (l, c)))
        .collect();
    cells
        .par_iter()
        .map(|&(l, c)| {
            Ok(TableRow {
                family,
                lengthscale_over_s: l,
                c,
                min_m: min_basis_functions(family, l, c)?,
            })
        })
        .collect()
}

fn sentinel(v: Option<usize>) -> String {
    v.map_or_else(|| "-1".to_string(), |m| m.to_string())
}

/// CSV with header `family,lengthscale_over_S,c,min_m`; −1 marks not achievable.
pub fn write_table_csv<W: Write>(rows: &[TableRow], mut w: W) -> io::Result<()> {
    writeln!(w, "family,lengthscale_over_S,c,min_m")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.family, r.lengthscale_over_s, r.c, sentinel(r.min_m))?;
    }
    Ok(())
}

/// Minimum number of cosine terms J for the periodic kernel, per lengthscale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicTableRow {
    pub lengthscale: f64,
    pub min_j: Option<usize>,
}

pub fn build_periodic_table(lengthscales: &[f64]) -> Result<Vec<PeriodicTableRow>> {
    lengthscales
        .par_iter()
        .map(|&l| {
            Ok(PeriodicTableRow {
                lengthscale: l,
                min_j: min_terms_periodic(l)?,
            })
        })
        .collect()
}

/// CSV with header `family,lengthscale,min_J`; −1 marks not achievable.
pub fn write_periodic_table_csv<W: Write>(rows: &[PeriodicTableRow], mut w: W) -> io::Result<()> {
    writeln!(w, "family,lengthscale,min_J")?;
    for r in rows {
        writeln!(w, "{},{},{}", KernelFamily::PeriodicSE, r.lengthscale, sentinel(r.min_j))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{eigenfunction, eigenvalue};

    const SE: KernelFamily = KernelFamily::SquaredExponential;
    const M32: KernelFamily = KernelFamily::Matern32;

    #[test]
    fn curve_matches_direct_quadrature() {
        // independent evaluation through the public pointwise API
        let (l, s, c, m) = (0.3, 1.0, 1.5, 7);
        let spec = KernelSpec::squared_exponential(1.0, vec![l]).unwrap();
        let bl = c * s;
        let n = 2001;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let t = s * i as f64 / (n - 1) as f64;
            let k = spec.covariance(&[t], &[0.0]).unwrap();
            let a: f64 = (1..=m)
                .map(|j| {
                    spec.spectral_density(eigenvalue(j, bl).unwrap().sqrt()).unwrap()
                        * eigenfunction(j, bl, t).unwrap()
                        * eigenfunction(j, bl, 0.0).unwrap()
                })
                .sum();
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            num += w * (k - a).abs();
            den += w * k;
        }
        let got = covariance_tv_error(SE, l, s, c, m).unwrap();
        assert!((got - num / den).abs() < 1e-12 * (num / den), "{got} {}", num / den);
    }

    #[test]
    fn alpha_and_scale_invariance() {
        for fam in [SE, M32] {
            let a = tv_error_curve_scaled(fam, 0.3, 1.0, 1.5, 20, 1.0).unwrap();
            let b = tv_error_curve_scaled(fam, 0.3, 1.0, 1.5, 20, 7.0).unwrap();
            for (x, y) in a.iter().zip(&b) {
                // the error is normalized, so rounding is absolute
                assert!((x - y).abs() <= 1e-13, "{x} {y}");
            }
            let s = covariance_tv_error(fam, 0.6, 2.0, 1.5, 12).unwrap();
            let u = covariance_tv_error(fam, 0.3, 1.0, 1.5, 12).unwrap();
            assert!((s - u).abs() < 1e-12);
        }
    }

    #[test]
    fn error_examples() {
        assert!(covariance_tv_error(SE, 0.3, 1.0, 1.5, 64).unwrap() < TV_THRESHOLD);
        assert!(covariance_tv_error(KernelFamily::PeriodicSE, 0.3, 1.0, 1.5, 4).is_err());
        assert!(covariance_tv_error(SE, 0.3, 1.0, 0.9, 4).is_err());
        assert!(covariance_tv_error(SE, 0.3, 1.0, 1.5, 0).is_err());
    }

    #[test]
    fn tight_boundary_plateaus() {
        // with c = 1.05 extra terms stop helping: the residual is the boundary error
        let curve = tv_error_curve(SE, 0.3, 1.0, 1.05, 200).unwrap();
        assert!((curve[199] - curve[63]).abs() < 0.05 * curve[199], "{} {}", curve[63], curve[199]);
        for &ls in &[0.5, 0.6, 1.0] {
            assert_eq!(min_basis_functions(SE, ls, 1.05).unwrap(), None, "ls={ls}");
        }
    }

    #[test]
    fn error_is_not_monotone_in_m() {
        // partial sums of the expansion can move the L1 error up, both early on
        // and, for long lengthscales, after the error has bottomed out
        let curve = tv_error_curve(SE, 0.05, 1.0, 3.0, 3).unwrap();
        assert!(curve[2] > curve[1] + 0.1, "{curve:?}");
        let curve = tv_error_curve(M32, 1.0, 1.0, 2.0, MAX_BASIS).unwrap();
        let floor = curve.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(curve[MAX_BASIS - 1] > 1.05 * floor);
    }

    #[test]
    fn error_stays_below_threshold_once_reached() {
        for fam in [SE, M32] {
            for &l in &[0.05, 0.1, 0.2, 0.3, 0.6, 1.0, 2.0] {
                for &c in &[1.05, 1.2, 1.5, 2.0, 3.0] {
                    let curve = tv_error_curve(fam, l, 1.0, c, MAX_BASIS).unwrap();
                    if let Some(first) = curve.iter().position(|&e| e < TV_THRESHOLD) {
                        assert!(curve[first..].iter().all(|&e| e < TV_THRESHOLD), "{fam} l={l} c={c}");
                    }
                }
            }
        }
    }

    #[test]
    fn minimum_m_examples_and_bracket() {
        let m = min_basis_functions(SE, 0.3, 1.5).unwrap().unwrap();
        assert!((8..=14).contains(&m), "{m}");
        assert!(min_basis_functions(SE, 0.6, 1.5).unwrap().unwrap() <= m);
        assert!(min_basis_functions(SE, 0.3, 2.5).unwrap().unwrap() >= m);
        for fam in [SE, M32] {
            for &(l, c) in &[(0.2, 1.5), (0.3, 2.0), (0.5, 3.0), (0.1, 1.2)] {
                if let Some(m) = min_basis_functions(fam, l, c).unwrap() {
                    assert!(covariance_tv_error(fam, l, 1.0, c, m).unwrap() < TV_THRESHOLD);
                    if m > 1 {
                        assert!(covariance_tv_error(fam, l, 1.0, c, m - 1).unwrap() >= TV_THRESHOLD);
                    }
                }
            }
        }
    }

    #[test]
    fn minimum_lengthscale() {
        let tiny = min_lengthscale(SE, 512, 1.5).unwrap().unwrap();
        assert!(tiny <= 0.05, "{tiny}");
        let l4 = min_lengthscale(SE, 4, 1.5).unwrap().unwrap();
        let l32 = min_lengthscale(SE, 32, 1.5).unwrap().unwrap();
        assert!(l4 > l32);
        for (m, t) in [(4, l4), (32, l32)] {
            assert!(passes(SE, t, 1.5, m));
            assert!(!passes(SE, t - LENGTHSCALE_TOL * t.min(1.0), 1.5, m));
        }
        let mut prev = f64::INFINITY;
        for m in [2, 4, 8, 16, 32, 64] {
            let t = min_lengthscale(M32, m, 2.0).unwrap().unwrap_or(f64::INFINITY);
            assert!(t <= prev, "m={m}");
            prev = t;
        }
    }

    #[test]
    fn fit_check() {
        let r = check_fit(1.0, 1.0, 32, 1.5, SE).unwrap();
        assert!(r.passed && r.margin.unwrap() > 0.0 && r.remediation.is_none());
        let t = min_lengthscale(SE, 10, 1.5).unwrap().unwrap();
        let at = check_fit(2.0 * t, 2.0, 10, 1.5, SE).unwrap();
        assert!(at.passed, "{at:?}");
        let below = check_fit(0.5 * t, 1.0, 10, 1.5, SE).unwrap();
        assert!(!below.passed && below.margin.unwrap() < 0.0);
        assert_eq!(below.remediation.as_deref(), Some(REMEDIATION));
        assert!(REMEDIATION.contains("increase m or decrease c"));
    }

    #[test]
    fn not_achievable_fails_with_remediation() {
        let m = (1..=6).find(|&m| min_lengthscale(SE, m, 1.05).unwrap().is_none());
        let m = m.expect("some small m has no reliable lengthscale at c = 1.05");
        let r = check_fit(0.5, 1.0, m, 1.05, SE).unwrap();
        assert!(!r.passed && r.threshold.is_none() && r.margin.is_none());
        assert_eq!(r.remediation.as_deref(), Some(REMEDIATION));
    }

    #[test]
    fn report_is_consistent() {
        let r = diagnostics_report(SE, 0.3, 1.5, 10).unwrap();
        assert_eq!(r.passed, r.tv_error_normalized < r.threshold);
        assert_eq!(r.min_m, min_basis_functions(SE, 0.3, 1.5).unwrap());
        let j = serde_json::to_value(&r).unwrap();
        assert_eq!(j["family"], "SquaredExponential");
    }

    #[test]
    fn table_delegates_and_encodes_sentinel() {
        let ls = [0.2, 0.5, 1.0];
        let cs = [1.05, 1.5, 2.5];
        let rows = build_table(SE, &ls, &cs).unwrap();
        assert_eq!(rows.len(), 9);
        for r in [&rows[0], &rows[4], &rows[8]] {
            assert_eq!(r.min_m, min_basis_functions(SE, r.lengthscale_over_s, r.c).unwrap());
        }
        let mut buf = Vec::new();
        write_table_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("family,lengthscale_over_S,c,min_m\n"));
        assert!(text.contains(",-1\n"));
    }

    #[test]
    fn periodic_table() {
        let rows = build_periodic_table(&[1.0, 0.3]).unwrap();
        assert_eq!(rows[0].min_j, min_terms_periodic(1.0).unwrap());
        let mut buf = Vec::new();
        write_periodic_table_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("family,lengthscale,min_J\n"));
    }
}
