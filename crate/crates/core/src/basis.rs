//! Dirichlet Laplacian eigenpairs on a box `[-L_1, L_1] × … × [-L_D, L_D]` and the
//! tensor-product index set used for multivariate expansions.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, input_err, HsgpError, Result};

/// Default cap on the number of multivariate basis functions.
pub const DEFAULT_TUPLE_CAP: usize = 100_000;

/// Input box the eigenfunctions live on.
///
/// Inputs are shifted by `centers` so the data sit in `[-S_d, S_d]`; the
/// eigenfunction box is `[-L_d, L_d]` with `L_d = c_d · S_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain")]
pub struct DomainConfig {
    half_ranges: Vec<f64>,
    boundary_factors: Vec<f64>,
    centers: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDomain {
    half_ranges: Vec<f64>,
    boundary_factors: Vec<f64>,
    #[serde(default)]
    centers: Option<Vec<f64>>,
}

impl TryFrom<RawDomain> for DomainConfig {
    type Error = HsgpError;

    fn try_from(raw: RawDomain) -> Result<Self> {
        let d = raw.half_ranges.len();
        DomainConfig::new(
            raw.half_ranges,
            raw.boundary_factors,
            raw.centers.unwrap_or_else(|| vec![0.0; d]),
        )
    }
}

impl DomainConfig {
    pub fn new(half_ranges: Vec<f64>, boundary_factors: Vec<f64>, centers: Vec<f64>) -> Result<Self> {
        let d = half_ranges.len();
        if d == 0 {
            return input_err("domain needs at least one dimension");
        }
        if boundary_factors.len() != d || centers.len() != d {
            return input_err(format!(
                "domain vectors disagree in length: {} half-ranges, {} boundary factors, {} centers",
                d,
                boundary_factors.len(),
                centers.len()
            ));
        }
        for &s in &half_ranges {
            ensure_positive("half-range", s)?;
        }
        for &c in &boundary_factors {
            if !(c.is_finite() && c >= 1.0) {
                return input_err(format!("boundary factor must be >= 1, got {c}"));
            }
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return input_err("centers must be finite");
        }
        Ok(DomainConfig {
            half_ranges,
            boundary_factors,
            centers,
        })
    }

    /// Centered one-dimensional domain `[-S, S]` with boundary factor `c`.
    pub fn symmetric(half_range: f64, boundary_factor: f64) -> Result<Self> {
        Self::new(vec![half_range], vec![boundary_factor], vec![0.0])
    }

    /// Center each dimension at the midpoint of the observed range and take
    /// `S_d = max_i |x_id - center_d|`.
    pub fn from_data(x: &DMatrix<f64>, boundary_factors: &[f64]) -> Result<Self> {
        if x.nrows() == 0 {
            return input_err("cannot derive a domain from zero rows");
        }
        if boundary_factors.len() != x.ncols() {
            return input_err("one boundary factor per input dimension is required");
        }
        let mut half = Vec::with_capacity(x.ncols());
        let mut centers = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let lo = col.min();
            let hi = col.max();
            let center = 0.5 * (lo + hi);
            let s = col.iter().map(|v| (v - center).abs()).fold(0.0, f64::max);
            if s <= 0.0 {
                return input_err("inputs have zero range in some dimension");
            }
            half.push(s);
            centers.push(center);
        }
        Self::new(half, boundary_factors.to_vec(), centers)
    }

    pub fn dim(&self) -> usize {
        self.half_ranges.len()
    }

    pub fn half_ranges(&self) -> &[f64] {
        &self.half_ranges
    }

    pub fn boundary_factors(&self) -> &[f64] {
        &self.boundary_factors
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// `L_d = c_d · S_d`.
    pub fn boundaries(&self) -> Vec<f64> {
        self.half_ranges
            .iter()
            .zip(&self.boundary_factors)
            .map(|(s, c)| s * c)
            .collect()
    }

    /// Subtract the stored centers from every row.
    pub fn center_inputs(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return input_err(format!(
                "inputs have {} columns but the domain has {} dimensions",
                x.ncols(),
                self.dim()
            ));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, d| x[(i, d)] - self.centers[d]))
    }
}

/// Per-dimension basis counts and the row-major tuple matrix 𝕊.
///
/// Tuples are listed lexicographically with the last dimension varying
/// fastest; weight vectors are ordered the same way. Only `counts` is
/// serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBasis", into = "RawBasis")]
pub struct BasisConfig {
    counts: Vec<usize>,
    tuples: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawBasis {
    counts: Vec<usize>,
}

impl TryFrom<RawBasis> for BasisConfig {
    type Error = HsgpError;

    fn try_from(raw: RawBasis) -> Result<Self> {
        build_tuples(&raw.counts)
    }
}

impl From<BasisConfig> for RawBasis {
    fn from(b: BasisConfig) -> Self {
        RawBasis { counts: b.counts }
    }
}

impl BasisConfig {
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    /// Number of multivariate basis functions m*.
    pub fn len(&self) -> usize {
        self.tuples.len() / self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// The j-th tuple (0-based row of 𝕊), with 1-based entries.
    pub fn tuple(&self, j: usize) -> &[usize] {
        let d = self.counts.len();
        &self.tuples[j * d..(j + 1) * d]
    }

    pub fn tuples(&self) -> impl Iterator<Item = &[usize]> {
        self.tuples.chunks_exact(self.counts.len())
    }
}

pub fn build_tuples(counts: &[usize]) -> Result<BasisConfig> {
    build_tuples_with_cap(counts, DEFAULT_TUPLE_CAP)
}

pub fn build_tuples_with_cap(counts: &[usize], cap: usize) -> Result<BasisConfig> {
    if counts.is_empty() {
        return input_err("basis counts must have at least one dimension");
    }
    if counts.contains(&0) {
        return input_err("every basis count must be at least 1");
    }
    let total = counts
        .iter()
        .try_fold(1usize, |acc, &m| acc.checked_mul(m))
        .filter(|&t| t <= cap)
        .ok_or_else(|| {
            let shown: f64 = counts.iter().map(|&m| m as f64).product();
            HsgpError::Resource(format!(
                "product of basis counts {shown} exceeds the cap of {cap}"
            ))
        })?;
    let d = counts.len();
    let mut tuples = Vec::with_capacity(total * d);
    let mut current = vec![1usize; d];
    for _ in 0..total {
        tuples.extend_from_slice(&current);
        // odometer increment, last dimension fastest
        for k in (0..d).rev() {
            if current[k] < counts[k] {
                current[k] += 1;
                break;
            }
            current[k] = 1;
        }
    }
    Ok(BasisConfig {
        counts: counts.to_vec(),
        tuples,
    })
}

fn check_index(j: usize, l: f64) -> Result<()> {
    if j == 0 {
        return input_err("eigen-index j starts at 1");
    }
    ensure_positive("boundary L", l)
}

/// `λ_j = (jπ / 2L)²`.
pub fn eigenvalue(j: usize, l: f64) -> Result<f64> {
    check_index(j, l)?;
    Ok(sqrt_eigenvalue(j, l).powi(2))
}

/// `φ_j(x) = L^{-1/2} sin(√λ_j (x + L))`. Points outside `[-L, L]` are
/// evaluated by the same formula.
pub fn eigenfunction(j: usize, l: f64, x: f64) -> Result<f64> {
    check_index(j, l)?;
    if !x.is_finite() {
        return input_err("x must be finite");
    }
    Ok(eigenfunction_unchecked(j, l, x))
}

#[inline]
pub(crate) fn sqrt_eigenvalue(j: usize, l: f64) -> f64 {
    j as f64 * PI / (2.0 * l)
}

#[inline]
pub(crate) fn eigenfunction_unchecked(j: usize, l: f64, x: f64) -> f64 {
    // sin(jπ) is not exactly zero in floating point; the Dirichlet condition is.
    if x == l || x == -l {
        return 0.0;
    }
    (1.0 / l).sqrt() * (sqrt_eigenvalue(j, l) * (x + l)).sin()
}

fn check_tuple(tuple: &[usize], l: &[f64]) -> Result<()> {
    if tuple.len() != l.len() {
        return input_err(format!(
            "tuple has {} entries but there are {} boundaries",
            tuple.len(),
            l.len()
        ));
    }
    for (&j, &b) in tuple.iter().zip(l) {
        check_index(j, b)?;
    }
    Ok(())
}

pub fn multi_eigenvalue(tuple: &[usize], l: &[f64]) -> Result<Vec<f64>> {
    check_tuple(tuple, l)?;
    Ok(tuple
        .iter()
        .zip(l)
        .map(|(&j, &b)| sqrt_eigenvalue(j, b).powi(2))
        .collect())
}

pub fn multi_eigenfunction(tuple: &[usize], l: &[f64], x: &[f64]) -> Result<f64> {
    check_tuple(tuple, l)?;
    if x.len() != l.len() {
        return input_err("point dimension does not match the boundaries");
    }
    Ok(multi_eigenfunction_unchecked(tuple, l, x))
}

#[inline]
pub(crate) fn multi_eigenfunction_unchecked(tuple: &[usize], l: &[f64], x: &[f64]) -> f64 {
    let mut acc = 1.0;
    for d in 0..tuple.len() {
        acc *= eigenfunction_unchecked(tuple[d], l[d], x[d]);
    }
    acc
}

/// Eigenfunction matrix Φ (n×m*) for centered inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub phi: DMatrix<f64>,
    /// Rows with some coordinate outside `[-L_d, L_d]`; the expansion is not
    /// valid there.
    pub outside_rows: Vec<usize>,
}

impl DesignMatrix {
    pub fn has_extrapolation(&self) -> bool {
        !self.outside_rows.is_empty()
    }
}

/// `Φ_ij = φ*_j(x_i)` with columns in tuple order. `x` must already be centered.
pub fn design_matrix(x: &DMatrix<f64>, domain: &DomainConfig, basis: &BasisConfig) -> Result<DesignMatrix> {
    let d = domain.dim();
    if basis.dim() != d || x.ncols() != d {
        return input_err(format!(
            "dimension mismatch: inputs {}, domain {}, basis {}",
            x.ncols(),
            d,
            basis.dim()
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return input_err("inputs must be finite");
    }
    let l = domain.boundaries();
    let n = x.nrows();
    let m = basis.len();

    // Per-dimension tables φ_j(x_id), j = 1..m_d, so each product term is
    // computed once; values are bit-identical to eigenfunction_unchecked.
    let tables: Vec<DMatrix<f64>> = (0..d)
        .map(|dd| {
            DMatrix::from_fn(n, basis.counts()[dd], |i, j| {
                eigenfunction_unchecked(j + 1, l[dd], x[(i, dd)])
            })
        })
        .collect();

    let mut phi = DMatrix::zeros(n, m);
    for (j, tuple) in basis.tuples().enumerate() {
        for i in 0..n {
            let mut acc = 1.0;
            for dd in 0..d {
                acc *= tables[dd][(i, tuple[dd] - 1)];
            }
            phi[(i, j)] = acc;
        }
    }
    let outside_rows = (0..n)
        .filter(|&i| (0..d).any(|dd| x[(i, dd)].abs() > l[dd]))
        .collect();
    Ok(DesignMatrix { phi, outside_rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn eigenvalue_examples() {
        let quarter_pi_sq = (PI / 2.0).powi(2);
        assert_relative_eq!(eigenvalue(1, 1.0).unwrap(), quarter_pi_sq, epsilon = 1e-15);
        assert_relative_eq!(eigenvalue(1, 1.0).unwrap(), 2.467_401, epsilon = 1e-6);
        assert_relative_eq!(eigenvalue(2, 2.0).unwrap(), quarter_pi_sq, epsilon = 1e-15);
        assert_relative_eq!(eigenvalue(3, 1.5).unwrap(), PI * PI, epsilon = 1e-14);
        assert!(eigenvalue(0, 1.0).is_err());
        assert!(eigenvalue(1, 0.0).is_err());
        assert!(eigenvalue(1, -2.0).is_err());
    }

    #[test]
    fn eigenvalues_increase_in_j_and_decrease_in_l() {
        for l in [0.3, 1.0, 7.5] {
            let vals: Vec<f64> = (1..200).map(|j| eigenvalue(j, l).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]));
        }
        assert!(eigenvalue(3, 1.0).unwrap() > eigenvalue(3, 1.1).unwrap());
    }

    #[test]
    fn eigenfunction_examples() {
        assert_relative_eq!(eigenfunction(1, 1.0, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(eigenfunction(1, 1.0, -1.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(eigenfunction(2, 1.0, 0.0).unwrap(), 0.0, epsilon = 1e-15);
        for j in 1..30 {
            assert!(eigenfunction(j, 2.0, 2.0).unwrap().abs() < 1e-13);
            assert!(eigenfunction(j, 2.0, -2.0).unwrap().abs() < 1e-13);
        }
        assert!(eigenfunction(0, 1.0, 0.0).is_err());
        // outside the box is allowed
        assert!(eigenfunction(1, 1.0, 1.5).unwrap().is_finite());
    }

    #[test]
    fn tuples_match_printed_layout() {
        let b = build_tuples(&[2, 2, 3]).unwrap();
        assert_eq!(b.len(), 12);
        let expected: [[usize; 3]; 12] = [
            [1, 1, 1], [1, 1, 2], [1, 1, 3], [1, 2, 1], [1, 2, 2], [1, 2, 3],
            [2, 1, 1], [2, 1, 2], [2, 1, 3], [2, 2, 1], [2, 2, 2], [2, 2, 3],
        ];
        for (j, row) in expected.iter().enumerate() {
            assert_eq!(b.tuple(j), row);
        }
        let b = build_tuples(&[1]).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.tuple(0), &[1]);
        let b = build_tuples(&[3, 2]).unwrap();
        let rows: Vec<Vec<usize>> = b.tuples().map(|t| t.to_vec()).collect();
        assert_eq!(rows, vec![vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2], vec![3, 1], vec![3, 2]]);
    }

    #[test]
    fn tuple_errors() {
        assert!(matches!(build_tuples(&[]), Err(HsgpError::Input(_))));
        assert!(matches!(build_tuples(&[3, 0]), Err(HsgpError::Input(_))));
        match build_tuples(&[1000, 1000]) {
            Err(HsgpError::Resource(msg)) => assert!(msg.contains("1000000")),
            other => panic!("expected resource error, got {other:?}"),
        }
        assert!(build_tuples_with_cap(&[4, 4], 15).is_err());
        assert!(build_tuples_with_cap(&[4, 4], 16).is_ok());
        assert!(matches!(build_tuples(&[usize::MAX, 3]), Err(HsgpError::Resource(_))));
    }

    #[test]
    fn multi_eigen_examples() {
        let v = multi_eigenvalue(&[1, 2], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(v[0], 2.467_401, epsilon = 1e-6);
        assert_relative_eq!(v[1], 9.869_604, epsilon = 1e-6);
        assert_eq!(multi_eigenvalue(&[1], &[1.0]).unwrap()[0], eigenvalue(1, 1.0).unwrap());
        let v = multi_eigenvalue(&[2, 2, 3], &[1.0; 3]).unwrap();
        assert_relative_eq!(v[0], 9.869_604, epsilon = 1e-6);
        assert_relative_eq!(v[1], 9.869_604, epsilon = 1e-6);
        assert_relative_eq!(v[2], 22.206_610, epsilon = 1e-6);
        assert!(multi_eigenvalue(&[1, 2], &[1.0]).is_err());

        assert_relative_eq!(multi_eigenfunction(&[1, 1], &[1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(multi_eigenfunction(&[1, 1], &[1.0, 1.0], &[1.0, 0.0]).unwrap(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(multi_eigenfunction(&[1, 2], &[1.0, 1.0], &[0.0, 0.5]).unwrap(), -1.0, epsilon = 1e-15);
        assert!(multi_eigenfunction(&[1, 2], &[1.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn design_matrix_examples() {
        let dom = DomainConfig::symmetric(1.0, 1.0).unwrap();
        let dm = design_matrix(&DMatrix::from_element(1, 1, 0.0), &dom, &build_tuples(&[1]).unwrap()).unwrap();
        assert_relative_eq!(dm.phi[(0, 0)], 1.0, epsilon = 1e-15);

        let dom = DomainConfig::symmetric(0.8, 1.5).unwrap();
        let l = 1.2;
        let x = DMatrix::from_row_slice(2, 1, &[-l, l]);
        let dm = design_matrix(&x, &dom, &build_tuples(&[17]).unwrap()).unwrap();
        assert!(dm.phi.iter().all(|v| v.abs() < 1e-13));
        assert!(!dm.has_extrapolation());

        let dom = DomainConfig::new(vec![1.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let basis = build_tuples(&[1, 2]).unwrap();
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 0.5]);
        let dm = design_matrix(&x, &dom, &basis).unwrap();
        for j in 0..2 {
            assert_eq!(dm.phi[(0, j)], multi_eigenfunction(basis.tuple(j), &[1.0, 1.0], &[0.0, 0.5]).unwrap());
        }
        assert_relative_eq!(dm.phi[(0, 0)], (PI * 0.75).sin(), epsilon = 1e-15);
        assert_relative_eq!(dm.phi[(0, 1)], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn design_matrix_flags_points_outside_box() {
        let dom = DomainConfig::symmetric(1.0, 1.2).unwrap();
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.3, -1.19]);
        let dm = design_matrix(&x, &dom, &build_tuples(&[5]).unwrap()).unwrap();
        assert_eq!(dm.outside_rows, vec![1]);
        assert!(dm.has_extrapolation());
    }

    #[test]
    fn orthonormality_on_a_fine_grid() {
        let l = 1.7;
        let n = 10_000;
        let grid: Vec<f64> = (0..n).map(|k| -l + 2.0 * l * (k as f64 + 0.5) / n as f64).collect();
        for i in 1..=20 {
            for j in 1..=20 {
                let s: f64 = grid
                    .iter()
                    .map(|&x| eigenfunction(i, l, x).unwrap() * eigenfunction(j, l, x).unwrap())
                    .sum();
                let inner = 2.0 * l / n as f64 * s;
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((inner - target).abs() < 1e-3, "<φ{i}, φ{j}> = {inner}");
            }
        }
    }

    #[test]
    fn domain_from_data() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, -4.0, 3.0, 0.0, 2.0, 2.0]);
        let dom = DomainConfig::from_data(&x, &[1.5, 2.0]).unwrap();
        assert_eq!(dom.centers(), &[2.0, -1.0]);
        assert_eq!(dom.half_ranges(), &[1.0, 3.0]);
        assert_eq!(dom.boundaries(), vec![1.5, 6.0]);
        let xc = dom.center_inputs(&x).unwrap();
        assert_eq!(xc[(0, 0)], -1.0);
        assert!(DomainConfig::symmetric(1.0, 0.9).is_err());
        assert!(DomainConfig::symmetric(0.0, 1.5).is_err());
    }

    #[test]
    fn serialization_rebuilds_tuples() {
        let b = build_tuples(&[2, 3]).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, r#"{"counts":[2,3]}"#);
        let back: BasisConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
        let dom = DomainConfig::new(vec![1.0], vec![1.5], vec![0.25]).unwrap();
        let back: DomainConfig = serde_json::from_str(&serde_json::to_string(&dom).unwrap()).unwrap();
        assert_eq!(back, dom);
        assert!(serde_json::from_str::<DomainConfig>(r#"{"half_ranges":[1],"boundary_factors":[0.5]}"#).is_err());
    }

    proptest! {
        #[test]
        fn tuple_cardinality_and_uniqueness(counts in prop::collection::vec(1usize..6, 1..4)) {
            let b = build_tuples(&counts).unwrap();
            let expected: usize = counts.iter().product();
            prop_assert_eq!(b.len(), expected);
            let set: HashSet<Vec<usize>> = b.tuples().map(|t| t.to_vec()).collect();
            prop_assert_eq!(set.len(), expected);
            for t in b.tuples() {
                for (v, m) in t.iter().zip(&counts) {
                    prop_assert!(*v >= 1 && v <= m);
                }
            }
        }

        #[test]
        fn design_rows_equal_pointwise_evaluations(
            pts in prop::collection::vec((-1.5f64..1.5, -2.0f64..2.0), 1..8),
            m0 in 1usize..6, m1 in 1usize..6,
        ) {
            let dom = DomainConfig::new(vec![1.0, 1.3], vec![1.4, 1.7], vec![0.0, 0.0]).unwrap();
            let basis = build_tuples(&[m0, m1]).unwrap();
            let flat: Vec<f64> = pts.iter().flat_map(|&(a, b)| [a, b]).collect();
            let x = DMatrix::from_row_slice(pts.len(), 2, &flat);
            let dm = design_matrix(&x, &dom, &basis).unwrap();
            let l = dom.boundaries();
            for (i, &(a, b)) in pts.iter().enumerate() {
                for (j, t) in basis.tuples().enumerate() {
                    prop_assert_eq!(dm.phi[(i, j)], multi_eigenfunction(t, &l, &[a, b]).unwrap());
                }
            }
        }
    }
}
