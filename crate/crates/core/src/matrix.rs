//! Validated containers shared by every stage of the pipeline.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `n x p` covariate matrix with optional column names.
///
/// Every entry is finite. Storage is column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    col_names: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                context: "data matrix must have at least one row and one column",
                expected: 1,
                found: 0,
            });
        }
        if let Some((row, col)) = first_non_finite(&values) {
            return Err(Error::NonFiniteEntry { row, col });
        }
        Ok(Self {
            values,
            col_names: None,
        })
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "row-major buffer length",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn with_col_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.cols() {
            return Err(Error::DimensionMismatch {
                context: "column names",
                expected: self.cols(),
                found: names.len(),
            });
        }
        self.col_names = Some(names);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn col_names(&self) -> Option<&[String]> {
        self.col_names.as_deref()
    }

    /// Name of column `j` (0-based); falls back to `X{j+1}`.
    pub fn col_name(&self, j: usize) -> String {
        match &self.col_names {
            Some(names) => names[j].clone(),
            None => format!("X{}", j + 1),
        }
    }

    /// Keeps the listed rows (0-based, in the given order).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(rows),
            col_names: self.col_names.clone(),
        }
    }

    /// Keeps the listed columns (0-based, in the given order).
    pub fn select_cols(&self, cols: &[usize]) -> Self {
        Self {
            values: self.values.select_columns(cols),
            col_names: self
                .col_names
                .as_ref()
                .map(|names| cols.iter().map(|&j| names[j].clone()).collect()),
        }
    }
}

/// Response vector `Y`; all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseVector {
    values: DVector<f64>,
}

impl ResponseVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry { row: i + 1, col: 1 });
        }
        Ok(Self { values })
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        Self::new(DVector::from_vec(values))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.values[i])),
        }
    }
}

/// Checks that `x` and `y` are finite and have matching row counts.
///
/// The inputs are copied, never modified.
pub fn validate_dataset(x: &DMatrix<f64>, y: &[f64]) -> Result<(DataMatrix, ResponseVector)> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "response length vs design rows",
            expected: x.nrows(),
            found: y.len(),
        });
    }
    let x = DataMatrix::new(x.clone())?;
    let y = ResponseVector::from_vec(y.to_vec())?;
    Ok((x, y))
}

pub(crate) fn check_rows(x: &DataMatrix, y: &ResponseVector) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "response length vs design rows",
            expected: x.rows(),
            found: y.len(),
        });
    }
    Ok(())
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !m[(i, j)].is_finite() {
                return Some((i + 1, j + 1));
            }
        }
    }
    None
}

/// Where a set of moments came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentOrigin {
    Analytic,
    Estimated { train_size: usize },
}

/// First two moments `(mu, Sigma_X)` of the covariate law.
///
/// `sigma` is symmetric (to 1e-10 relative) and positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    mean: DVector<f64>,
    sigma: DMatrix<f64>,
    source: MomentOrigin,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
}

impl CovarianceSpec {
    pub fn new(mean: DVector<f64>, sigma: DMatrix<f64>, source: MomentOrigin) -> Result<Self> {
        let p = mean.len();
        if sigma.nrows() != p || sigma.ncols() != p {
            return Err(Error::DimensionMismatch {
                context: "covariance vs mean length",
                expected: p,
                found: sigma.nrows(),
            });
        }
        if let Some((row, col)) = first_non_finite(&sigma) {
            return Err(Error::NonFiniteEntry { row, col });
        }
        if let Some(i) = mean.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry { row: i + 1, col: 1 });
        }
        let scale = sigma.amax().max(f64::MIN_POSITIVE);
        let asymmetry = max_asymmetry(&sigma);
        if asymmetry > 1e-10 * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let sigma = symmetrize(&sigma);
        let (min_eigenvalue, max_eigenvalue) = eigen_range(&sigma);
        if !(min_eigenvalue > 0.0) {
            return Err(Error::NotPd { min_eigenvalue });
        }
        Ok(Self {
            mean,
            sigma,
            source,
            min_eigenvalue,
            max_eigenvalue,
        })
    }

    /// Sample mean and unbiased sample covariance of the rows of `x`.
    pub fn estimate(x: &DataMatrix) -> Result<Self> {
        let mut acc = MomentAccumulator::new(x.cols());
        acc.push_rows(x.values());
        acc.finish()
    }

    /// Returns a copy with `eps * I` added to the covariance.
    pub fn with_ridge(&self, eps: f64) -> Result<Self> {
        let p = self.dim();
        let sigma = &self.sigma + DMatrix::identity(p, p) * eps;
        Self::new(self.mean.clone(), sigma, self.source)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn source(&self) -> MomentOrigin {
        self.source
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// Operator norm of `sigma`.
    pub fn max_eigenvalue(&self) -> f64 {
        self.max_eigenvalue
    }

    pub fn is_diagonal(&self) -> bool {
        is_diagonal(&self.sigma)
    }
}

/// Streaming accumulator of first and second raw moments.
///
/// Lets large training samples be reduced in row blocks without holding the
/// whole sample in memory.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    count: usize,
    sum: DVector<f64>,
    cross: DMatrix<f64>,
}

impl MomentAccumulator {
    pub fn new(p: usize) -> Self {
        Self {
            count: 0,
            sum: DVector::zeros(p),
            cross: DMatrix::zeros(p, p),
        }
    }

    /// Adds each row of `block` as one observation.
    pub fn push_rows(&mut self, block: &DMatrix<f64>) {
        assert_eq!(block.ncols(), self.sum.len(), "block width");
        self.count += block.nrows();
        for (j, col) in block.column_iter().enumerate() {
            self.sum[j] += col.sum();
        }
        self.cross.gemm_tr(1.0, block, block, 1.0);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(&self) -> Result<CovarianceSpec> {
        self.finish_with_ridge(0.0)
    }

    /// Like [`finish`](Self::finish) with `eps * I` added before the
    /// definiteness check.
    pub fn finish_with_ridge(&self, eps: f64) -> Result<CovarianceSpec> {
        let n = self.count;
        if n < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least two observations to estimate a covariance, got {n}"
            )));
        }
        let nf = n as f64;
        let mean = &self.sum / nf;
        let mut sigma = (&self.cross - &mean * mean.transpose() * nf) / (nf - 1.0);
        sigma = symmetrize(&sigma);
        for j in 0..sigma.nrows() {
            sigma[(j, j)] += eps;
        }
        CovarianceSpec::new(mean, sigma, MomentOrigin::Estimated { train_size: n })
    }
}

/// Index set of relevant features plus an optional coefficient vector.
///
/// Indices are 0-based internally and strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    p: usize,
    h1: Vec<usize>,
    beta: Option<DVector<f64>>,
}

impl GroundTruth {
    pub fn new(p: usize, h1: Vec<usize>, beta: Option<DVector<f64>>) -> Result<Self> {
        if h1.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidTruth(
                "relevant indices must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = h1.last() {
            if last >= p {
                return Err(Error::InvalidTruth(format!(
                    "index {} exceeds p = {p}",
                    last + 1
                )));
            }
        }
        if let Some(b) = &beta {
            if b.len() != p {
                return Err(Error::DimensionMismatch {
                    context: "coefficient vector",
                    expected: p,
                    found: b.len(),
                });
            }
            let support: Vec<usize> = (0..p).filter(|&j| b[j] != 0.0).collect();
            if support != h1 {
                return Err(Error::InvalidTruth(
                    "nonzero coefficients must coincide with the relevant set".into(),
                ));
            }
        }
        Ok(Self { p, h1, beta })
    }

    /// Builds the truth from a coefficient vector; the support becomes `h1`.
    pub fn from_beta(beta: DVector<f64>) -> Self {
        let p = beta.len();
        let h1 = (0..p).filter(|&j| beta[j] != 0.0).collect();
        Self {
            p,
            h1,
            beta: Some(beta),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn h1(&self) -> &[usize] {
        &self.h1
    }

    pub fn is_relevant(&self, j: usize) -> bool {
        self.h1.binary_search(&j).is_ok()
    }

    /// Null indices (complement of `h1`).
    pub fn h0(&self) -> Vec<usize> {
        (0..self.p).filter(|j| !self.is_relevant(*j)).collect()
    }

    pub fn beta(&self) -> Option<&DVector<f64>> {
        self.beta.as_ref()
    }
}

/// Symmetric PSD square root through a symmetric eigendecomposition.
///
/// Eigenvalues in `[-tol, 0]` are clamped to zero; anything below `-tol`
/// is rejected. Asymmetry above `tol` (or 1e-10 relative) is rejected.
pub fn matrix_sqrt_psd(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    if a.ncols() != p {
        return Err(Error::DimensionMismatch {
            context: "square matrix",
            expected: p,
            found: a.ncols(),
        });
    }
    let asymmetry = max_asymmetry(a);
    if asymmetry > tol.max(1e-10 * a.amax()) {
        return Err(Error::NotSymmetric { asymmetry });
    }
    if is_diagonal(a) {
        let mut out = DMatrix::zeros(p, p);
        for j in 0..p {
            let v = a[(j, j)];
            if v < -tol {
                return Err(Error::NotPsd { min_eigenvalue: v });
            }
            out[(j, j)] = v.max(0.0).sqrt();
        }
        return Ok(out);
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let min = eig.eigenvalues.min();
    if min < -tol {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= roots[j];
    }
    Ok(symmetrize(&(scaled * v.transpose())))
}

/// [`matrix_sqrt_psd`] with the clamp tolerance `1e-10 * ||a||_op`.
pub fn matrix_sqrt_psd_default(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (lo, hi) = eigen_range(&symmetrize(a));
    let norm = lo.abs().max(hi.abs());
    matrix_sqrt_psd(a, 1e-10 * norm.max(f64::MIN_POSITIVE))
}

pub(crate) fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub(crate) fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let p = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in (i + 1)..p {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn is_diagonal(a: &DMatrix<f64>) -> bool {
    let p = a.nrows();
    (0..p).all(|j| (0..p).all(|i| i == j || a[(i, j)] == 0.0))
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub(crate) fn eigen_range(a: &DMatrix<f64>) -> (f64, f64) {
    if is_diagonal(a) {
        let d = a.diagonal();
        return (d.min(), d.max());
    }
    let eig = SymmetricEigen::new(a.clone());
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}
