//! Two-moment Gaussian knockoff generation.
//!
//! Given `(mu, Sigma_X)` and a perturbation vector `r`, each centered row is
//! mapped as
//!
//! ```text
//! xhat = (I - diag(r) Sigma_X^{-1}) (x - mu) + mu + (2 diag(r) - diag(r) Sigma_X^{-1} diag(r))^{1/2} z
//! ```
//!
//! with `z` i.i.d. zero-mean unit-variance noise. The covariance of the
//! stacked vector `(x, xhat)` is then `[[S, S - D], [S - D, S]]`, which is
//! invariant under swapping any `x_j` with `xhat_j`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    eigen_range, is_diagonal, matrix_sqrt_psd, symmetrize, CovarianceSpec, DataMatrix,
    MomentAccumulator,
};

/// Rule for picking the diagonal perturbation `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RMethod {
    /// `r = s * diag(Sigma_X)` with `s` from the smallest eigenvalue of the
    /// correlation matrix.
    Equicorrelated,
    /// `r_j = Sigma_jj`; only valid for diagonal `Sigma_X`.
    DiagonalIdentity,
}

impl RMethod {
    /// Diagonal identity for diagonal covariances, equicorrelated otherwise.
    pub fn auto(cov: &CovarianceSpec) -> Self {
        if cov.is_diagonal() {
            RMethod::DiagonalIdentity
        } else {
            RMethod::Equicorrelated
        }
    }
}

const EQUICORRELATED_SHRINK: f64 = 1.0 - 1e-6;

pub fn choose_r(cov: &CovarianceSpec, method: RMethod) -> Result<DVector<f64>> {
    let r = r_for(cov, method)?;
    // surfaces PSDViolation for the chosen r
    KnockoffModel::new(cov.clone(), r.clone())?;
    Ok(r)
}

fn r_for(cov: &CovarianceSpec, method: RMethod) -> Result<DVector<f64>> {
    let sigma = cov.sigma();
    let diag = sigma.diagonal();
    let r = match method {
        RMethod::DiagonalIdentity => {
            if !cov.is_diagonal() {
                return Err(Error::NotDiagonal);
            }
            diag
        }
        RMethod::Equicorrelated => {
            let p = cov.dim();
            let inv_sd = diag.map(|v| 1.0 / v.sqrt());
            let corr = DMatrix::from_fn(p, p, |i, j| sigma[(i, j)] * inv_sd[i] * inv_sd[j]);
            let (lambda_min, _) = eigen_range(&symmetrize(&corr));
            let s = (2.0 * lambda_min).min(1.0) * EQUICORRELATED_SHRINK;
            if !(s > 0.0) {
                return Err(Error::PsdViolation {
                    min_eigenvalue: lambda_min,
                    columns: Vec::new(),
                });
            }
            diag * s
        }
    };
    Ok(r)
}

/// Moments plus the two linear factors of the knockoff map.
#[derive(Debug, Clone)]
pub struct KnockoffModel {
    cov: CovarianceSpec,
    r: DVector<f64>,
    precision: DMatrix<f64>,
    conditional_loading: DMatrix<f64>,
    noise_cov: DMatrix<f64>,
    noise_sqrt: DMatrix<f64>,
}

/// Smallest admissible eigenvalue of the knockoff noise covariance.
pub const NOISE_PSD_TOL: f64 = 1e-10;

impl KnockoffModel {
    pub fn new(cov: CovarianceSpec, r: DVector<f64>) -> Result<Self> {
        let p = cov.dim();
        if r.len() != p {
            return Err(Error::DimensionMismatch {
                context: "perturbation vector r",
                expected: p,
                found: r.len(),
            });
        }
        if r.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig("r must be positive and finite".into()));
        }
        if cov.min_eigenvalue() < 1e-10 * cov.max_eigenvalue() {
            return Err(Error::PsdViolation {
                min_eigenvalue: cov.min_eigenvalue(),
                columns: Vec::new(),
            });
        }
        let precision = precision_of(cov.sigma())?;
        // I - D Sigma^{-1} == (Sigma - D) Sigma^{-1}; the latter is exactly
        // zero when D reproduces a diagonal Sigma.
        let mut shifted = cov.sigma().clone();
        for j in 0..p {
            shifted[(j, j)] -= r[j];
        }
        let conditional_loading = if is_diagonal(&shifted) {
            DMatrix::from_fn(p, p, |i, j| shifted[(i, j)] * precision[(i, j)])
        } else {
            shifted * &precision
        };
        let noise_cov = noise_covariance(&precision, &r);
        let noise_sqrt = checked_noise_sqrt(&noise_cov)?;
        Ok(Self {
            cov,
            r,
            precision,
            conditional_loading,
            noise_cov,
            noise_sqrt,
        })
    }

    /// Builds the model with `r` picked by `method`.
    pub fn with_method(cov: CovarianceSpec, method: RMethod) -> Result<Self> {
        let r = r_for(&cov, method)?;
        Self::new(cov, r)
    }

    pub fn dim(&self) -> usize {
        self.r.len()
    }

    pub fn cov(&self) -> &CovarianceSpec {
        &self.cov
    }

    pub fn r(&self) -> &DVector<f64> {
        &self.r
    }

    /// `Sigma_X^{-1}`.
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// `I - diag(r) Sigma_X^{-1}`.
    pub fn conditional_loading(&self) -> &DMatrix<f64> {
        &self.conditional_loading
    }

    /// `2 diag(r) - diag(r) Sigma_X^{-1} diag(r)`.
    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    pub fn noise_sqrt(&self) -> &DMatrix<f64> {
        &self.noise_sqrt
    }

    pub fn joint_covariance(&self) -> JointCovariance {
        JointCovariance::new(self.cov.sigma(), &self.r)
    }
}

fn precision_of(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = sigma.nrows();
    if is_diagonal(sigma) {
        return Ok(DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                1.0 / sigma[(i, i)]
            } else {
                0.0
            }
        }));
    }
    let chol = sigma.clone().cholesky().ok_or(Error::NotPd {
        min_eigenvalue: eigen_range(sigma).0,
    })?;
    Ok(symmetrize(&chol.inverse()))
}

fn noise_covariance(precision: &DMatrix<f64>, r: &DVector<f64>) -> DMatrix<f64> {
    let p = r.len();
    let s = DMatrix::from_fn(p, p, |i, j| {
        let base = -r[i] * precision[(i, j)] * r[j];
        if i == j {
            2.0 * r[i] + base
        } else {
            base
        }
    });
    symmetrize(&s)
}

fn checked_noise_sqrt(noise_cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match matrix_sqrt_psd(noise_cov, NOISE_PSD_TOL) {
        Ok(b) => Ok(b),
        Err(Error::NotPsd { min_eigenvalue }) => Err(Error::PsdViolation {
            min_eigenvalue,
            columns: Vec::new(),
        }),
        Err(e) => Err(e),
    }
}

/// `Cov[(X, Xhat)]` as a `2p x 2p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCovariance {
    sigma2p: DMatrix<f64>,
}

impl JointCovariance {
    pub fn new(sigma: &DMatrix<f64>, r: &DVector<f64>) -> Self {
        let p = sigma.nrows();
        let mut off = sigma.clone();
        for j in 0..p {
            off[(j, j)] -= r[j];
        }
        let mut sigma2p = DMatrix::zeros(2 * p, 2 * p);
        sigma2p.view_mut((0, 0), (p, p)).copy_from(sigma);
        sigma2p.view_mut((p, p), (p, p)).copy_from(sigma);
        sigma2p.view_mut((0, p), (p, p)).copy_from(&off);
        sigma2p.view_mut((p, 0), (p, p)).copy_from(&off);
        Self { sigma2p }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma2p
    }

    pub fn p(&self) -> usize {
        self.sigma2p.nrows() / 2
    }

    /// Applies the row/column permutation exchanging `j` and `j + p` for
    /// every `j` in `swaps` (0-based).
    pub fn swapped(&self, swaps: &[usize]) -> DMatrix<f64> {
        let perm = swap_permutation(self.p(), swaps);
        let m = 2 * self.p();
        DMatrix::from_fn(m, m, |a, b| self.sigma2p[(perm[a], perm[b])])
    }
}

fn swap_permutation(p: usize, swaps: &[usize]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..2 * p).collect();
    for &j in swaps {
        perm.swap(j, j + p);
    }
    perm
}

/// Distribution of the i.i.d. noise entries fed to the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    #[default]
    Gaussian,
    Rademacher,
    /// Uniform on `[-sqrt(3), sqrt(3)]`.
    Uniform,
}

impl NoiseLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseLaw::Gaussian => StandardNormal.sample(rng),
            NoiseLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            NoiseLaw::Uniform => rng.random_range(-1.0..1.0) * 3f64.sqrt(),
        }
    }

    /// `n x p` matrix of i.i.d. draws, filled row by row.
    pub fn matrix<R: Rng + ?Sized>(&self, n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(n, p);
        for i in 0..n {
            for j in 0..p {
                z[(i, j)] = self.sample(rng);
            }
        }
        z
    }
}

/// Knockoff model from the sample moments of `x`, optionally with a ridge
/// on the covariance. Constant columns are reported by name.
pub fn estimated_model(
    x: &DataMatrix,
    method: Option<RMethod>,
    ridge: f64,
) -> Result<KnockoffModel> {
    let constant: Vec<String> = x
        .values()
        .column_iter()
        .enumerate()
        .filter(|(_, c)| c.iter().all(|v| *v == c[0]))
        .map(|(j, _)| x.col_name(j))
        .collect();
    if !constant.is_empty() {
        return Err(Error::PsdViolation {
            min_eigenvalue: 0.0,
            columns: constant,
        });
    }
    let mut acc = MomentAccumulator::new(x.cols());
    acc.push_rows(x.values());
    let cov = acc.finish_with_ridge(ridge)?;
    let method = method.unwrap_or_else(|| RMethod::auto(&cov));
    KnockoffModel::with_method(cov, method)
}

/// Gaussian knockoffs for every row of `x`.
pub fn gaussian_knockoffs<R: Rng + ?Sized>(
    x: &DataMatrix,
    model: &KnockoffModel,
    rng: &mut R,
) -> Result<DataMatrix> {
    knockoffs_with_noise(x, model, NoiseLaw::Gaussian, rng)
}

pub fn knockoffs_with_noise<R: Rng + ?Sized>(
    x: &DataMatrix,
    model: &KnockoffModel,
    law: NoiseLaw,
    rng: &mut R,
) -> Result<DataMatrix> {
    check_width(x, model.dim())?;
    let z = law.matrix(x.rows(), x.cols(), rng);
    knockoffs_from_noise(x, model, &z)
}

/// Knockoffs for a fixed noise realization `z` (`n x p`).
pub fn knockoffs_from_noise(
    x: &DataMatrix,
    model: &KnockoffModel,
    z: &DMatrix<f64>,
) -> Result<DataMatrix> {
    check_width(x, model.dim())?;
    check_noise_shape(x, z)?;
    let mean = model.cov().mean();
    let centered = center(x.values(), mean);
    let mut out = if model.conditional_loading.iter().all(|v| *v == 0.0) {
        DMatrix::zeros(x.rows(), x.cols())
    } else {
        centered * model.conditional_loading.transpose()
    };
    add_noise(&mut out, z, &model.noise_sqrt);
    add_mean(&mut out, mean);
    finish(out, x)
}

/// Knockoffs built from estimated moments: `mean_hat` and `omega_hat`
/// (an estimate of `Sigma_X^{-1}`), with the same centering convention as
/// [`gaussian_knockoffs`].
pub fn sample_moment_knockoffs<R: Rng + ?Sized>(
    x: &DataMatrix,
    mean_hat: &DVector<f64>,
    omega_hat: &DMatrix<f64>,
    r: &DVector<f64>,
    rng: &mut R,
) -> Result<DataMatrix> {
    let z = NoiseLaw::Gaussian.matrix(x.rows(), x.cols(), rng);
    sample_moment_knockoffs_from_noise(x, mean_hat, omega_hat, r, &z)
}

pub fn sample_moment_knockoffs_from_noise(
    x: &DataMatrix,
    mean_hat: &DVector<f64>,
    omega_hat: &DMatrix<f64>,
    r: &DVector<f64>,
    z: &DMatrix<f64>,
) -> Result<DataMatrix> {
    let p = x.cols();
    for (what, len) in [
        ("mean estimate", mean_hat.len()),
        ("r", r.len()),
        ("precision estimate", omega_hat.nrows()),
    ] {
        if len != p {
            return Err(Error::DimensionMismatch {
                context: what,
                expected: p,
                found: len,
            });
        }
    }
    check_noise_shape(x, z)?;
    let noise_cov = noise_covariance(omega_hat, r);
    let noise_sqrt = checked_noise_sqrt(&noise_cov)?;
    // X (I - Omega_hat diag(r)), in row form
    let right = DMatrix::from_fn(p, p, |i, j| {
        let v = -omega_hat[(i, j)] * r[j];
        if i == j {
            1.0 + v
        } else {
            v
        }
    });
    let mut out = center(x.values(), mean_hat) * right;
    add_noise(&mut out, z, &noise_sqrt);
    add_mean(&mut out, mean_hat);
    finish(out, x)
}

/// `n^{-1/2} max_j ||a_j - b_j||`.
pub fn coupling_distance(a: &DataMatrix, b: &DataMatrix) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            context: "coupling distance operands",
            expected: a.rows() * a.cols(),
            found: b.rows() * b.cols(),
        });
    }
    Ok(column_rms_max(&(a.values() - b.values())))
}

fn column_rms_max(d: &DMatrix<f64>) -> f64 {
    let n = d.nrows() as f64;
    d.column_iter()
        .map(|c| c.norm() / n.sqrt())
        .fold(0.0, f64::max)
}

/// Right-hand side of the coupling bound between population-moment and
/// estimated-moment knockoffs that share one noise realization:
///
/// `||r||_inf ||Xc (Omega_hat - Sigma^{-1})||_{1,2}
///   + 6 max(c1^{-3/2}, c2^{-3/2}) ||r||_inf^2 ||Omega_hat - Sigma^{-1}||_op`
///
/// where `c1`, `c2` are the spectral bounds of the two noise covariances and
/// `Xc` is `x` centered at the model mean.
pub fn coupling_bound(x: &DataMatrix, model: &KnockoffModel, omega_hat: &DMatrix<f64>) -> f64 {
    let r = model.r();
    let r_inf = r.amax();
    let delta = symmetrize(&(omega_hat - model.precision()));
    let xc = center(x.values(), model.cov().mean());
    let term1 = r_inf * column_rms_max(&(xc * &delta));
    let delta_op = SymmetricEigen::new(delta).eigenvalues.amax();
    let c1 = spectral_constant(model.noise_cov());
    let c2 = spectral_constant(&noise_covariance(omega_hat, r));
    let c = c1.powf(-1.5).max(c2.powf(-1.5));
    term1 + 6.0 * c * r_inf * r_inf * delta_op
}

/// Largest `c` with `c <= lambda_min` and `lambda_max <= 1/c`.
fn spectral_constant(s: &DMatrix<f64>) -> f64 {
    let (lo, hi) = eigen_range(s);
    lo.min(1.0 / hi)
}

/// Largest standardized difference between the sample covariance of
/// `[X, Xhat]` and its single-swap permutations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeCheck {
    /// Max over swaps and affected entries of `|mean(d)| / se(d)`.
    pub max_abs_z: f64,
    pub entries: usize,
}

impl ExchangeCheck {
    pub fn passes(&self, z_limit: f64) -> bool {
        self.max_abs_z <= z_limit
    }
}

/// For each `j` in `swaps`, compares every covariance entry touched by the
/// exchange `j <-> j + p` with its permuted counterpart. Each comparison is a
/// mean of per-row products, so its Monte-Carlo standard error is
/// `sd(d_i) / sqrt(n)`.
pub fn exchangeability_check(
    x: &DataMatrix,
    xhat: &DataMatrix,
    swaps: &[usize],
) -> Result<ExchangeCheck> {
    if x.rows() != xhat.rows() || x.cols() != xhat.cols() {
        return Err(Error::DimensionMismatch {
            context: "knockoff matrix shape",
            expected: x.cols(),
            found: xhat.cols(),
        });
    }
    let n = x.rows();
    let p = x.cols();
    let mut joint = DMatrix::zeros(n, 2 * p);
    joint.columns_mut(0, p).copy_from(x.values());
    joint.columns_mut(p, p).copy_from(xhat.values());
    for mut col in joint.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let mut max_abs_z = 0.0f64;
    let mut entries = 0usize;
    for &j in swaps {
        let perm = swap_permutation(p, &[j]);
        for a in [j, j + p] {
            for b in 0..2 * p {
                let (pa, pb) = (perm[a], perm[b]);
                // (j, j+p) maps onto (j+p, j): same entry by symmetry
                if (pa == a && pb == b) || (pa == b && pb == a) {
                    continue;
                }
                let mut sum = 0.0;
                let mut sumsq = 0.0;
                for i in 0..n {
                    let d = joint[(i, a)] * joint[(i, b)] - joint[(i, pa)] * joint[(i, pb)];
                    sum += d;
                    sumsq += d * d;
                }
                let nf = n as f64;
                let mean = sum / nf;
                let var = (sumsq / nf - mean * mean).max(0.0) * nf / (nf - 1.0).max(1.0);
                entries += 1;
                if var > 0.0 {
                    max_abs_z = max_abs_z.max(mean.abs() / (var / nf).sqrt());
                }
            }
        }
    }
    Ok(ExchangeCheck { max_abs_z, entries })
}

fn check_width(x: &DataMatrix, p: usize) -> Result<()> {
    if x.cols() != p {
        return Err(Error::DimensionMismatch {
            context: "design width vs knockoff model",
            expected: p,
            found: x.cols(),
        });
    }
    Ok(())
}

fn check_noise_shape(x: &DataMatrix, z: &DMatrix<f64>) -> Result<()> {
    if z.nrows() != x.rows() || z.ncols() != x.cols() {
        return Err(Error::DimensionMismatch {
            context: "noise matrix shape",
            expected: x.rows() * x.cols(),
            found: z.nrows() * z.ncols(),
        });
    }
    Ok(())
}

fn center(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    c
}

fn add_mean(out: &mut DMatrix<f64>, mean: &DVector<f64>) {
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(mean[j]);
    }
}

fn add_noise(out: &mut DMatrix<f64>, z: &DMatrix<f64>, sqrt: &DMatrix<f64>) {
    if is_diagonal(sqrt) {
        for j in 0..out.ncols() {
            let s = sqrt[(j, j)];
            out.column_mut(j).axpy(s, &z.column(j), 1.0);
        }
    } else {
        out.gemm(1.0, z, sqrt, 1.0);
    }
}

fn finish(out: DMatrix<f64>, x: &DataMatrix) -> Result<DataMatrix> {
    let dm = DataMatrix::new(out)?;
    match x.col_names() {
        Some(names) => dm.with_col_names(names.iter().map(|n| format!("{n}_knockoff")).collect()),
        None => Ok(dm),
    }
}
