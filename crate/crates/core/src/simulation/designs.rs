//! Synthetic covariate designs, coefficient vectors and response models.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::diagnostics::normal_sf;
use crate::error::{Error, Result};
use crate::matrix::{
    CovarianceSpec, DataMatrix, GroundTruth, MomentAccumulator, MomentOrigin, ResponseVector,
};

/// Half-width of the band in the banded precision matrix.
pub const BAND: usize = 5;
/// Rows drawn per block when accumulating training moments.
const TRAIN_BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateLaw {
    /// `X_j = 1{Z_j >= alpha_j}` with `Z ~ N(0, Omega^{-1})`.
    BinaryThreshold,
    /// `X ~ N(0, Omega^{-1})`.
    Gaussian,
    Rademacher,
    /// Student t scaled to unit variance.
    StudentT {
        dof: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseModel {
    /// `Y = X beta + eps`.
    Linear,
    /// `Y = 5 |X beta|^{1/2} tanh(X beta) + eps`.
    TanhNonlinear,
    /// `Y = eps`.
    Null,
}

/// `Omega_ij = rho^{|i-j|} 1{|i-j| <= 5}`.
pub fn gen_banded_precision(p: usize, rho: f64) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::OutOfRange {
            value: rho,
            range: "[0, 1)",
        });
    }
    let omega = DMatrix::from_fn(p, p, |i, j| {
        let d = i.abs_diff(j);
        if d <= BAND {
            rho.powi(d as i32)
        } else {
            0.0
        }
    });
    let (lo, _) = crate::matrix::eigen_range(&omega);
    if lo <= 0.0 {
        return Err(Error::NotPd { min_eigenvalue: lo });
    }
    Ok(omega)
}

/// Draws rows of `N(0, Omega^{-1})` for a banded `Omega` by solving
/// `L^T z = eps` with the banded Cholesky factor `Omega = L L^T`.
#[derive(Debug, Clone)]
pub struct BandedGaussian {
    p: usize,
    /// `None` when `Omega` is the identity.
    chol: Option<DMatrix<f64>>,
    bandwidth: usize,
}

impl BandedGaussian {
    pub fn new(omega: &DMatrix<f64>) -> Result<Self> {
        let p = omega.nrows();
        let identity = omega.is_identity(0.0);
        let chol = if identity {
            None
        } else {
            let c = omega.clone().cholesky().ok_or_else(|| Error::NotPd {
                min_eigenvalue: crate::matrix::eigen_range(omega).0,
            })?;
            Some(c.l())
        };
        let bandwidth = (0..p)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .filter(|&(i, j)| omega[(i, j)] != 0.0)
            .map(|(i, j)| i - j)
            .max()
            .unwrap_or(0);
        Ok(Self { p, chol, bandwidth })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// `n x p` matrix of independent rows.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let p = self.p;
        let mut z = DMatrix::zeros(n, p);
        let mut row = vec![0.0; p];
        for i in 0..n {
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            if let Some(l) = &self.chol {
                for k in (0..p).rev() {
                    let upper = (k + self.bandwidth).min(p - 1);
                    let mut s = row[k];
                    for m in k + 1..=upper {
                        s -= l[(m, k)] * row[m];
                    }
                    row[k] = s / l[(k, k)];
                }
            }
            for (k, v) in row.iter().enumerate() {
                z[(i, k)] = *v;
            }
        }
        z
    }

    /// `Omega^{-1}`.
    pub fn covariance(&self) -> DMatrix<f64> {
        match &self.chol {
            None => DMatrix::identity(self.p, self.p),
            Some(l) => {
                let omega = l * l.transpose();
                let inv = omega.cholesky().expect("factor exists").inverse();
                crate::matrix::symmetrize(&inv)
            }
        }
    }
}

/// Cutoffs `alpha_j = -1 + 2(j-1)/(p-1)`, evenly spaced on `[-1, 1]`.
pub fn binary_cutoffs(p: usize) -> Vec<f64> {
    if p == 1 {
        return vec![0.0];
    }
    (0..p)
        .map(|j| -1.0 + 2.0 * j as f64 / (p - 1) as f64)
        .collect()
}

/// Thresholded Gaussian design `X_j = 1{Z_j >= alpha_j}`.
#[derive(Debug, Clone)]
pub struct BinaryDesign {
    latent: BandedGaussian,
    cutoffs: Vec<f64>,
    independent: bool,
}

impl BinaryDesign {
    pub fn new(omega: &DMatrix<f64>) -> Result<Self> {
        let latent = BandedGaussian::new(omega)?;
        let independent = latent.chol.is_none();
        Ok(Self {
            cutoffs: binary_cutoffs(latent.dim()),
            latent,
            independent,
        })
    }

    pub fn cutoffs(&self) -> &[f64] {
        &self.cutoffs
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let mut z = self.latent.sample(n, rng);
        for (j, mut col) in z.column_iter_mut().enumerate() {
            let a = self.cutoffs[j];
            col.apply(|v| *v = if *v >= a { 1.0 } else { 0.0 });
        }
        z
    }

    /// Exact moments when the latent coordinates are independent:
    /// `mu_j = 1 - Phi(alpha_j)` and `Sigma = diag(mu_j (1 - mu_j))`.
    pub fn analytic_moments(&self) -> Option<CovarianceSpec> {
        if !self.independent {
            return None;
        }
        let mu = DVector::from_iterator(
            self.cutoffs.len(),
            self.cutoffs.iter().map(|a| normal_sf(*a)),
        );
        let sigma = DMatrix::from_diagonal(&mu.map(|m| m * (1.0 - m)));
        CovarianceSpec::new(mu, sigma, MomentOrigin::Analytic).ok()
    }
}

/// Sample moments of `size` fresh rows from `draw`, accumulated in blocks.
pub fn train_moments<F>(p: usize, size: usize, mut draw: F) -> Result<CovarianceSpec>
where
    F: FnMut(usize) -> DMatrix<f64>,
{
    let mut acc = MomentAccumulator::new(p);
    let mut left = size;
    while left > 0 {
        let m = left.min(TRAIN_BLOCK);
        acc.push_rows(&draw(m));
        left -= m;
    }
    acc.finish()
}

/// Binary design plus its moments: analytic when `omega` is the identity,
/// otherwise estimated from `train_size` fresh rows drawn from `rng`.
pub fn gen_binary_covariates<R: Rng + ?Sized>(
    n: usize,
    omega: &DMatrix<f64>,
    train_size: usize,
    rng: &mut R,
) -> Result<(DataMatrix, CovarianceSpec)> {
    let design = BinaryDesign::new(omega)?;
    let x = DataMatrix::new(design.sample(n, rng))?;
    let cov = match design.analytic_moments() {
        Some(c) => c,
        None => train_moments(omega.nrows(), train_size, |m| design.sample(m, rng))?,
    };
    Ok((x, cov))
}

/// I.i.d. unit-variance entries (the binary law is not i.i.d. and is
/// rejected here).
pub fn iid_matrix<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    law: CovariateLaw,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    match law {
        CovariateLaw::Gaussian => Ok(DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))),
        CovariateLaw::Rademacher => Ok(DMatrix::from_fn(n, p, |_, _| {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        })),
        CovariateLaw::StudentT { dof } => {
            if !(dof >= 3.0) {
                return Err(Error::BadDof(dof));
            }
            let t = StudentT::new(dof).map_err(|_| Error::BadDof(dof))?;
            let scale = ((dof - 2.0) / dof).sqrt();
            Ok(DMatrix::from_fn(n, p, |_, _| scale * t.sample(rng)))
        }
        CovariateLaw::BinaryThreshold => Err(Error::InvalidConfig(
            "binary_threshold covariates are not i.i.d.".into(),
        )),
    }
}

/// I.i.d. covariates with analytic moments `mu = 0`, `Sigma = I`.
pub fn gen_iid_covariates<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    law: CovariateLaw,
    rng: &mut R,
) -> Result<(DataMatrix, CovarianceSpec)> {
    let x = DataMatrix::new(iid_matrix(n, p, law, rng)?)?;
    let cov = CovarianceSpec::new(
        DVector::zeros(p),
        DMatrix::identity(p, p),
        MomentOrigin::Analytic,
    )?;
    Ok((x, cov))
}

/// `k` positions uniformly without replacement, uniform signs, fixed magnitude.
pub fn gen_beta<R: Rng + ?Sized>(
    p: usize,
    k: usize,
    magnitude: f64,
    rng: &mut R,
) -> Result<GroundTruth> {
    if k > p {
        return Err(Error::KTooLarge { k, p });
    }
    let mut beta = DVector::zeros(p);
    for j in sample(rng, p, k).into_iter() {
        beta[j] = if rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        };
    }
    Ok(GroundTruth::from_beta(beta))
}

/// Noise-free part of the response for a linear predictor value.
pub fn response_mean(model: ResponseModel, eta: f64) -> f64 {
    match model {
        ResponseModel::Linear => eta,
        ResponseModel::TanhNonlinear => 5.0 * eta.abs().sqrt() * eta.tanh(),
        ResponseModel::Null => 0.0,
    }
}

pub fn gen_response<R: Rng + ?Sized>(
    x: &DataMatrix,
    truth: &GroundTruth,
    model: ResponseModel,
    rng: &mut R,
) -> Result<ResponseVector> {
    let n = x.rows();
    let eta = match model {
        ResponseModel::Null => DVector::zeros(n),
        _ => {
            let beta = truth.beta().ok_or(Error::MissingBeta)?;
            if beta.len() != x.cols() {
                return Err(Error::DimensionMismatch {
                    context: "coefficient vector",
                    expected: x.cols(),
                    found: beta.len(),
                });
            }
            x.values() * beta
        }
    };
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = rng.sample(StandardNormal);
        response_mean(model, eta[i]) + e
    });
    ResponseVector::new(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn precision_examples() {
        assert_eq!(
            gen_banded_precision(4, 0.0).unwrap(),
            DMatrix::identity(4, 4)
        );
        let o = gen_banded_precision(3, 0.3).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.09, 0.3, 1.0, 0.3, 0.09, 0.3, 1.0]);
        assert!((o - want).amax() < 1e-15);
        let o = gen_banded_precision(12, 0.7).unwrap();
        assert_eq!(o[(0, 6)], 0.0);
        assert_eq!(o[(11, 5)], 0.0);
        assert!(o[(0, 5)] > 0.0);
        assert!(gen_banded_precision(5, 1.0).is_err());
        assert!(gen_banded_precision(5, -0.1).is_err());
    }

    #[test]
    fn banded_sampler_matches_inverse_precision() {
        let omega = gen_banded_precision(8, 0.5).unwrap();
        let g = BandedGaussian::new(&omega).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = g.sample(200_000, &mut rng);
        let n = z.nrows() as f64;
        let emp = z.transpose() * &z / n;
        let target = omega.clone().try_inverse().unwrap();
        // entrywise Monte-Carlo standard error of a product mean
        for i in 0..8 {
            for j in 0..8 {
                let se = ((target[(i, i)] * target[(j, j)] + target[(i, j)].powi(2)) / n).sqrt();
                assert!((emp[(i, j)] - target[(i, j)]).abs() < 4.0 * se, "({i},{j})");
            }
        }
        assert!((g.covariance() - target).amax() < 1e-12);
    }

    #[test]
    fn binary_cutoffs_and_moments() {
        assert_eq!(binary_cutoffs(3), vec![-1.0, 0.0, 1.0]);
        let design = BinaryDesign::new(&DMatrix::identity(3, 3)).unwrap();
        let cov = design.analytic_moments().unwrap();
        let want = [0.841_344_746_068_542_9, 0.5, 0.158_655_253_931_457_05];
        for j in 0..3 {
            assert!((cov.mean()[j] - want[j]).abs() < 1e-12);
        }
        assert!(cov.is_diagonal());
        let corr = BinaryDesign::new(&gen_banded_precision(3, 0.3).unwrap()).unwrap();
        assert!(corr.analytic_moments().is_none());
    }

    #[test]
    fn binary_entries_and_frequencies() {
        let design = BinaryDesign::new(&DMatrix::identity(5, 5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = design.sample(20_000, &mut rng);
        assert!(x.iter().all(|v| *v == 0.0 || *v == 1.0));
        let mu = design.analytic_moments().unwrap();
        for j in 0..5 {
            let m = mu.mean()[j];
            let freq = x.column(j).sum() / 20_000.0;
            assert!((freq - m).abs() < 4.0 * (m * (1.0 - m) / 20_000.0).sqrt());
        }
    }

    #[test]
    fn trained_moments_for_correlated_binary() {
        let omega = gen_banded_precision(6, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, cov) = gen_binary_covariates(10, &omega, 20_000, &mut rng).unwrap();
        assert_eq!((x.rows(), x.cols()), (10, 6));
        assert_eq!(cov.source(), MomentOrigin::Estimated { train_size: 20_000 });
        assert!(!cov.is_diagonal());
    }

    #[test]
    fn iid_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = iid_matrix(1000, 20, CovariateLaw::Rademacher, &mut rng).unwrap();
        assert!(r.iter().all(|v| v.abs() == 1.0));
        let var = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
        assert_eq!(var, 1.0);

        let t = iid_matrix(10_000, 100, CovariateLaw::StudentT { dof: 3.0 }, &mut rng).unwrap();
        let m = t.len() as f64;
        let mean = t.sum() / m;
        let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let m4 = t.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / m;
        let se = ((m4 - var * var) / m).sqrt();
        assert!((var - 1.0).abs() < 4.0 * se, "var {var} se {se}");

        assert_eq!(
            iid_matrix(2, 2, CovariateLaw::StudentT { dof: 2.5 }, &mut rng).unwrap_err(),
            Error::BadDof(2.5)
        );
    }

    #[test]
    fn gaussian_iid_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, cov) = gen_iid_covariates(100_000, 10, CovariateLaw::Gaussian, &mut rng).unwrap();
        assert_eq!(cov.source(), MomentOrigin::Analytic);
        let n = x.rows() as f64;
        let emp = x.values().transpose() * x.values() / n;
        for i in 0..10 {
            for j in 0..10 {
                let target = if i == j { 1.0 } else { 0.0 };
                let se = ((1.0 + target * target) / n).sqrt();
                assert!((emp[(i, j)] - target).abs() < 4.0 * se);
            }
        }
    }

    #[test]
    fn beta_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = gen_beta(100, 40, 3.0, &mut rng).unwrap();
        let b = t.beta().unwrap();
        assert_eq!(t.h1().len(), 40);
        assert!(b.iter().all(|v| *v == 0.0 || v.abs() == 3.0));
        assert_eq!(b.iter().filter(|v| **v != 0.0).count(), 40);
        assert!(gen_beta(10, 0, 3.0, &mut rng).unwrap().h1().is_empty());
        assert_eq!(gen_beta(10, 10, 3.0, &mut rng).unwrap().h1().len(), 10);
        assert_eq!(
            gen_beta(10, 11, 3.0, &mut rng).unwrap_err(),
            Error::KTooLarge { k: 11, p: 10 }
        );
    }

    #[test]
    fn response_formulas() {
        assert_eq!(response_mean(ResponseModel::TanhNonlinear, 0.0), 0.0);
        let v = response_mean(ResponseModel::TanhNonlinear, 4.0);
        assert!((v - 10.0 * 4f64.tanh()).abs() < 1e-14);
        assert!((v - 9.993_292_997_390_67).abs() < 1e-12);

        let x = DataMatrix::new(DMatrix::from_element(4, 2, 1.0)).unwrap();
        let zero = GroundTruth::from_beta(DVector::zeros(2));
        let a = gen_response(
            &x,
            &zero,
            ResponseModel::Linear,
            &mut ChaCha8Rng::seed_from_u64(7),
        )
        .unwrap();
        let b = gen_response(
            &x,
            &zero,
            ResponseModel::Null,
            &mut ChaCha8Rng::seed_from_u64(7),
        )
        .unwrap();
        assert_eq!(a, b);
        let no_beta = GroundTruth::new(2, vec![], None).unwrap();
        assert_eq!(
            gen_response(
                &x,
                &no_beta,
                ResponseModel::Linear,
                &mut ChaCha8Rng::seed_from_u64(7)
            )
            .unwrap_err(),
            Error::MissingBeta
        );
    }
}
