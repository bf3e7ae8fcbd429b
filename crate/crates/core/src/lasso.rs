//! Cyclic coordinate descent for
//! `(2n)^{-1} ||y - Z b||^2 + lambda ||b||_1`.
//!
//! The solver works on the Gram form `G = Z'Z/n`, `g = Z'y/n`, which makes the
//! `2p` nodewise regressions of the debiased Lasso share a single `G`.
//! Between full sweeps it iterates on the current support only, keeping the
//! partial residual correlations `c = g - G b` exact on that support.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoOptions {
    /// Maximum KKT violation accepted at return.
    pub kkt_tol: f64,
    /// Sweeps stop once no coefficient moves by more than this.
    pub coef_tol: f64,
    pub max_sweeps: usize,
    /// Record the objective after every sweep.
    #[serde(default)]
    pub trace: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            coef_tol: 1e-7,
            max_sweeps: 100_000,
            trace: false,
        }
    }
}

impl LassoOptions {
    /// Options for a KKT tolerance `tol`; coefficient changes are tracked ten
    /// times tighter.
    pub fn with_tol(tol: f64, max_sweeps: usize) -> Self {
        Self {
            kkt_tol: tol,
            coef_tol: tol * 0.1,
            max_sweeps,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub beta: DVector<f64>,
    pub lambda: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective after each sweep; empty unless tracing was requested.
    pub objective_trace: Vec<f64>,
}

impl LassoFit {
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.beta
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, b)| *b != 0.0)
    }
}

/// Lasso problem in Gram form.
///
/// With `exclude = Some(j)`, coordinate `j` is pinned at zero; this is the
/// nodewise regression of column `j` on all other columns when `xty` is
/// `G[:, j]` and `yy` is `G[j, j]`.
#[derive(Debug, Clone, Copy)]
pub struct GramProblem<'a> {
    pub gram: &'a DMatrix<f64>,
    pub xty: &'a DVector<f64>,
    pub yy: f64,
    pub exclude: Option<usize>,
}

/// Fits the Lasso on a raw design. Fails with `NoConvergence` when the sweep
/// budget runs out.
pub fn lasso_cd(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<LassoFit> {
    let opts = LassoOptions::with_tol(tol, max_sweeps);
    let fit = lasso_fit(z, y, lambda, &opts)?;
    if !fit.converged {
        return Err(Error::NoConvergence {
            sweeps: fit.sweeps,
            kkt_residual: fit.kkt_residual,
        });
    }
    Ok(fit)
}

/// Like [`lasso_cd`] but returns non-converged fits flagged instead of failing.
pub fn lasso_fit(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    opts: &LassoOptions,
) -> Result<LassoFit> {
    let n = z.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            context: "lasso response length",
            expected: n,
            found: y.len(),
        });
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    let nf = n as f64;
    let gram = z.tr_mul(z) / nf;
    let xty = z.tr_mul(y) / nf;
    let yy = y.norm_squared() / nf;
    let mut fit = lasso_gram(
        &GramProblem {
            gram: &gram,
            xty: &xty,
            yy,
            exclude: None,
        },
        lambda,
        opts,
    );
    // report the objective from the residual rather than the Gram identity
    let resid = y - z * &fit.beta;
    fit.objective = resid.norm_squared() / (2.0 * nf) + lambda * fit.beta.lp_norm(1);
    Ok(fit)
}

/// Coordinate descent on a Gram-form problem.
pub fn lasso_gram(problem: &GramProblem<'_>, lambda: f64, opts: &LassoOptions) -> LassoFit {
    lasso_gram_from(problem, lambda, opts, DVector::zeros(problem.xty.len()))
}

/// Coordinate descent started from `start` (a warm start along a path).
pub fn lasso_gram_from(
    problem: &GramProblem<'_>,
    lambda: f64,
    opts: &LassoOptions,
    start: DVector<f64>,
) -> LassoFit {
    let g = problem.gram;
    let xty = problem.xty;
    let skip = problem.exclude;
    let m = xty.len();

    let mut beta = start;
    if let Some(j) = skip {
        beta[j] = 0.0;
    }
    let mut c = residual_correlations(g, xty, &beta);
    let mut sweeps = 0usize;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut kkt = kkt_residual(&beta, &c, lambda, skip);

    if kkt <= opts.kkt_tol {
        converged = true;
    }

    while !converged && sweeps < opts.max_sweeps {
        // full sweep
        let mut max_change = 0.0f64;
        for k in 0..m {
            if Some(k) == skip {
                continue;
            }
            let delta = coordinate_step(g, &mut beta, &c, k, lambda);
            if delta != 0.0 {
                c.axpy(-delta, &g.column(k), 1.0);
                max_change = max_change.max(delta.abs());
            }
        }
        sweeps += 1;
        if opts.trace {
            trace.push(gram_objective(problem.yy, xty, &beta, &c, lambda));
        }
        if max_change < opts.coef_tol {
            c = residual_correlations(g, xty, &beta);
            kkt = kkt_residual(&beta, &c, lambda, skip);
            if kkt <= opts.kkt_tol {
                converged = true;
                break;
            }
            continue;
        }

        // support iterations, with c maintained on the support only
        let active: Vec<usize> = (0..m).filter(|&k| beta[k] != 0.0).collect();
        while sweeps < opts.max_sweeps {
            let mut max_change = 0.0f64;
            for &k in &active {
                let delta = coordinate_step(g, &mut beta, &c, k, lambda);
                if delta != 0.0 {
                    let col = g.column(k);
                    for &a in &active {
                        c[a] -= delta * col[a];
                    }
                    max_change = max_change.max(delta.abs());
                }
            }
            sweeps += 1;
            if opts.trace {
                trace.push(gram_objective(problem.yy, xty, &beta, &c, lambda));
            }
            if max_change < opts.coef_tol {
                break;
            }
        }
        c = residual_correlations(g, xty, &beta);
    }

    if !converged {
        c = residual_correlations(g, xty, &beta);
        kkt = kkt_residual(&beta, &c, lambda, skip);
        converged = kkt <= opts.kkt_tol;
    }

    LassoFit {
        objective: gram_objective(problem.yy, xty, &beta, &c, lambda),
        beta,
        lambda,
        kkt_residual: kkt,
        sweeps,
        converged,
        objective_trace: trace,
    }
}

/// Exact minimization along coordinate `k`; returns the change in `beta[k]`.
#[inline]
fn coordinate_step(
    g: &DMatrix<f64>,
    beta: &mut DVector<f64>,
    c: &DVector<f64>,
    k: usize,
    lambda: f64,
) -> f64 {
    let gkk = g[(k, k)];
    let old = beta[k];
    let new = if gkk > 0.0 {
        soft_threshold(c[k] + gkk * old, lambda) / gkk
    } else {
        0.0
    };
    beta[k] = new;
    new - old
}

pub fn soft_threshold(u: f64, lambda: f64) -> f64 {
    if u > lambda {
        u - lambda
    } else if u < -lambda {
        u + lambda
    } else {
        0.0
    }
}

/// `c = g - G b`, summing only over the support of `b`.
fn residual_correlations(
    g: &DMatrix<f64>,
    xty: &DVector<f64>,
    beta: &DVector<f64>,
) -> DVector<f64> {
    let mut c = xty.clone();
    for (k, b) in beta.iter().enumerate() {
        if *b != 0.0 {
            c.axpy(-b, &g.column(k), 1.0);
        }
    }
    c
}

fn kkt_residual(beta: &DVector<f64>, c: &DVector<f64>, lambda: f64, skip: Option<usize>) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..beta.len() {
        if Some(k) == skip {
            continue;
        }
        let v = if beta[k] > 0.0 {
            (c[k] - lambda).abs()
        } else if beta[k] < 0.0 {
            (c[k] + lambda).abs()
        } else {
            (c[k].abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// `yy/2 - b'g + b'Gb/2 + lambda |b|_1`, using `b'Gb = b'(g - c)`.
fn gram_objective(
    yy: f64,
    xty: &DVector<f64>,
    beta: &DVector<f64>,
    c: &DVector<f64>,
    lambda: f64,
) -> f64 {
    let mut quad = 0.0;
    let mut l1 = 0.0;
    for (k, b) in beta.iter().enumerate() {
        if *b != 0.0 {
            quad += b * (xty[k] + c[k]);
            l1 += b.abs();
        }
    }
    0.5 * yy - 0.5 * quad + lambda * l1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn large_lambda_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = gaussian(30, 8, &mut rng);
        let y = DVector::from_fn(30, |_, _| rng.sample(StandardNormal));
        let lam_max = (z.tr_mul(&y) / 30.0).amax();
        let fit = lasso_cd(&z, &y, lam_max, 1e-8, 1000).unwrap();
        assert!(fit.beta.iter().all(|b| *b == 0.0));
        let fit = lasso_cd(&z, &y, lam_max * 0.9, 1e-8, 1000).unwrap();
        assert!(fit.beta.iter().any(|b| *b != 0.0));
    }

    #[test]
    fn orthogonal_design_soft_thresholds() {
        // columns of a scaled Hadamard-like orthogonal design: Z'Z/n = I
        let n = 8;
        let h = DMatrix::from_fn(n, 4, |i, j| if (i >> j) & 1 == 0 { 1.0 } else { -1.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * 2.0);
        let g = h.tr_mul(&h) / n as f64;
        assert!((g - DMatrix::identity(4, 4)).amax() < 1e-15);
        let lambda = 0.3;
        let fit = lasso_cd(&h, &y, lambda, 1e-12, 1000).unwrap();
        for j in 0..4 {
            let u = h.column(j).dot(&y) / n as f64;
            assert!((fit.beta[j] - soft_threshold(u, lambda)).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_lambda_matches_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = gaussian(60, 6, &mut rng);
        let y = DVector::from_fn(60, |_, _| rng.sample(StandardNormal));
        let ols = (z.tr_mul(&z)).cholesky().unwrap().solve(&z.tr_mul(&y));
        let fit = lasso_cd(&z, &y, 0.0, 1e-12, 100_000).unwrap();
        assert!((fit.beta - ols).amax() < 1e-8);
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let z = gaussian(40, 90, &mut rng);
        let y = DVector::from_fn(40, |_, _| rng.sample(StandardNormal));
        let opts = LassoOptions {
            trace: true,
            ..LassoOptions::default()
        };
        let fit = lasso_fit(&z, &y, 0.05, &opts).unwrap();
        assert!(fit.converged);
        for w in fit.objective_trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0),
                "{} -> {}",
                w[0],
                w[1]
            );
        }
        let zero_obj = y.norm_squared() / 80.0;
        assert!(fit.objective <= zero_obj);
    }

    #[test]
    fn sweep_budget_exhaustion_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let z = gaussian(20, 50, &mut rng);
        let y = DVector::from_fn(20, |_, _| rng.sample(StandardNormal));
        let err = lasso_cd(&z, &y, 1e-3, 1e-12, 1).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { sweeps: 1, .. }));
    }

    #[test]
    fn warm_start_reaches_the_same_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let z = DMatrix::from_fn(80, 12, |_, _| rng.sample(StandardNormal));
        let y = DVector::from_fn(80, |_, _| rng.sample::<f64, _>(StandardNormal));
        let gram = z.tr_mul(&z) / 80.0;
        let xty = z.tr_mul(&y) / 80.0;
        let problem = GramProblem {
            gram: &gram,
            xty: &xty,
            yy: y.norm_squared() / 80.0,
            exclude: None,
        };
        let opts = LassoOptions::with_tol(1e-12, 100_000);
        let cold = lasso_gram(&problem, 0.05, &opts);
        let start = lasso_gram(&problem, 0.2, &opts).beta;
        let warm = lasso_gram_from(&problem, 0.05, &opts, start);
        assert!(cold.converged && warm.converged);
        assert!((cold.beta - warm.beta).amax() < 1e-9);
    }

    #[test]
    fn excluded_coordinate_stays_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let z = gaussian(50, 5, &mut rng);
        let g = z.tr_mul(&z) / 50.0;
        let xty = g.column(2).into_owned();
        let fit = lasso_gram(
            &GramProblem {
                gram: &g,
                xty: &xty,
                yy: g[(2, 2)],
                exclude: Some(2),
            },
            0.01,
            &LassoOptions::default(),
        );
        assert!(fit.converged);
        assert_eq!(fit.beta[2], 0.0);
    }
}
