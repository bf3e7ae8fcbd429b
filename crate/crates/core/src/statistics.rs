//! Knockoff statistics `W_j` contrasting each feature with its knockoff.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{lasso_gram, lasso_gram_from, GramProblem, LassoOptions};
use crate::matrix::{check_rows, DataMatrix, ResponseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatKind {
    #[serde(rename = "mc", alias = "MarginalCorr")]
    MarginalCorr,
    #[serde(rename = "ols", alias = "OlsDiff")]
    OlsDiff,
    #[serde(rename = "dl", alias = "DebiasedLassoDiff")]
    DebiasedLassoDiff,
    #[serde(rename = "dc", alias = "DistanceCorr")]
    DistanceCorr,
}

impl StatKind {
    pub const ALL: [StatKind; 4] = [
        StatKind::MarginalCorr,
        StatKind::OlsDiff,
        StatKind::DebiasedLassoDiff,
        StatKind::DistanceCorr,
    ];

    pub fn short_name(&self) -> &'static str {
        match self {
            StatKind::MarginalCorr => "mc",
            StatKind::OlsDiff => "ols",
            StatKind::DebiasedLassoDiff => "dl",
            StatKind::DistanceCorr => "dc",
        }
    }
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for StatKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mc" | "marginalcorr" => Ok(StatKind::MarginalCorr),
            "ols" | "olsdiff" => Ok(StatKind::OlsDiff),
            "dl" | "debiasedlassodiff" => Ok(StatKind::DebiasedLassoDiff),
            "dc" | "distancecorr" => Ok(StatKind::DistanceCorr),
            other => Err(Error::InvalidConfig(format!("unknown statistic '{other}'"))),
        }
    }
}

/// Lasso diagnostics gathered while computing debiased-Lasso statistics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverMeta {
    pub fits: usize,
    pub total_sweeps: usize,
    pub max_kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WStats {
    pub w: DVector<f64>,
    pub kind: StatKind,
    pub meta: Option<SolverMeta>,
}

impl WStats {
    pub fn new(w: DVector<f64>, kind: StatKind) -> Result<Self> {
        if let Some(i) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry { row: i + 1, col: 1 });
        }
        Ok(Self {
            w,
            kind,
            meta: None,
        })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

fn check_pair(x: &DataMatrix, xhat: &DataMatrix, y: &ResponseVector) -> Result<()> {
    if xhat.rows() != x.rows() || xhat.cols() != x.cols() {
        return Err(Error::DimensionMismatch {
            context: "knockoff matrix vs design",
            expected: x.cols(),
            found: xhat.cols(),
        });
    }
    check_rows(x, y)
}

/// `W_j = |X_j'Y| / ||Y|| - |Xhat_j'Y| / ||Y||` on raw columns.
pub fn marginal_corr_stats(
    x: &DataMatrix,
    xhat: &DataMatrix,
    y: &ResponseVector,
) -> Result<WStats> {
    check_pair(x, xhat, y)?;
    let y = y.values();
    let norm = y.norm();
    if norm == 0.0 {
        return Err(Error::ZeroResponse);
    }
    let w = DVector::from_iterator(
        x.cols(),
        (0..x.cols()).map(|j| {
            x.values().column(j).dot(y).abs() / norm - xhat.values().column(j).dot(y).abs() / norm
        }),
    );
    WStats::new(w, StatKind::MarginalCorr)
}

/// `[X, Xhat]` as one `n x 2p` matrix.
pub fn stacked_design(x: &DataMatrix, xhat: &DataMatrix) -> DMatrix<f64> {
    let (n, p) = (x.rows(), x.cols());
    let mut z = DMatrix::zeros(n, 2 * p);
    z.columns_mut(0, p).copy_from(x.values());
    z.columns_mut(p, p).copy_from(xhat.values());
    z
}

/// Condition-number ceiling for the OLS Gram matrix.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// OLS coefficient differences with the `sqrt(n)` scaling:
/// `beta = n^{-1/2} (Z'Z/n)^{-1} Z'Y`, `W_j = |beta_j| - |beta_{j+p}|`.
pub fn ols_diff_stats(x: &DataMatrix, xhat: &DataMatrix, y: &ResponseVector) -> Result<WStats> {
    check_pair(x, xhat, y)?;
    let (n, p) = (x.rows(), x.cols());
    if n <= 2 * p {
        return Err(Error::Underdetermined { n, p });
    }
    let z = stacked_design(x, xhat);
    let nf = n as f64;
    let gram = z.tr_mul(&z) / nf;
    let eig = SymmetricEigen::new(gram.clone());
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition < MAX_GRAM_CONDITION) {
        return Err(Error::SingularGram { condition });
    }
    let rhs = z.tr_mul(y.values()) / nf;
    let chol = gram.cholesky().ok_or(Error::SingularGram { condition })?;
    let beta = chol.solve(&rhs) * nf.sqrt();
    let w = DVector::from_fn(p, |j, _| beta[j].abs() - beta[j + p].abs());
    WStats::new(w, StatKind::OlsDiff)
}

/// Regularization levels `lambda_0 = c sd(Y) sqrt(log(2p)/n)` and
/// `lambda_j = c sd(Z_j) sqrt(log(2p)/n)` for the stacked design.
pub fn default_lambdas(z: &DMatrix<f64>, y: &DVector<f64>, c: f64) -> (f64, Vec<f64>) {
    let n = z.nrows() as f64;
    let rate = c * ((z.ncols() as f64).ln() / n).sqrt();
    let lambda0 = rate * std_dev(y.iter().copied());
    let nodes = z
        .column_iter()
        .map(|col| rate * std_dev(col.iter().copied()))
        .collect();
    (lambda0, nodes)
}

/// Population-style standard deviation (divisor `n`).
fn std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (count, sum) = values
        .clone()
        .fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
    if count == 0 {
        return 0.0;
    }
    let mean = sum / count as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (ss / count as f64).sqrt()
}

/// How the default `lambda_0` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda0Rule {
    /// `C sd(Y) sqrt(log(2p)/n)`.
    ResponseSd,
    /// `C sigma sqrt(log(2p)/n)` with `sigma` from the scaled-Lasso fixed point.
    ScaledLasso,
    /// Minimizer of `folds`-fold cross-validated prediction error over a
    /// geometric grid below `max_j |Z_j'Y|/n`.
    CrossValidated { folds: usize },
}

impl Default for Lambda0Rule {
    fn default() -> Self {
        Lambda0Rule::CrossValidated { folds: 5 }
    }
}

/// How the default nodewise penalties `lambda_j` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeLambdaRule {
    /// `C sd(Z_j) sqrt(log(2p)/n)`.
    Rate,
    /// `kappa sd(Z_j)`, where `kappa` averages `lambda_cv / sd(Z_k)` over the
    /// cross-validated nodewise regressions of `pairs` feature/knockoff
    /// column pairs spread evenly over the features.
    CrossValidated { folds: usize, pairs: usize },
}

impl Default for NodeLambdaRule {
    fn default() -> Self {
        NodeLambdaRule::CrossValidated { folds: 5, pairs: 5 }
    }
}

/// Configuration of the debiased-Lasso statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebiasedLassoConfig {
    /// Multiplier `C` in the default regularization rate.
    pub c: f64,
    pub lambda0_rule: Lambda0Rule,
    pub node_rule: NodeLambdaRule,
    /// Overrides `lambda_0` when set.
    #[serde(default)]
    pub lambda0: Option<f64>,
    /// Overrides every nodewise `lambda_j` when set (length `2p`).
    #[serde(default)]
    pub lambda_node: Option<Vec<f64>>,
    pub lasso: LassoOptions,
}

impl Default for DebiasedLassoConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            lambda0_rule: Lambda0Rule::default(),
            node_rule: NodeLambdaRule::default(),
            lambda0: None,
            lambda_node: None,
            lasso: LassoOptions::default(),
        }
    }
}

/// Debiased-Lasso statistics with explicit regularization levels.
pub fn debiased_lasso_stats(
    x: &DataMatrix,
    xhat: &DataMatrix,
    y: &ResponseVector,
    lambda0: f64,
    lambda_node: &[f64],
    tol: f64,
    max_sweeps: usize,
) -> Result<WStats> {
    let opts = LassoOptions::with_tol(tol, max_sweeps);
    debiased_lasso_with(x, xhat, y, lambda0, lambda_node, &opts)
}

/// Debiased-Lasso statistics using `cfg` (default regularization unless
/// overridden).
pub fn debiased_lasso_stats_cfg(
    x: &DataMatrix,
    xhat: &DataMatrix,
    y: &ResponseVector,
    cfg: &DebiasedLassoConfig,
) -> Result<WStats> {
    check_pair(x, xhat, y)?;
    let z = stacked_design(x, xhat);
    let (l0, nodes) = default_lambdas(&z, y.values(), cfg.c);
    // one set of fold Gram matrices serves both searches when they agree
    let cv0 = match (cfg.lambda0, cfg.lambda0_rule) {
        (None, Lambda0Rule::CrossValidated { folds }) => Some(CvFolds::new(&z, folds)?),
        _ => None,
    };
    let cv_node = match (&cfg.lambda_node, cfg.node_rule) {
        (None, NodeLambdaRule::CrossValidated { folds, .. })
            if cv0.as_ref().map(|c| c.folds.len()) != Some(folds) =>
        {
            Some(CvFolds::new(&z, folds)?)
        }
        _ => None,
    };
    let lambda0 = match (cfg.lambda0, cfg.lambda0_rule) {
        (Some(l), _) => l,
        (None, Lambda0Rule::ResponseSd) => l0,
        (None, Lambda0Rule::ScaledLasso) => {
            let rate = cfg.c * ((z.ncols() as f64).ln() / z.nrows() as f64).sqrt();
            rate * scaled_lasso_sigma(&z, y.values(), rate, &cfg.lasso)?
        }
        (None, Lambda0Rule::CrossValidated { .. }) => {
            cv0.as_ref()
                .expect("built above")
                .select(&z, y.values(), None, &cfg.lasso)?
        }
    };
    let nodes = match (&cfg.lambda_node, cfg.node_rule) {
        (Some(l), _) => l.clone(),
        (None, NodeLambdaRule::Rate) => nodes,
        (None, NodeLambdaRule::CrossValidated { pairs, .. }) => {
            let cv = cv_node.as_ref().or(cv0.as_ref()).expect("built above");
            node_lambdas_with(&z, cv, pairs, &cfg.lasso)?
        }
    };
    debiased_lasso_with(x, xhat, y, lambda0, &nodes, &cfg.lasso)
}

/// Iteration cap for the scaled-Lasso noise estimate.
const SCALED_LASSO_MAX_ITER: usize = 100;

/// Noise level `sigma` solving the scaled-Lasso fixed point
/// `sigma = ||Y - Z b(sigma * rate)|| / sqrt(n)`, iterated from `sd(Y)`.
pub fn scaled_lasso_sigma(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    rate: f64,
    opts: &LassoOptions,
) -> Result<f64> {
    let nf = z.nrows() as f64;
    let gram = z.tr_mul(z) / nf;
    let xty = z.tr_mul(y) / nf;
    let yy = y.norm_squared() / nf;
    let mut sigma = std_dev(y.iter().copied());
    for _ in 0..SCALED_LASSO_MAX_ITER {
        if sigma == 0.0 {
            break;
        }
        let fit = lasso_gram(
            &GramProblem {
                gram: &gram,
                xty: &xty,
                yy,
                exclude: None,
            },
            sigma * rate,
            opts,
        );
        if !fit.converged {
            return Err(Error::NoConvergence {
                sweeps: fit.sweeps,
                kkt_residual: fit.kkt_residual,
            });
        }
        let b = &fit.beta;
        let rss = (yy - 2.0 * b.dot(&xty) + b.dot(&(&gram * b))).max(0.0);
        let next = rss.sqrt();
        let done = (next - sigma).abs() <= 1e-6 * sigma;
        sigma = next;
        if done {
            break;
        }
    }
    Ok(sigma)
}

/// Grid size and depth of the cross-validation path.
const CV_GRID: usize = 50;
const CV_MIN_RATIO: f64 = 1e-2;
/// The path stops after this many consecutive grid points whose pooled
/// error exceeds the running minimum.
const CV_PATIENCE: usize = 5;

struct Fold {
    rows: Vec<usize>,
    zt: DMatrix<f64>,
    /// Training Gram matrix, normalized by the training size.
    gram: DMatrix<f64>,
    n_train: f64,
}

/// Row folds of a design with their training Gram matrices, shared by every
/// cross-validated penalty computed on that design. Rows go to folds by
/// index modulo the fold count.
pub struct CvFolds {
    n: usize,
    folds: Vec<Fold>,
}

impl CvFolds {
    pub fn new(z: &DMatrix<f64>, folds: usize) -> Result<Self> {
        let n = z.nrows();
        if folds < 2 || folds > n {
            return Err(Error::InvalidConfig(format!(
                "cannot split {n} rows into {folds} folds"
            )));
        }
        let full = z.tr_mul(z);
        let folds = (0..folds)
            .map(|f| {
                let rows: Vec<usize> = (f..n).step_by(folds).collect();
                let zt = z.select_rows(&rows);
                let n_train = (n - rows.len()) as f64;
                let gram = (&full - zt.tr_mul(&zt)) / n_train;
                Fold {
                    rows,
                    zt,
                    gram,
                    n_train,
                }
            })
            .collect();
        Ok(Self { n, folds })
    }

    /// Cross-validated penalty for regressing `y` on the columns of `z`,
    /// leaving out column `exclude` when given.
    pub fn select(
        &self,
        z: &DMatrix<f64>,
        y: &DVector<f64>,
        exclude: Option<usize>,
        opts: &LassoOptions,
    ) -> Result<f64> {
        let nf = self.n as f64;
        let full_xty = z.tr_mul(y);
        let lambda_max = full_xty
            .iter()
            .enumerate()
            .filter(|(k, _)| Some(*k) != exclude)
            .fold(0.0f64, |acc, (_, v)| acc.max(v.abs()))
            / nf;
        if lambda_max == 0.0 {
            return Ok(0.0);
        }
        let yy_full = y.norm_squared();
        let parts: Vec<(DVector<f64>, DVector<f64>, f64)> = self
            .folds
            .iter()
            .map(|f| {
                let yt = DVector::from_iterator(f.rows.len(), f.rows.iter().map(|&i| y[i]));
                let xty = (&full_xty - f.zt.tr_mul(&yt)) / f.n_train;
                let yy = (yy_full - yt.norm_squared()) / f.n_train;
                (yt, xty, yy)
            })
            .collect();
        let mut betas: Vec<DVector<f64>> = vec![DVector::zeros(z.ncols()); self.folds.len()];
        let mut best = (f64::INFINITY, lambda_max);
        let mut worse = 0;
        for k in 0..CV_GRID {
            let lambda = lambda_max * CV_MIN_RATIO.powf(k as f64 / (CV_GRID - 1) as f64);
            let mut err = 0.0;
            for (i, f) in self.folds.iter().enumerate() {
                let (yt, xty, yy) = &parts[i];
                let problem = GramProblem {
                    gram: &f.gram,
                    xty,
                    yy: *yy,
                    exclude,
                };
                let start = std::mem::replace(&mut betas[i], DVector::zeros(0));
                let fit = lasso_gram_from(&problem, lambda, opts, start);
                if !fit.converged {
                    return Err(Error::NoConvergence {
                        sweeps: fit.sweeps,
                        kkt_residual: fit.kkt_residual,
                    });
                }
                err += (yt - &f.zt * &fit.beta).norm_squared();
                betas[i] = fit.beta;
            }
            if err < best.0 {
                best = (err, lambda);
                worse = 0;
            } else {
                worse += 1;
                if worse >= CV_PATIENCE {
                    break;
                }
            }
        }
        Ok(best.1)
    }
}

/// Cross-validated Lasso penalty for `y` on `z`; each fold's path over a
/// geometric grid below `max_j |Z_j'Y|/n` is warm-started.
pub fn cv_lambda(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    folds: usize,
    opts: &LassoOptions,
) -> Result<f64> {
    CvFolds::new(z, folds)?.select(z, y, None, opts)
}

/// Nodewise penalties from cross-validation on a symmetric subset of nodes
/// (see [`NodeLambdaRule::CrossValidated`]).
pub fn cv_node_lambdas(
    z: &DMatrix<f64>,
    folds: usize,
    pairs: usize,
    opts: &LassoOptions,
) -> Result<Vec<f64>> {
    node_lambdas_with(z, &CvFolds::new(z, folds)?, pairs, opts)
}

fn node_lambdas_with(
    z: &DMatrix<f64>,
    cv: &CvFolds,
    pairs: usize,
    opts: &LassoOptions,
) -> Result<Vec<f64>> {
    let m = z.ncols();
    let p = m / 2;
    let sds: Vec<f64> = z
        .column_iter()
        .map(|c| std_dev(c.iter().copied()))
        .collect();
    let pairs = pairs.clamp(1, p.max(1));
    let mut ratios = Vec::with_capacity(2 * pairs);
    for k in 0..pairs {
        let j = k * p / pairs;
        for col in [j, j + p] {
            if sds[col] == 0.0 {
                continue;
            }
            let target = z.column(col).into_owned();
            ratios.push(cv.select(z, &target, Some(col), opts)? / sds[col]);
        }
    }
    if ratios.is_empty() {
        return Err(Error::DegenerateScore { column: 1 });
    }
    let kappa = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Ok(sds.iter().map(|s| kappa * s).collect())
}

struct NodeResult {
    column: usize,
    score_dot_resid: f64,
    score_dot_col: f64,
    sweeps: usize,
    kkt: f64,
    converged: bool,
}

fn debiased_lasso_with(
    x: &DataMatrix,
    xhat: &DataMatrix,
    y: &ResponseVector,
    lambda0: f64,
    lambda_node: &[f64],
    opts: &LassoOptions,
) -> Result<WStats> {
    check_pair(x, xhat, y)?;
    let (n, p) = (x.rows(), x.cols());
    let m = 2 * p;
    if lambda_node.len() != m {
        return Err(Error::DimensionMismatch {
            context: "nodewise regularization levels",
            expected: m,
            found: lambda_node.len(),
        });
    }
    let nf = n as f64;
    let z = stacked_design(x, xhat);
    let gram = z.tr_mul(&z) / nf;
    let y = y.values();
    let xty = z.tr_mul(y) / nf;

    let initial = lasso_gram(
        &GramProblem {
            gram: &gram,
            xty: &xty,
            yy: y.norm_squared() / nf,
            exclude: None,
        },
        lambda0,
        opts,
    );
    if !initial.converged {
        return Err(Error::NoConvergence {
            sweeps: initial.sweeps,
            kkt_residual: initial.kkt_residual,
        });
    }
    let resid = y - &z * &initial.beta;

    let node = |j: usize| -> NodeResult {
        let target = gram.column(j).into_owned();
        let fit = lasso_gram(
            &GramProblem {
                gram: &gram,
                xty: &target,
                yy: gram[(j, j)],
                exclude: Some(j),
            },
            lambda_node[j],
            opts,
        );
        let mut score = z.column(j).into_owned();
        for (k, g) in fit.nonzeros() {
            score.axpy(-g, &z.column(k), 1.0);
        }
        NodeResult {
            column: j,
            score_dot_resid: score.dot(&resid),
            score_dot_col: score.dot(&z.column(j)),
            sweeps: fit.sweeps,
            kkt: fit.kkt_residual,
            converged: fit.converged,
        }
    };

    #[cfg(feature = "parallel")]
    let nodes: Vec<NodeResult> = {
        use rayon::prelude::*;
        (0..m).into_par_iter().map(node).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let nodes: Vec<NodeResult> = (0..m).map(node).collect();

    let mut meta = SolverMeta {
        fits: 1 + m,
        total_sweeps: initial.sweeps,
        max_kkt_residual: initial.kkt_residual,
    };
    let mut debiased = DVector::zeros(m);
    for r in &nodes {
        if !r.converged {
            return Err(Error::NoConvergence {
                sweeps: r.sweeps,
                kkt_residual: r.kkt,
            });
        }
        meta.total_sweeps += r.sweeps;
        meta.max_kkt_residual = meta.max_kkt_residual.max(r.kkt);
        let j = r.column;
        let col_sq = z.column(j).norm_squared();
        if !(r.score_dot_col.abs() > 1e-10 * col_sq) {
            return Err(Error::DegenerateScore { column: j + 1 });
        }
        debiased[j] = initial.beta[j] + r.score_dot_resid / r.score_dot_col;
    }
    let root_n = nf.sqrt();
    let w = DVector::from_fn(p, |j, _| {
        root_n * debiased[j].abs() - root_n * debiased[j + p].abs()
    });
    let mut stats = WStats::new(w, StatKind::DebiasedLassoDiff)?;
    stats.meta = Some(meta);
    Ok(stats)
}

/// Distance correlation (V-statistic) of two samples.
///
/// Returns 0 when either sample has zero distance variance.
pub fn distance_correlation(x: &[f64], y: &[f64]) -> f64 {
    let by = CenteredDistances::new(y);
    by.dcor_with(x)
}

/// Pairwise distances of one sample plus their row means, reused across
/// many partner columns.
struct CenteredDistances {
    dist: Vec<f64>,
    row_mean: Vec<f64>,
    grand_mean: f64,
    dvar2: f64,
}

impl CenteredDistances {
    fn new(v: &[f64]) -> Self {
        let n = v.len();
        let mut dist = vec![0.0; n * n];
        for k in 0..n {
            for l in 0..n {
                dist[k * n + l] = (v[k] - v[l]).abs();
            }
        }
        let row_mean: Vec<f64> = (0..n)
            .map(|k| dist[k * n..(k + 1) * n].iter().sum::<f64>() / n as f64)
            .collect();
        let grand_mean = row_mean.iter().sum::<f64>() / n as f64;
        let mut s = Self {
            dist,
            row_mean,
            grand_mean,
            dvar2: 0.0,
        };
        s.dvar2 = s.dcov2_with(&s.dist, &s.row_mean.clone(), s.grand_mean);
        s
    }

    /// `mean(a b) - 2 mean_k(abar_k bbar_k) + abar bbar`, the expansion of
    /// the mean product of the double-centered matrices.
    fn dcov2_with(&self, other: &[f64], other_row: &[f64], other_grand: f64) -> f64 {
        let n = self.row_mean.len();
        let nf = n as f64;
        let cross: f64 = self.dist.iter().zip(other).map(|(a, b)| a * b).sum::<f64>() / (nf * nf);
        let rows: f64 = self
            .row_mean
            .iter()
            .zip(other_row)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / nf;
        cross - 2.0 * rows + self.grand_mean * other_grand
    }

    fn dcor_with(&self, x: &[f64]) -> f64 {
        let other = CenteredDistances::new(x);
        let dcov2 = self.dcov2_with(&other.dist, &other.row_mean, other.grand_mean);
        let denom = self.dvar2 * other.dvar2;
        if !(denom > 0.0) {
            return 0.0;
        }
        (dcov2.max(0.0) / denom.sqrt()).sqrt().min(1.0)
    }
}

/// `W_j = dCor(X_j, Y) - dCor(Xhat_j, Y)`.
pub fn distance_corr_stats(
    x: &DataMatrix,
    xhat: &DataMatrix,
    y: &ResponseVector,
) -> Result<WStats> {
    check_pair(x, xhat, y)?;
    if x.rows() < 2 {
        return Err(Error::DimensionMismatch {
            context: "distance correlation needs at least two rows",
            expected: 2,
            found: x.rows(),
        });
    }
    let yd = CenteredDistances::new(y.values().as_slice());
    let w = DVector::from_iterator(
        x.cols(),
        (0..x.cols()).map(|j| {
            let a = yd.dcor_with(x.values().column(j).as_slice());
            let b = yd.dcor_with(xhat.values().column(j).as_slice());
            a - b
        }),
    );
    WStats::new(w, StatKind::DistanceCorr)
}

/// Dispatches to the statistic of `kind` with default settings.
pub fn compute_stats(
    kind: StatKind,
    x: &DataMatrix,
    xhat: &DataMatrix,
    y: &ResponseVector,
    dl: &DebiasedLassoConfig,
) -> Result<WStats> {
    match kind {
        StatKind::MarginalCorr => marginal_corr_stats(x, xhat, y),
        StatKind::OlsDiff => ols_diff_stats(x, xhat, y),
        StatKind::DebiasedLassoDiff => debiased_lasso_stats_cfg(x, xhat, y, dl),
        StatKind::DistanceCorr => distance_corr_stats(x, xhat, y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_dm(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DataMatrix {
        DataMatrix::new(DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))).unwrap()
    }

    fn random_y(n: usize, rng: &mut ChaCha8Rng) -> ResponseVector {
        ResponseVector::new(DVector::from_fn(n, |_, _| rng.sample(StandardNormal))).unwrap()
    }

    #[test]
    fn marginal_identical_columns_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_dm(20, 4, &mut rng);
        let y = random_y(20, &mut rng);
        let w = marginal_corr_stats(&x, &x, &y).unwrap();
        assert!(w.w.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn marginal_hand_example() {
        let x = DataMatrix::from_row_slice(2, 1, &[1.0, 0.0]).unwrap();
        let xhat = DataMatrix::from_row_slice(2, 1, &[0.0, 1.0]).unwrap();
        let y = ResponseVector::from_vec(vec![1.0, 0.0]).unwrap();
        assert_eq!(marginal_corr_stats(&x, &xhat, &y).unwrap().w[0], 1.0);
    }

    #[test]
    fn marginal_is_scale_invariant_in_y() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = random_dm(30, 5, &mut rng);
            let xhat = random_dm(30, 5, &mut rng);
            let y = random_y(30, &mut rng);
            let base = marginal_corr_stats(&x, &xhat, &y).unwrap().w;
            for c in [-3.0, 0.5] {
                let yc = ResponseVector::new(y.values() * c).unwrap();
                let wc = marginal_corr_stats(&x, &xhat, &yc).unwrap().w;
                assert!((wc - &base).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn marginal_rejects_zero_response() {
        let x = DataMatrix::from_row_slice(2, 1, &[1.0, 0.0]).unwrap();
        let y = ResponseVector::from_vec(vec![0.0, 0.0]).unwrap();
        assert_eq!(
            marginal_corr_stats(&x, &x, &y).unwrap_err(),
            Error::ZeroResponse
        );
    }

    #[test]
    fn ols_hand_example() {
        let x = DataMatrix::from_row_slice(4, 1, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        let xhat = DataMatrix::from_row_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]).unwrap();
        let y = ResponseVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        // direct 2x2 solve: Z'Z = 4I, Z'Y = (4, 0)
        let zz = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 4.0]);
        let zy = DVector::from_vec(vec![4.0, 0.0]);
        let beta = zz.lu().solve(&zy).unwrap() * 2.0;
        assert_eq!(beta.as_slice(), &[2.0, 0.0]);
        let w = ols_diff_stats(&x, &xhat, &y).unwrap();
        assert!((w.w[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ols_zero_response_and_shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_dm(20, 3, &mut rng);
        let xhat = random_dm(20, 3, &mut rng);
        let y0 = ResponseVector::new(DVector::zeros(20)).unwrap();
        assert!(ols_diff_stats(&x, &xhat, &y0)
            .unwrap()
            .w
            .iter()
            .all(|v| *v == 0.0));
        let small = random_dm(6, 3, &mut rng);
        let y6 = random_y(6, &mut rng);
        assert_eq!(
            ols_diff_stats(&small, &small, &y6).unwrap_err(),
            Error::Underdetermined { n: 6, p: 3 }
        );
        let y = random_y(20, &mut rng);
        assert!(matches!(
            ols_diff_stats(&x, &x, &y),
            Err(Error::SingularGram { .. })
        ));
    }

    #[test]
    fn ols_matches_pseudoinverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_dm(50, 5, &mut rng);
        let xhat = random_dm(50, 5, &mut rng);
        let y = random_y(50, &mut rng);
        let z = stacked_design(&x, &xhat);
        let pinv = z.clone().pseudo_inverse(1e-14).unwrap();
        let beta = pinv * y.values() * 50f64.sqrt();
        let w = ols_diff_stats(&x, &xhat, &y).unwrap();
        for j in 0..5 {
            assert!((w.w[j] - (beta[j].abs() - beta[j + 5].abs())).abs() < 1e-8);
        }
    }

    #[test]
    fn debiased_lasso_reduces_to_marginal_regression_at_large_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_dm(20, 3, &mut rng);
        let xhat = random_dm(20, 3, &mut rng);
        let y = random_y(20, &mut rng);
        let w = debiased_lasso_stats(&x, &xhat, &y, 1e6, &[1e6; 6], 1e-10, 1000).unwrap();
        let z = stacked_design(&x, &xhat);
        let b: Vec<f64> = (0..6)
            .map(|j| z.column(j).dot(y.values()) / z.column(j).norm_squared())
            .collect();
        for j in 0..3 {
            let expect = 20f64.sqrt() * (b[j].abs() - b[j + 3].abs());
            assert!((w.w[j] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn debiased_lasso_zero_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_dm(30, 4, &mut rng);
        let xhat = random_dm(30, 4, &mut rng);
        let y = ResponseVector::new(DVector::zeros(30)).unwrap();
        let w = debiased_lasso_stats(&x, &xhat, &y, 0.1, &[0.1; 8], 1e-8, 1000).unwrap();
        assert!(w.w.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn debiased_lasso_undoes_shrinkage_under_orthogonality() {
        // 16 x 4 sign design with Z'Z/n = I: X = columns 0,1 ; Xhat = columns 2,3
        let n = 16;
        let h = DMatrix::from_fn(n, 4, |i, j| if (i >> j) & 1 == 0 { 1.0 } else { -1.0 });
        let x = DataMatrix::new(h.columns(0, 2).into_owned()).unwrap();
        let xhat = DataMatrix::new(h.columns(2, 2).into_owned()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = random_y(n, &mut rng);
        let w = debiased_lasso_stats(&x, &xhat, &y, 0.2, &[0.2; 4], 1e-12, 1000).unwrap();
        let ols: Vec<f64> = (0..4)
            .map(|j| h.column(j).dot(y.values()) / n as f64)
            .collect();
        for j in 0..2 {
            let expect = 4.0 * (ols[j].abs() - ols[j + 2].abs());
            assert!((w.w[j] - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn debiased_lasso_flags_degenerate_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_dm(15, 2, &mut rng);
        let y = random_y(15, &mut rng);
        // duplicated column with no penalty: the score vector vanishes
        let err = debiased_lasso_stats(&x, &x, &y, 0.1, &[0.0; 4], 1e-10, 10_000).unwrap_err();
        assert!(matches!(err, Error::DegenerateScore { .. }));
    }

    fn naive_dcor(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let center = |v: &[f64]| {
            let d: Vec<Vec<f64>> = (0..n)
                .map(|k| (0..n).map(|l| (v[k] - v[l]).abs()).collect())
                .collect();
            let row: Vec<f64> = d.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
            let col: Vec<f64> = (0..n)
                .map(|l| (0..n).map(|k| d[k][l]).sum::<f64>() / n as f64)
                .collect();
            let all = row.iter().sum::<f64>() / n as f64;
            (0..n)
                .map(|k| {
                    (0..n)
                        .map(|l| d[k][l] - row[k] - col[l] + all)
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        };
        let a = center(x);
        let b = center(y);
        let mean = |u: &Vec<Vec<f64>>, v: &Vec<Vec<f64>>| {
            let mut s = 0.0;
            for k in 0..n {
                for l in 0..n {
                    s += u[k][l] * v[k][l];
                }
            }
            s / (n * n) as f64
        };
        let (xy, xx, yy) = (mean(&a, &b), mean(&a, &a), mean(&b, &b));
        if xx * yy <= 0.0 {
            0.0
        } else {
            (xy / (xx * yy).sqrt()).max(0.0).sqrt()
        }
    }

    #[test]
    fn distance_correlation_matches_naive_double_centering() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_dm(15, 3, &mut rng);
        let xhat = random_dm(15, 3, &mut rng);
        let y = random_y(15, &mut rng);
        let w = distance_corr_stats(&x, &xhat, &y).unwrap();
        for j in 0..3 {
            let a = naive_dcor(x.values().column(j).as_slice(), y.values().as_slice());
            let b = naive_dcor(xhat.values().column(j).as_slice(), y.values().as_slice());
            assert!((w.w[j] - (a - b)).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_correlation_edge_cases() {
        let constant = [2.0; 10];
        let y: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        assert_eq!(distance_correlation(&constant, &y), 0.0);
        let d = distance_correlation(&y, &y);
        assert!((d - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_dm(12, 2, &mut rng);
        let yv = random_y(12, &mut rng);
        let w = distance_corr_stats(&x, &x, &yv).unwrap();
        assert!(w.w.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cv_penalty_lies_on_the_grid_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let z = DMatrix::from_fn(60, 20, |_, _| rng.sample(StandardNormal));
        let mut y = DVector::from_fn(60, |_, _| rng.sample::<f64, _>(StandardNormal));
        y.axpy(2.0, &z.column(0).into_owned(), 1.0);
        let lam = cv_lambda(&z, &y, 5, &LassoOptions::default()).unwrap();
        let lambda_max = z.tr_mul(&y).amax() / 60.0;
        assert!(lam <= lambda_max && lam >= CV_MIN_RATIO * lambda_max * (1.0 - 1e-12));
        // a strong signal should not be fully penalized away
        assert!(lam < lambda_max);
        assert!(matches!(
            cv_lambda(&z, &y, 1, &LassoOptions::default()),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn cv_node_penalties_scale_with_column_sd() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut z = DMatrix::from_fn(50, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
        z.column_mut(3).scale_mut(4.0);
        let l = cv_node_lambdas(&z, 5, 2, &LassoOptions::default()).unwrap();
        let sd3 = std_dev(z.column(3).iter().copied());
        let sd1 = std_dev(z.column(1).iter().copied());
        assert!((l[3] / l[1] - sd3 / sd1).abs() < 1e-12);
    }

    #[test]
    fn scaled_lasso_recovers_noise_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let z = DMatrix::from_fn(400, 10, |_, _| rng.sample(StandardNormal));
        let beta = DVector::from_fn(10, |j, _| if j < 2 { 1.5 } else { 0.0 });
        let noise = DVector::from_fn(400, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
        let y = &z * &beta + noise;
        let rate = (20f64.ln() / 400.0).sqrt();
        let sigma = scaled_lasso_sigma(&z, &y, rate, &LassoOptions::default()).unwrap();
        assert!((sigma - 0.5).abs() < 0.08, "{sigma}");
        assert_eq!(
            scaled_lasso_sigma(&z, &DVector::zeros(400), rate, &LassoOptions::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn response_sd_rule_matches_default_lambdas() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let x = random_dm(40, 5, &mut rng);
        let xhat = random_dm(40, 5, &mut rng);
        let y = random_y(40, &mut rng);
        let z = stacked_design(&x, &xhat);
        let (l0, nodes) = default_lambdas(&z, y.values(), 1.0);
        let cfg = DebiasedLassoConfig {
            lambda0_rule: Lambda0Rule::ResponseSd,
            node_rule: NodeLambdaRule::Rate,
            ..Default::default()
        };
        let a = debiased_lasso_stats_cfg(&x, &xhat, &y, &cfg).unwrap();
        let b = debiased_lasso_stats(&x, &xhat, &y, l0, &nodes, 1e-6, 100_000).unwrap();
        assert_eq!(a.w, b.w);
    }

    #[test]
    fn stat_kind_parses_short_names() {
        for k in StatKind::ALL {
            assert_eq!(k.short_name().parse::<StatKind>().unwrap(), k);
        }
        assert!("xyz".parse::<StatKind>().is_err());
    }
}
