//! Replicated knockoff pipelines on synthetic designs.

mod designs;

pub use designs::*;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knockoff_gen::{
    exchangeability_check, gaussian_knockoffs, ExchangeCheck, KnockoffModel, RMethod,
};
use crate::matrix::{CovarianceSpec, DataMatrix, GroundTruth, MomentOrigin, ResponseVector};
use crate::rng::{stream, Purpose, Stream};
use crate::selection::{false_discovery_proportion, select_with, ThresholdRule};
use crate::statistics::{compute_stats, DebiasedLassoConfig, SolverMeta, StatKind};

pub const DEFAULT_TRAIN_SIZE: usize = 100_000;

/// Where the knockoff generator gets `(mu, Sigma_X)` from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    /// Analytic when the law has closed-form moments, otherwise trained on
    /// [`DEFAULT_TRAIN_SIZE`] rows.
    #[default]
    Auto,
    Analytic,
    Train {
        size: usize,
    },
}

fn default_signals() -> usize {
    40
}

fn default_magnitude() -> f64 {
    3.0
}

fn default_true() -> bool {
    true
}

/// One simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_law")]
    pub covariate_law: CovariateLaw,
    pub response: ResponseModel,
    pub statistic: StatKind,
    pub q: f64,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub moment_source: MomentSource,
    /// Number of nonzero coefficients.
    #[serde(default = "default_signals")]
    pub signals: usize,
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
    /// Draw a new coefficient vector for every replication.
    #[serde(default)]
    pub redraw_beta: bool,
    #[serde(default)]
    pub rule: ThresholdRule,
    #[serde(default)]
    pub r_method: Option<RMethod>,
    #[serde(default)]
    pub debiased_lasso: DebiasedLassoConfig,
    /// Run the covariance exchange check on the first replication.
    #[serde(default = "default_true")]
    pub exchange_check: bool,
    /// Keep every replication's statistic vector in the result.
    #[serde(default)]
    pub keep_statistics: bool,
    /// Center `X` and `Xhat` at the model mean and `Y` at its sample mean
    /// before computing statistics.
    #[serde(default = "default_true")]
    pub center: bool,
}

fn default_law() -> CovariateLaw {
    CovariateLaw::BinaryThreshold
}

impl SimConfig {
    /// Setting 1 (`response = linear`) or 2 (`tanh_nonlinear`) on the binary
    /// design with 40 signals of magnitude 3.
    pub fn setting(setting: u8, n: usize, p: usize, rho: f64, statistic: StatKind) -> Result<Self> {
        let response = match setting {
            1 => ResponseModel::Linear,
            2 => ResponseModel::TanhNonlinear,
            other => return Err(Error::InvalidConfig(format!("unknown setting {other}"))),
        };
        Ok(Self {
            n,
            p,
            rho,
            covariate_law: CovariateLaw::BinaryThreshold,
            response,
            statistic,
            q: 0.2,
            replications: 100,
            seed: 1,
            moment_source: MomentSource::Auto,
            signals: default_signals(),
            magnitude: default_magnitude(),
            redraw_beta: false,
            rule: ThresholdRule::Knockoff,
            r_method: None,
            debiased_lasso: DebiasedLassoConfig::default(),
            exchange_check: true,
            keep_statistics: false,
            center: true,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidConfig("n and p must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!(
                "rho = {} is outside [0, 1)",
                self.rho
            )));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidQ(self.q));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig(
                "replications must be at least 1".into(),
            ));
        }
        if let CovariateLaw::StudentT { dof } = self.covariate_law {
            if !(dof >= 3.0) {
                return Err(Error::BadDof(dof));
            }
        }
        if self.rho > 0.0
            && matches!(
                self.covariate_law,
                CovariateLaw::Rademacher | CovariateLaw::StudentT { .. }
            )
        {
            return Err(Error::InvalidConfig(
                "rademacher and student_t covariates are i.i.d. and require rho = 0".into(),
            ));
        }
        if self.response != ResponseModel::Null && self.signals > self.p {
            return Err(Error::KTooLarge {
                k: self.signals,
                p: self.p,
            });
        }
        if let MomentSource::Train { size } = self.moment_source {
            if size < 2 {
                return Err(Error::InvalidConfig(
                    "training size must be at least 2".into(),
                ));
            }
        }
        if self.statistic == StatKind::OlsDiff && self.n <= 2 * self.p {
            return Err(Error::Underdetermined {
                n: self.n,
                p: self.p,
            });
        }
        Ok(())
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub fdp: f64,
    /// Absent when the model has no relevant features.
    pub power: Option<f64>,
    /// `None` encodes an infinite threshold (empty selection).
    #[serde(with = "finite_or_none")]
    pub threshold: f64,
    pub selected: usize,
    pub solver: Option<SolverMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistics: Option<Vec<f64>>,
}

mod finite_or_none {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        let o = if v.is_finite() { Some(*v) } else { None };
        o.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config: SimConfig,
    pub mean_fdr: f64,
    pub fdr_se: f64,
    pub mean_power: Option<f64>,
    pub power_se: Option<f64>,
    pub per_rep: Vec<RepResult>,
    pub moments: MomentOrigin,
    /// Relevant features of the fixed coefficient vector (0-based).
    pub h1: Vec<usize>,
    pub exchange: Option<ExchangeCheck>,
}

impl CellResult {
    pub fn thresholds(&self) -> Vec<f64> {
        self.per_rep.iter().map(|r| r.threshold).collect()
    }
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Covariate sampler plus the moments handed to the knockoff generator.
struct Design {
    kind: DesignKind,
    cov: CovarianceSpec,
}

enum DesignKind {
    Binary(BinaryDesign),
    Gaussian(BandedGaussian),
    Iid(CovariateLaw),
}

impl Design {
    fn build(cfg: &SimConfig, cell: u64) -> Result<Self> {
        let p = cfg.p;
        let omega = gen_banded_precision(p, cfg.rho)?;
        let kind = match cfg.covariate_law {
            CovariateLaw::BinaryThreshold => DesignKind::Binary(BinaryDesign::new(&omega)?),
            CovariateLaw::Gaussian => DesignKind::Gaussian(BandedGaussian::new(&omega)?),
            law => DesignKind::Iid(law),
        };
        let analytic = match &kind {
            DesignKind::Binary(b) => b.analytic_moments(),
            DesignKind::Gaussian(g) => Some(CovarianceSpec::new(
                DVector::zeros(p),
                g.covariance(),
                MomentOrigin::Analytic,
            )?),
            DesignKind::Iid(_) => Some(CovarianceSpec::new(
                DVector::zeros(p),
                nalgebra::DMatrix::identity(p, p),
                MomentOrigin::Analytic,
            )?),
        };
        let train_size = match (cfg.moment_source, &analytic) {
            (MomentSource::Auto, Some(_)) | (MomentSource::Analytic, Some(_)) => None,
            (MomentSource::Auto, None) => Some(DEFAULT_TRAIN_SIZE),
            (MomentSource::Analytic, None) => return Err(Error::InvalidConfig(
                "correlated binary covariates have no closed-form moments; use a training sample"
                    .into(),
            )),
            (MomentSource::Train { size }, _) => Some(size),
        };
        let cov = match train_size {
            None => analytic.expect("checked above"),
            Some(size) => {
                let mut rng = stream(cfg.seed, cell, Purpose::Training, 0);
                train_moments(p, size, |m| kind.sample(p, m, &mut rng))?
            }
        };
        Ok(Design { kind, cov })
    }

    fn sample(&self, n: usize, rng: &mut Stream) -> nalgebra::DMatrix<f64> {
        self.kind.sample(self.cov.dim(), n, rng)
    }
}

impl DesignKind {
    fn sample(&self, p: usize, n: usize, rng: &mut Stream) -> nalgebra::DMatrix<f64> {
        match self {
            DesignKind::Binary(b) => b.sample(n, rng),
            DesignKind::Gaussian(g) => g.sample(n, rng),
            DesignKind::Iid(law) => iid_matrix(n, p, *law, rng).expect("law validated"),
        }
    }
}

/// `X - mu`, `Xhat - mu` and `Y - mean(Y)`.
pub fn center_pipeline(
    x: &DataMatrix,
    xhat: &DataMatrix,
    y: &ResponseVector,
    mean: &DVector<f64>,
) -> Result<(DataMatrix, DataMatrix, ResponseVector)> {
    let shift = |m: &DataMatrix| {
        let mut v = m.values().clone();
        for (j, mut col) in v.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mean[j]);
        }
        DataMatrix::new(v)
    };
    let ybar = y.values().mean();
    Ok((
        shift(x)?,
        shift(xhat)?,
        ResponseVector::new(y.values().add_scalar(-ybar))?,
    ))
}

fn draw_truth(cfg: &SimConfig, rng: &mut Stream) -> Result<GroundTruth> {
    if cfg.response == ResponseModel::Null {
        return Ok(GroundTruth::from_beta(DVector::zeros(cfg.p)));
    }
    gen_beta(cfg.p, cfg.signals, cfg.magnitude, rng)
}

/// The knockoff model a cell uses: same design moments and `r` as
/// [`run_cell_with_id`].
pub fn cell_knockoff_model(cfg: &SimConfig, cell: u64) -> Result<KnockoffModel> {
    cfg.validate()?;
    let design = Design::build(cfg, cell)?;
    let method = cfg.r_method.unwrap_or_else(|| RMethod::auto(&design.cov));
    KnockoffModel::with_method(design.cov, method)
}

/// Runs every replication of `cfg` as cell 0.
pub fn run_cell(cfg: &SimConfig) -> Result<CellResult> {
    run_cell_with_id(cfg, 0)
}

/// Runs every replication of `cfg`, deriving all random streams from
/// `(cfg.seed, cell, purpose, index)`. The result does not depend on how
/// replications are scheduled.
pub fn run_cell_with_id(cfg: &SimConfig, cell: u64) -> Result<CellResult> {
    cfg.validate()?;
    let design = Design::build(cfg, cell)?;
    let method = cfg.r_method.unwrap_or_else(|| RMethod::auto(&design.cov));
    let model = KnockoffModel::with_method(design.cov.clone(), method)?;
    let fixed_truth = draw_truth(cfg, &mut stream(cfg.seed, cell, Purpose::Coefficients, 0))?;

    let run = |r: usize| -> Result<(RepResult, Option<ExchangeCheck>)> {
        let mut rng = stream(cfg.seed, cell, Purpose::Replication, r as u64);
        let redrawn;
        let truth = if cfg.redraw_beta {
            redrawn = draw_truth(
                cfg,
                &mut stream(cfg.seed, cell, Purpose::Coefficients, r as u64 + 1),
            )?;
            &redrawn
        } else {
            &fixed_truth
        };
        let x = DataMatrix::new(design.sample(cfg.n, &mut rng))?;
        let y: ResponseVector = gen_response(&x, truth, cfg.response, &mut rng)?;
        let xhat = gaussian_knockoffs(&x, &model, &mut rng)?;
        let exchange = if r == 0 && cfg.exchange_check {
            let swaps: Vec<usize> = (0..cfg.p).collect();
            Some(exchangeability_check(&x, &xhat, &swaps)?)
        } else {
            None
        };
        let stats = if cfg.center {
            let (xc, xhatc, yc) = center_pipeline(&x, &xhat, &y, model.cov().mean())?;
            compute_stats(cfg.statistic, &xc, &xhatc, &yc, &cfg.debiased_lasso)?
        } else {
            compute_stats(cfg.statistic, &x, &xhat, &y, &cfg.debiased_lasso)?
        };
        let w: Vec<f64> = stats.w.iter().copied().collect();
        let (fdp, power, threshold, selected) = if truth.h1().is_empty() {
            let s = select_with(&w, cfg.q, None, cfg.rule)?;
            (
                false_discovery_proportion(&s.selected, truth),
                None,
                s.threshold,
                s.selected.len(),
            )
        } else {
            let s = select_with(&w, cfg.q, Some(truth), cfg.rule)?;
            (s.fdp.unwrap_or(0.0), s.power, s.threshold, s.selected.len())
        };
        Ok((
            RepResult {
                fdp,
                power,
                threshold,
                selected,
                solver: stats.meta,
                statistics: cfg.keep_statistics.then_some(w),
            },
            exchange,
        ))
    };

    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<_>> = {
        use rayon::prelude::*;
        (0..cfg.replications).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<_>> = (0..cfg.replications).map(run).collect();

    let mut per_rep = Vec::with_capacity(cfg.replications);
    let mut exchange = None;
    for o in outcomes {
        let (rep, ex) = o?;
        if ex.is_some() {
            exchange = ex;
        }
        per_rep.push(rep);
    }
    let fdps: Vec<f64> = per_rep.iter().map(|r| r.fdp).collect();
    let (mean_fdr, fdr_se) = mean_se(&fdps);
    let powers: Option<Vec<f64>> = per_rep.iter().map(|r| r.power).collect();
    let (mean_power, power_se) = match powers {
        Some(ps) if !ps.is_empty() => {
            let (m, s) = mean_se(&ps);
            (Some(m), Some(s))
        }
        _ => (None, None),
    };
    Ok(CellResult {
        config: cfg.clone(),
        mean_fdr,
        fdr_se,
        mean_power,
        power_se,
        per_rep,
        moments: design.cov.source(),
        h1: fixed_truth.h1().to_vec(),
        exchange,
    })
}
