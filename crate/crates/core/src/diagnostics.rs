//! Gaussian reference tails `P_j(t) = P(|G1| - |G2| >= t)` and Monte-Carlo
//! diagnostics for the three sufficient conditions behind asymptotic FDR
//! control: approximate symmetry of the null statistics, concentration of
//! the null indicator counts, and localization of the threshold.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::rng::{stream, Purpose};
use crate::selection::SelectionResult;
use crate::statistics::StatKind;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const QUAD_TOL: f64 = 1e-12;
/// Integration range in units of the conditioning standard deviation.
const QUAD_SPAN: f64 = 12.0;

/// Upper standard normal tail `P(N(0,1) >= x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    Quadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Bivariate normal `(G1, G2) ~ N(0, sigma2)` whose `|G1| - |G2|` tail is
/// the reference for one null statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateTail {
    pub var1: f64,
    pub var2: f64,
    pub cov: f64,
    pub method: TailMethod,
}

impl BivariateTail {
    pub fn new(sigma2: [[f64; 2]; 2], method: TailMethod) -> Result<Self> {
        let [[a, b], [c, d]] = sigma2;
        if ![a, b, c, d].iter().all(|v| v.is_finite()) {
            return Err(Error::BadCovariance("non-finite entry".into()));
        }
        if (b - c).abs() > 1e-12 * a.abs().max(d.abs()).max(1.0) {
            return Err(Error::BadCovariance("not symmetric".into()));
        }
        if !(a > 0.0 && d > 0.0) {
            return Err(Error::BadCovariance(
                "diagonal entries must be positive".into(),
            ));
        }
        let cov = 0.5 * (b + c);
        if a * d - cov * cov < -1e-12 * a * d {
            return Err(Error::BadCovariance("not positive semidefinite".into()));
        }
        Ok(Self {
            var1: a,
            var2: d,
            cov,
            method,
        })
    }

    /// `sigma^2 I_2`.
    pub fn isotropic(sigma: f64) -> Result<Self> {
        let v = sigma * sigma;
        Self::new([[v, 0.0], [0.0, v]], TailMethod::Quadrature)
    }
}

/// Monte-Carlo estimate of both orientations of the tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McTail {
    /// `P(|G1| - |G2| >= t)`.
    pub upper: f64,
    /// `P(|G1| - |G2| <= -t)`.
    pub lower: f64,
    pub upper_se: f64,
    pub lower_se: f64,
    pub samples: usize,
}

pub fn monte_carlo_tail<R: Rng + ?Sized>(
    bt: &BivariateTail,
    t: f64,
    samples: usize,
    rng: &mut R,
) -> McTail {
    let s1 = bt.var1.sqrt();
    let rho_s = bt.cov / bt.var1.sqrt();
    let resid = (bt.var2 - bt.cov * bt.cov / bt.var1).max(0.0).sqrt();
    let mut up = 0usize;
    let mut lo = 0usize;
    for _ in 0..samples {
        let u: f64 = rng.sample(StandardNormal);
        let v: f64 = rng.sample(StandardNormal);
        let g1 = s1 * u;
        let g2 = rho_s * u + resid * v;
        let d = g1.abs() - g2.abs();
        if d >= t {
            up += 1;
        }
        if d <= -t {
            lo += 1;
        }
    }
    let n = samples as f64;
    let pu = up as f64 / n;
    let pl = lo as f64 / n;
    McTail {
        upper: pu,
        lower: pl,
        upper_se: (pu * (1.0 - pu) / n).sqrt(),
        lower_se: (pl * (1.0 - pl) / n).sqrt(),
        samples,
    }
}

/// `P(|G1| - |G2| >= t)` for `t >= 0`.
///
/// The quadrature path conditions on `G2 = y`, where `G1 | y` is normal with
/// mean `(cov/var2) y` and variance `var1 - cov^2/var2`, and integrates the
/// closed-form conditional tail `P(|G1| >= t + |y|)` against the density of
/// `G2`. For a diagonal covariance this is the half-normal survival of `|G1|`
/// integrated against the half-normal density of `|G2|`.
pub fn half_abs_diff_tail(bt: &BivariateTail, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::OutOfRange {
            value: t,
            range: "[0, inf)",
        });
    }
    match bt.method {
        TailMethod::Quadrature => Ok(quadrature_tail(bt, t)),
        TailMethod::MonteCarlo { samples, seed } => {
            let mut rng = stream(seed, 0, Purpose::Diagnostics, 0);
            Ok(monte_carlo_tail(bt, t, samples, &mut rng).upper)
        }
    }
}

fn quadrature_tail(bt: &BivariateTail, t: f64) -> f64 {
    let s2 = bt.var2.sqrt();
    let slope = bt.cov / bt.var2;
    let cond_var = bt.var1 - bt.cov * bt.cov / bt.var2;
    if cond_var <= 1e-14 * bt.var1 {
        // G1 = slope * G2: |G1| - |G2| = (|slope| - 1) |G2|
        let excess = slope.abs() - 1.0;
        return if excess > 0.0 {
            2.0 * normal_sf(t / excess / s2)
        } else if t == 0.0 && excess == 0.0 {
            1.0
        } else {
            0.0
        };
    }
    let s = cond_var.sqrt();
    let density =
        |y: f64| (-0.5 * (y / s2).powi(2)).exp() / (s2 * (2.0 * std::f64::consts::PI).sqrt());
    // P(|G1| >= t + |y| | G2 = y), summed over y and -y
    let cond = |y: f64| {
        let edge = t + y;
        let m = slope * y;
        normal_sf((edge - m) / s) + normal_sf((edge + m) / s)
    };
    let integrand = |y: f64| density(y) * 2.0 * cond(y);
    let r = integrate(integrand, 0.0, QUAD_SPAN * s2, QUAD_TOL, 2000);
    r.value.clamp(0.0, 1.0)
}

/// `|H0|^{-1} sum_j P_j(t)`.
pub fn avg_tail(tails: &[BivariateTail], t: f64) -> Result<f64> {
    if tails.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut sum = 0.0;
    for bt in tails {
        sum += half_abs_diff_tail(bt, t)?;
    }
    Ok(sum / tails.len() as f64)
}

/// `sup{t >= 0 : P(t) >= x}` by bisection on the decreasing average tail.
pub fn tail_inverse(tails: &[BivariateTail], x: f64) -> Result<f64> {
    if !(x > 0.0 && x <= 0.5) {
        return Err(Error::OutOfRange {
            value: x,
            range: "(0, 1/2]",
        });
    }
    let p0 = avg_tail(tails, 0.0)?;
    if x > p0 + 1e-9 {
        return Err(Error::OutOfRange {
            value: x,
            range: "(0, P(0)]",
        });
    }
    if x >= p0 {
        return Ok(0.0);
    }
    let scale = tails
        .iter()
        .map(|b| b.var1.max(b.var2).sqrt())
        .fold(0.0, f64::max);
    let mut lo = 0.0;
    let mut hi = scale;
    while avg_tail(tails, hi)? >= x {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 * scale {
            return Err(Error::OutOfRange {
                value: x,
                range: "tail never falls below x",
            });
        }
    }
    while hi - lo > 1e-10 * scale.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if avg_tail(tails, mid)? >= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Reference tails for the null coordinates `h0` of a statistic.
///
/// * marginal correlation: the `{j, j+p}` block of the joint covariance;
/// * OLS: `sigma_xi^2 (1 - 2p/n)^{-1} [Sigma^{-1}]_{{j, j+p}}`;
/// * debiased Lasso: `sigma_xi^2 [Sigma^{-1}]_{{j, j+p}}`.
///
/// `joint` is the `2p x 2p` covariance of `(X, Xhat)`. Distance correlation
/// has no Gaussian reference tail and yields `None`.
pub fn gaussian_null_tails(
    kind: StatKind,
    joint: &DMatrix<f64>,
    n: usize,
    sigma_xi: f64,
    h0: &[usize],
) -> Result<Option<Vec<BivariateTail>>> {
    let p = joint.nrows() / 2;
    let q = TailMethod::Quadrature;
    match kind {
        StatKind::MarginalCorr => h0
            .iter()
            .map(|&j| {
                let (a, b) = (j, j + p);
                BivariateTail::new(
                    [
                        [joint[(a, a)], joint[(a, b)]],
                        [joint[(b, a)], joint[(b, b)]],
                    ],
                    q,
                )
            })
            .collect::<Result<Vec<_>>>()
            .map(Some),
        StatKind::OlsDiff | StatKind::DebiasedLassoDiff => {
            let inv = joint
                .clone()
                .cholesky()
                .ok_or(Error::BadCovariance("joint covariance is singular".into()))?
                .inverse();
            let factor = if kind == StatKind::OlsDiff {
                let shrink = 1.0 - 2.0 * p as f64 / n as f64;
                if shrink <= 0.0 {
                    return Err(Error::Underdetermined { n, p });
                }
                1.0 / shrink
            } else {
                1.0
            };
            let s = sigma_xi * sigma_xi * factor;
            h0.iter()
                .map(|&j| {
                    let (a, b) = (j, j + p);
                    BivariateTail::new(
                        [
                            [s * inv[(a, a)], s * inv[(a, b)]],
                            [s * inv[(b, a)], s * inv[(b, b)]],
                        ],
                        q,
                    )
                })
                .collect::<Result<Vec<_>>>()
                .map(Some)
        }
        StatKind::DistanceCorr => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub t_grid: Vec<f64>,
    pub q: f64,
    pub a_n: usize,
    pub p: usize,
    pub replications: usize,
    pub seed: u64,
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidQ(self.q));
        }
        if self.a_n > self.p {
            return Err(Error::InvalidConfig(format!(
                "a_n = {} exceeds p = {}",
                self.a_n, self.p
            )));
        }
        if self.t_grid.iter().any(|t| !(*t > 0.0)) || self.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "t_grid must be positive and strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

pub const MIN_DIAGNOSTIC_REPLICATIONS: usize = 100;
/// Minimum pooled count of `W <= -t` for a grid point to be admissible.
pub const RATIO_COUNT_FLOOR: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub t: f64,
    pub positive: usize,
    pub negative: usize,
    pub ratio: Option<f64>,
    pub std_error: Option<f64>,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub points: Vec<RatioPoint>,
    /// `sup_t |ratio(t) - 1|` over admissible grid points.
    pub sup_deviation: Option<f64>,
    /// `sup_t |ratio(t) - 1| / se(t)` over admissible grid points.
    pub sup_z: Option<f64>,
}

fn check_replications(samples: &DMatrix<f64>) -> Result<()> {
    if samples.nrows() < MIN_DIAGNOSTIC_REPLICATIONS {
        return Err(Error::InsufficientReplications {
            required: MIN_DIAGNOSTIC_REPLICATIONS,
            got: samples.nrows(),
        });
    }
    if samples.ncols() == 0 {
        return Err(Error::EmptyList);
    }
    Ok(())
}

/// Empirical version of the symmetry ratio
/// `sum_j P(W_j >= t) / sum_j P(W_j <= -t)`, pooled over replications (rows
/// of `null_w`) and null coordinates (columns).
///
/// A grid point is admissible when the pooled negative count reaches
/// [`RATIO_COUNT_FLOOR`], i.e. frequency at least `10 / (R |H0|)`. The
/// standard error uses the Poisson approximation for both counts:
/// `se = ratio * sqrt(1/pos + 1/neg)`.
pub fn symmetry_ratio_diag(null_w: &DMatrix<f64>, t_grid: &[f64]) -> Result<SymmetryReport> {
    check_replications(null_w)?;
    let points: Vec<RatioPoint> = t_grid
        .iter()
        .map(|&t| {
            let positive = null_w.iter().filter(|w| **w >= t).count();
            let negative = null_w.iter().filter(|w| **w <= -t).count();
            let admissible = negative >= RATIO_COUNT_FLOOR;
            let (ratio, std_error) = if admissible {
                let r = positive as f64 / negative as f64;
                let se = r.max(1.0 / negative as f64)
                    * (1.0 / positive.max(1) as f64 + 1.0 / negative as f64).sqrt();
                (Some(r), Some(se))
            } else {
                (None, None)
            };
            RatioPoint {
                t,
                positive,
                negative,
                ratio,
                std_error,
                admissible,
            }
        })
        .collect();
    let mut sup_deviation: Option<f64> = None;
    let mut sup_z: Option<f64> = None;
    for pt in points.iter().filter(|p| p.admissible) {
        let dev = (pt.ratio.unwrap() - 1.0).abs();
        let z = dev / pt.std_error.unwrap();
        sup_deviation = Some(sup_deviation.map_or(dev, |s| s.max(dev)));
        sup_z = Some(sup_z.map_or(z, |s| s.max(z)));
    }
    Ok(SymmetryReport {
        points,
        sup_deviation,
        sup_z,
    })
}

/// Mean per-replication deviation above which the indicator approximation
/// is flagged as unsupported (typically strong dependence among nulls).
pub const INDICATOR_FLAG_LEVEL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    /// Grid points where both pooled tail frequencies reach the floor.
    pub admissible_t: Vec<f64>,
    /// Mean over replications of the per-replication sup deviation.
    pub mean_sup_deviation: Option<f64>,
    pub max_sup_deviation: Option<f64>,
    pub flagged: bool,
}

/// For every replication, `sup_t` of
/// `|#{j: W_j >= t} / (|H0| phat+(t)) - 1| v |#{j: W_j <= -t} / (|H0| phat-(t)) - 1|`
/// where `phat+-` are the pooled across-replication frequencies; grid points
/// with either pooled frequency below `min_freq` are skipped.
pub fn indicator_approx_diag(
    null_w: &DMatrix<f64>,
    t_grid: &[f64],
    min_freq: f64,
) -> Result<IndicatorReport> {
    check_replications(null_w)?;
    let (reps, h0) = (null_w.nrows(), null_w.ncols());
    let total = (reps * h0) as f64;
    let mut grid = Vec::new();
    for &t in t_grid {
        let pos = null_w.iter().filter(|w| **w >= t).count() as f64 / total;
        let neg = null_w.iter().filter(|w| **w <= -t).count() as f64 / total;
        if pos >= min_freq && neg >= min_freq {
            grid.push((t, pos, neg));
        }
    }
    if grid.is_empty() {
        return Ok(IndicatorReport {
            admissible_t: Vec::new(),
            mean_sup_deviation: None,
            max_sup_deviation: None,
            flagged: false,
        });
    }
    let hf = h0 as f64;
    let per_rep: Vec<f64> = (0..reps)
        .map(|r| {
            let row = null_w.row(r);
            grid.iter()
                .map(|&(t, pos, neg)| {
                    let cp = row.iter().filter(|w| **w >= t).count() as f64;
                    let cn = row.iter().filter(|w| **w <= -t).count() as f64;
                    (cp / (hf * pos) - 1.0)
                        .abs()
                        .max((cn / (hf * neg) - 1.0).abs())
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let mean = per_rep.iter().sum::<f64>() / reps as f64;
    let max = per_rep.iter().copied().fold(0.0, f64::max);
    Ok(IndicatorReport {
        admissible_t: grid.iter().map(|g| g.0).collect(),
        mean_sup_deviation: Some(mean),
        max_sup_deviation: Some(max),
        flagged: mean > INDICATOR_FLAG_LEVEL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub alpha_n: f64,
    pub exceed: usize,
    pub runs: usize,
    /// Fraction of runs with `T_q > alpha_n` (infinite thresholds count).
    pub frequency: f64,
}

/// `alpha_n = P^{-1}(q a_n / (2p))`, then the fraction of runs whose
/// threshold exceeds it.
pub fn threshold_localization_diag(
    runs: &[SelectionResult],
    cfg: &DiagnosticsConfig,
    tails: &[BivariateTail],
) -> Result<LocalizationReport> {
    cfg.validate()?;
    let thresholds: Vec<f64> = runs.iter().map(|r| r.threshold).collect();
    localization_from_thresholds(&thresholds, cfg, tails)
}

pub fn localization_from_thresholds(
    thresholds: &[f64],
    cfg: &DiagnosticsConfig,
    tails: &[BivariateTail],
) -> Result<LocalizationReport> {
    if tails.is_empty() {
        return Err(Error::EmptyList);
    }
    if thresholds.is_empty() {
        return Err(Error::InsufficientReplications {
            required: 1,
            got: 0,
        });
    }
    let level = cfg.q * cfg.a_n as f64 / (2.0 * cfg.p as f64);
    let alpha_n = tail_inverse(tails, level)?;
    let exceed = thresholds.iter().filter(|t| **t > alpha_n).count();
    Ok(LocalizationReport {
        alpha_n,
        exceed,
        runs: thresholds.len(),
        frequency: exceed as f64 / thresholds.len() as f64,
    })
}

/// Stacks per-replication statistic vectors, keeping only the null columns.
pub fn null_sample_matrix(per_rep_w: &[DVector<f64>], h0: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(per_rep_w.len(), h0.len(), |r, k| per_rep_w[r][h0[k]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn iso(s: f64) -> BivariateTail {
        BivariateTail::isotropic(s).unwrap()
    }

    #[test]
    fn tail_at_zero_is_half() {
        assert!((half_abs_diff_tail(&iso(1.0), 0.0).unwrap() - 0.5).abs() < 1e-9);
        for rho in [-0.9, -0.3, 0.5, 0.95] {
            let bt =
                BivariateTail::new([[2.0, 2.0 * rho], [2.0 * rho, 2.0]], TailMethod::Quadrature)
                    .unwrap();
            let v = half_abs_diff_tail(&bt, 0.0).unwrap();
            assert!((v - 0.5).abs() < 1e-9, "rho {rho}: {v}");
        }
    }

    #[test]
    fn tail_is_decreasing_and_bounded() {
        let bt = iso(1.0);
        let mut prev = half_abs_diff_tail(&bt, 0.0).unwrap();
        for k in 1..40 {
            let v = half_abs_diff_tail(&bt, k as f64 * 0.1).unwrap();
            assert!(v < prev && v >= 0.0 && v <= 0.5);
            prev = v;
        }
    }

    #[test]
    fn tail_scaling_identity() {
        for (s, t) in [(2.0, 1.0), (0.5, 0.3), (3.0, 4.0)] {
            let a = half_abs_diff_tail(&iso(s), t).unwrap();
            let b = half_abs_diff_tail(&iso(1.0), t / s).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn quadrature_agrees_with_monte_carlo_for_correlated_case() {
        let bt = BivariateTail::new([[1.0, 0.6], [0.6, 1.5]], TailMethod::Quadrature).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for t in [0.0, 0.4, 1.2] {
            let mc = monte_carlo_tail(&bt, t, 400_000, &mut rng);
            let quad = half_abs_diff_tail(&bt, t).unwrap();
            assert!(
                (mc.upper - quad).abs() < 4.0 * mc.upper_se.max(1e-6),
                "t {t}: {} vs {quad}",
                mc.upper
            );
        }
    }

    #[test]
    fn equal_diagonal_tails_are_symmetric() {
        let bt = BivariateTail::new([[1.0, -0.4], [-0.4, 1.0]], TailMethod::Quadrature).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in [0.2, 0.8, 1.5] {
            let mc = monte_carlo_tail(&bt, t, 400_000, &mut rng);
            let se = (mc.upper_se.powi(2) + mc.lower_se.powi(2)).sqrt();
            assert!((mc.upper - mc.lower).abs() < 4.0 * se);
        }
    }

    #[test]
    fn degenerate_covariance_uses_closed_form() {
        let bt = BivariateTail::new([[4.0, 2.0], [2.0, 1.0]], TailMethod::Quadrature).unwrap();
        // G1 = 2 G2, so |G1| - |G2| = |G2|
        let v = half_abs_diff_tail(&bt, 1.0).unwrap();
        assert!((v - 2.0 * normal_sf(1.0)).abs() < 1e-14);
    }

    #[test]
    fn bad_covariances_rejected() {
        assert!(BivariateTail::new([[1.0, 2.0], [2.0, 1.0]], TailMethod::Quadrature).is_err());
        assert!(BivariateTail::new([[0.0, 0.0], [0.0, 1.0]], TailMethod::Quadrature).is_err());
        assert!(BivariateTail::new([[1.0, 0.1], [0.2, 1.0]], TailMethod::Quadrature).is_err());
        assert!(half_abs_diff_tail(&iso(1.0), -0.5).is_err());
    }

    #[test]
    fn average_tail_cases() {
        let single = avg_tail(&[iso(1.0)], 0.7).unwrap();
        assert_eq!(single, half_abs_diff_tail(&iso(1.0), 0.7).unwrap());
        assert_eq!(
            avg_tail(&[iso(1.3), iso(1.3)], 0.7).unwrap(),
            half_abs_diff_tail(&iso(1.3), 0.7).unwrap()
        );
        assert!((avg_tail(&[iso(1.0), iso(2.0)], 0.0).unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(avg_tail(&[], 0.0).unwrap_err(), Error::EmptyList);
    }

    #[test]
    fn inverse_round_trips() {
        let tails = [iso(1.0)];
        assert_eq!(tail_inverse(&tails, 0.5).unwrap(), 0.0);
        let mut prev = 0.0;
        for x in [0.4, 0.1, 0.01] {
            let t = tail_inverse(&tails, x).unwrap();
            assert!((avg_tail(&tails, t).unwrap() - x).abs() < 1e-6);
            assert!(t > prev);
            prev = t;
        }
        assert!(matches!(
            tail_inverse(&tails, 0.6),
            Err(Error::OutOfRange { .. })
        ));
        assert!(matches!(
            tail_inverse(&tails, 0.0),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn monte_carlo_method_is_seeded() {
        let bt = BivariateTail::new(
            [[1.0, 0.0], [0.0, 1.0]],
            TailMethod::MonteCarlo {
                samples: 100_000,
                seed: 9,
            },
        )
        .unwrap();
        let a = half_abs_diff_tail(&bt, 0.5).unwrap();
        assert_eq!(a, half_abs_diff_tail(&bt, 0.5).unwrap());
        let q = half_abs_diff_tail(&iso(1.0), 0.5).unwrap();
        assert!((a - q).abs() < 0.01);
    }

    fn draw(reps: usize, h0: usize, shift: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(reps, h0, |_, _| {
            shift + rng.sample::<f64, _>(StandardNormal)
        })
    }

    #[test]
    fn symmetric_law_passes_ratio_check() {
        let w = draw(2000, 20, 0.0, 1);
        let grid: Vec<f64> = (1..=25).map(|k| k as f64 * 0.1).collect();
        let rep = symmetry_ratio_diag(&w, &grid).unwrap();
        assert!(rep.sup_z.unwrap() <= 5.0);
    }

    #[test]
    fn shifted_law_is_detected() {
        let w = draw(2000, 20, 0.5, 2);
        let rep = symmetry_ratio_diag(&w, &[0.1, 0.3, 0.5]).unwrap();
        assert!(rep.points.iter().all(|p| p.ratio.unwrap() > 1.0));
        assert!(rep.sup_z.unwrap() > 5.0);
    }

    #[test]
    fn positive_samples_have_no_admissible_t() {
        let w = draw(200, 5, 0.0, 3).map(|v| v.abs() + 0.01);
        let rep = symmetry_ratio_diag(&w, &[0.1, 0.5]).unwrap();
        assert!(rep.sup_deviation.is_none());
        assert!(rep.points.iter().all(|p| !p.admissible));
    }

    #[test]
    fn too_few_replications() {
        let w = draw(50, 5, 0.0, 4);
        assert!(matches!(
            symmetry_ratio_diag(&w, &[0.5]),
            Err(Error::InsufficientReplications { .. })
        ));
    }

    #[test]
    fn indicator_concentrates_for_independent_nulls() {
        let w = draw(200, 500, 0.0, 5);
        let rep = indicator_approx_diag(&w, &[0.25, 0.5, 0.75], 0.01).unwrap();
        assert!(rep.mean_sup_deviation.unwrap() < 0.2);
        assert!(!rep.flagged);
    }

    #[test]
    fn indicator_single_null_reports_without_failing() {
        let w = draw(200, 1, 0.0, 6);
        let rep = indicator_approx_diag(&w, &[0.25, 0.5], 0.01).unwrap();
        assert!(rep.mean_sup_deviation.unwrap() > 0.5);
    }

    #[test]
    fn indicator_flags_comonotone_nulls() {
        let base = draw(300, 1, 0.0, 7);
        let w = DMatrix::from_fn(300, 100, |r, _| base[(r, 0)]);
        let rep = indicator_approx_diag(&w, &[0.25, 0.5, 0.75], 0.01).unwrap();
        assert!(rep.flagged);
    }

    #[test]
    fn localization_counts() {
        let cfg = DiagnosticsConfig {
            t_grid: vec![0.5],
            q: 0.2,
            a_n: 10,
            p: 100,
            replications: 3,
            seed: 1,
        };
        let tails = [iso(1.0)];
        let tiny = localization_from_thresholds(&[1e-3, 2e-3, 1e-4], &cfg, &tails).unwrap();
        assert!(tiny.alpha_n > 1.0);
        assert_eq!(tiny.frequency, 0.0);
        let inf = localization_from_thresholds(&[f64::INFINITY; 4], &cfg, &tails).unwrap();
        assert_eq!(inf.frequency, 1.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = DiagnosticsConfig {
            t_grid: vec![0.5, 1.0],
            q: 0.2,
            a_n: 10,
            p: 100,
            replications: 3,
            seed: 1,
        };
        assert!(cfg.validate().is_ok());
        cfg.t_grid = vec![1.0, 0.5];
        assert!(cfg.validate().is_err());
        cfg.t_grid = vec![0.5];
        cfg.a_n = 101;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn null_tails_follow_the_joint_blocks() {
        let p = 3;
        let sigma = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.2 });
        let joint =
            crate::knockoff_gen::JointCovariance::new(&sigma, &DVector::from_element(p, 0.6));
        let g = joint.matrix();
        let mc = gaussian_null_tails(StatKind::MarginalCorr, g, 100, 1.0, &[0, 2])
            .unwrap()
            .unwrap();
        assert_eq!(mc.len(), 2);
        assert_eq!((mc[0].var1, mc[0].var2, mc[0].cov), (1.0, 1.0, 0.4));
        let ols = gaussian_null_tails(StatKind::OlsDiff, g, 12, 2.0, &[1])
            .unwrap()
            .unwrap();
        let inv = g.clone().try_inverse().unwrap();
        assert!((ols[0].var1 - 4.0 * 2.0 * inv[(1, 1)]).abs() < 1e-12);
        assert!((ols[0].cov - 4.0 * 2.0 * inv[(1, 4)]).abs() < 1e-12);
        assert!(gaussian_null_tails(StatKind::OlsDiff, g, 6, 1.0, &[0]).is_err());
        assert!(
            gaussian_null_tails(StatKind::DistanceCorr, g, 100, 1.0, &[0])
                .unwrap()
                .is_none()
        );
    }
}
