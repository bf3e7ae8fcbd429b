use knockoff_core::lasso::LassoOptions;
use knockoff_core::statistics::{compute_stats, DebiasedLassoConfig};
use knockoff_core::{DataMatrix, ResponseVector, StatKind};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn swap_column(x: &DataMatrix, xhat: &DataMatrix, j: usize) -> (DataMatrix, DataMatrix) {
    let mut a = x.values().clone();
    let mut b = xhat.values().clone();
    a.set_column(j, &xhat.values().column(j));
    b.set_column(j, &x.values().column(j));
    (DataMatrix::new(a).unwrap(), DataMatrix::new(b).unwrap())
}

fn instance(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (DataMatrix, DataMatrix, ResponseVector) {
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal));
    let xhat = DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal));
    let beta = DVector::from_fn(p, |j, _| if j % 3 == 0 { 1.0 } else { 0.0 });
    let y = &x * beta + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (
        DataMatrix::new(x).unwrap(),
        DataMatrix::new(xhat).unwrap(),
        ResponseVector::new(y).unwrap(),
    )
}

fn check(kind: StatKind, instances: usize, n: usize, p: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(kind as u64 + 100);
    let cfg = DebiasedLassoConfig {
        lasso: LassoOptions::with_tol(1e-12, 1_000_000),
        ..Default::default()
    };
    let untouched_elsewhere = matches!(kind, StatKind::MarginalCorr | StatKind::DistanceCorr);
    for _ in 0..instances {
        let (x, xhat, y) = instance(&mut rng, n, p);
        let w = compute_stats(kind, &x, &xhat, &y, &cfg).unwrap().w;
        let j = rng.random_range(0..p);
        let (xs, xhats) = swap_column(&x, &xhat, j);
        let ws = compute_stats(kind, &xs, &xhats, &y, &cfg).unwrap().w;
        assert!(
            (ws[j] + w[j]).abs() < 1e-10,
            "{kind}: w_j {} vs swapped {}",
            w[j],
            ws[j]
        );
        if untouched_elsewhere {
            for k in (0..p).filter(|k| *k != j) {
                assert_eq!(ws[k], w[k]);
            }
        }
    }
}

#[test]
fn marginal_correlation_flips() {
    check(StatKind::MarginalCorr, 100, 30, 8);
}

#[test]
fn ols_difference_flips() {
    check(StatKind::OlsDiff, 100, 40, 6);
}

#[test]
fn debiased_lasso_flips() {
    check(StatKind::DebiasedLassoDiff, 100, 40, 6);
}

#[test]
fn distance_correlation_flips() {
    check(StatKind::DistanceCorr, 100, 25, 6);
}
