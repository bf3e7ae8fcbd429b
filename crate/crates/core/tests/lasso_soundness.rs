use knockoff_core::lasso::{lasso_cd, soft_threshold};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Subgradient violation recomputed from the residual.
fn kkt(z: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>, lambda: f64) -> f64 {
    let n = z.nrows() as f64;
    let grad = z.tr_mul(&(y - z * b)) / n;
    (0..b.len())
        .map(|j| {
            if b[j] != 0.0 {
                (grad[j] - lambda * b[j].signum()).abs()
            } else {
                (grad[j].abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[test]
fn kkt_holds_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut count = 0;
    for &n in &[50usize, 200] {
        for &m in &[20usize, 400] {
            for _ in 0..50 {
                let z = DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal));
                let mut y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                for j in 0..5 {
                    y.axpy(rng.random_range(-2.0..2.0), &z.column(j).into_owned(), 1.0);
                }
                let lambda_max = z.tr_mul(&y).amax() / n as f64;
                let lambda = lambda_max * rng.random_range(0.05..0.9);
                let fit = lasso_cd(&z, &y, lambda, 1e-6, 100_000).unwrap();
                let r = kkt(&z, &y, &fit.beta, lambda);
                assert!(r <= 1e-6, "n={n} m={m}: kkt {r}");
                let zero_objective = y.norm_squared() / (2.0 * n as f64);
                assert!(fit.objective <= zero_objective + 1e-12);
                count += 1;
            }
        }
    }
    assert_eq!(count, 200);
}

#[test]
fn closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let z = DMatrix::from_fn(30, 6, |_, _| rng.sample(StandardNormal));
    let y = DVector::from_fn(30, |_, _| rng.sample::<f64, _>(StandardNormal));
    let lambda_max = z.tr_mul(&y).amax() / 30.0;
    let fit = lasso_cd(&z, &y, lambda_max, 1e-10, 1000).unwrap();
    assert!(fit.beta.iter().all(|b| *b == 0.0));

    // columns scaled so that Z'Z/n = I
    let qr = z.clone().qr();
    let q = qr.q() * 30f64.sqrt();
    for lambda in [0.01, 0.1, 0.5] {
        let fit = lasso_cd(&q, &y, lambda, 1e-12, 1000).unwrap();
        let u = q.tr_mul(&y) / 30.0;
        for j in 0..6 {
            assert!((fit.beta[j] - soft_threshold(u[j], lambda)).abs() < 1e-10);
        }
    }
}
