use knockoff_core::simulation::{run_cell, ResponseModel, SimConfig};
use knockoff_core::{StatKind, ThresholdRule};

fn small_cell() -> SimConfig {
    let mut cfg = SimConfig::setting(1, 120, 40, 0.5, StatKind::MarginalCorr).unwrap();
    cfg.replications = 12;
    cfg.signals = 8;
    cfg.moment_source = knockoff_core::simulation::MomentSource::Train { size: 5_000 };
    cfg
}

fn run_in_pool(cfg: &SimConfig, threads: usize) -> String {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let result = pool.install(|| run_cell(cfg)).unwrap();
    serde_json::to_string(&result).unwrap()
}

#[test]
fn results_do_not_depend_on_pool_size() {
    let cfg = small_cell();
    let one = run_in_pool(&cfg, 1);
    assert_eq!(one, run_in_pool(&cfg, 3));
    assert_eq!(one, run_in_pool(&cfg, 1));
}

#[test]
fn seed_changes_results() {
    let mut cfg = small_cell();
    let a = run_in_pool(&cfg, 1);
    cfg.seed += 1;
    assert_ne!(a, run_in_pool(&cfg, 1));
}

#[test]
fn global_null_with_offset_rule() {
    let mut cfg = small_cell();
    cfg.response = ResponseModel::Null;
    cfg.rule = ThresholdRule::KnockoffPlus;
    cfg.replications = 50;
    let result = run_cell(&cfg).unwrap();
    assert!(result.mean_power.is_none());
    assert!(
        result.mean_fdr <= cfg.q + 3.0 * result.fdr_se.max(0.02),
        "{}",
        result.mean_fdr
    );
}
