//! Browser bindings: reference tail curves, a single simulated replication
//! and knockoff selection on user-supplied statistics. Results that carry
//! structure are returned as JSON strings.

use knockoff_core::diagnostics::{half_abs_diff_tail, BivariateTail, TailMethod};
use knockoff_core::selection::select_with;
use knockoff_core::simulation::{run_cell, MomentSource, ResponseModel, SimConfig};
use knockoff_core::{StatKind, ThresholdRule};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Training rows for correlated designs; smaller than the native default
/// so a page stays responsive.
const DEMO_TRAIN_SIZE: usize = 20_000;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// `P(|G1| - |G2| >= t)` on `points` evenly spaced `t` in `[0, t_max]`
/// for `(G1, G2)` with standard deviations `sd1`, `sd2` and correlation
/// `corr`.
#[wasm_bindgen]
pub fn tail_curve(
    sd1: f64,
    sd2: f64,
    corr: f64,
    t_max: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    if !(t_max > 0.0) || points < 2 {
        return Err("need t_max > 0 and at least two points".into());
    }
    let cov = corr * sd1 * sd2;
    let bt = BivariateTail::new([[sd1 * sd1, cov], [cov, sd2 * sd2]], TailMethod::Quadrature)
        .map_err(err)?;
    (0..points)
        .map(|k| half_abs_diff_tail(&bt, t_max * k as f64 / (points - 1) as f64).map_err(err))
        .collect()
}

#[derive(Serialize)]
struct Replication {
    fdp: f64,
    power: Option<f64>,
    threshold: Option<f64>,
    selected: usize,
    signals: Vec<usize>,
    w: Vec<f64>,
}

fn stat_kind(name: &str) -> Result<StatKind, String> {
    name.parse::<StatKind>().map_err(err)
}

/// One replication of a simulation cell. `setting` is 1 (linear), 2 (tanh)
/// or 0 (null response). Returns JSON with the statistics, threshold,
/// FDP and power.
#[wasm_bindgen]
pub fn simulate_once(
    n: usize,
    p: usize,
    rho: f64,
    setting: u8,
    stat: &str,
    q: f64,
    signals: usize,
    seed: u64,
) -> Result<String, String> {
    let mut cfg = SimConfig::setting(
        if setting == 2 { 2 } else { 1 },
        n,
        p,
        rho,
        stat_kind(stat)?,
    )
    .map_err(err)?;
    if setting == 0 {
        cfg.response = ResponseModel::Null;
    }
    cfg.q = q;
    cfg.signals = signals;
    cfg.seed = seed;
    cfg.replications = 1;
    cfg.keep_statistics = true;
    cfg.exchange_check = false;
    if rho > 0.0 {
        cfg.moment_source = MomentSource::Train {
            size: DEMO_TRAIN_SIZE,
        };
    }
    let result = run_cell(&cfg).map_err(err)?;
    let rep = &result.per_rep[0];
    let out = Replication {
        fdp: rep.fdp,
        power: rep.power,
        threshold: rep.threshold.is_finite().then_some(rep.threshold),
        selected: rep.selected,
        signals: result.h1.clone(),
        w: rep.statistics.clone().unwrap_or_default(),
    };
    serde_json::to_string(&out).map_err(err)
}

#[derive(Serialize)]
struct Selection {
    threshold: Option<f64>,
    selected: Vec<usize>,
}

/// Knockoff threshold and selected indices (0-based) for statistics `w`.
#[wasm_bindgen]
pub fn knockoff_select(w: Vec<f64>, q: f64, plus: bool) -> Result<String, String> {
    let rule = if plus {
        ThresholdRule::KnockoffPlus
    } else {
        ThresholdRule::Knockoff
    };
    let s = select_with(&w, q, None, rule).map_err(err)?;
    serde_json::to_string(&Selection {
        threshold: s.threshold.is_finite().then_some(s.threshold),
        selected: s.selected,
    })
    .map_err(err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_curve_starts_at_half_and_decreases() {
        let c = tail_curve(1.0, 1.0, 0.3, 3.0, 7).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-9);
        assert!(c.windows(2).all(|w| w[1] < w[0]));
        assert!(tail_curve(1.0, 1.0, 0.0, 0.0, 5).is_err());
    }

    #[test]
    fn selection_json() {
        let s = knockoff_select(vec![3.0, 2.0, -1.0, 1.5, 0.5], 0.4, false).unwrap();
        // t = 0.5: one negative against four positives
        assert_eq!(s, r#"{"threshold":0.5,"selected":[0,1,3,4]}"#);
        let none = knockoff_select(vec![-1.0, -2.0], 0.2, false).unwrap();
        assert!(none.contains("\"threshold\":null"));
        assert!(knockoff_select(vec![1.0], 1.0, false).is_err());
    }

    #[test]
    fn one_replication() {
        let json = simulate_once(120, 40, 0.0, 1, "mc", 0.2, 8, 3).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["w"].as_array().unwrap().len(), 40);
        assert_eq!(v["signals"].as_array().unwrap().len(), 8);
        assert!(simulate_once(120, 40, 0.0, 1, "nope", 0.2, 8, 3).is_err());
    }
}
