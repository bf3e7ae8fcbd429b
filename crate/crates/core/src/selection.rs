//! Knockoff threshold and selected set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::GroundTruth;

/// Offset added to the negative count in the ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `#{W <= -t} / (#{W >= t} v 1)`.
    #[default]
    Knockoff,
    /// `(1 + #{W <= -t}) / (#{W >= t} v 1)`.
    KnockoffPlus,
}

impl ThresholdRule {
    fn offset(self) -> usize {
        match self {
            ThresholdRule::Knockoff => 0,
            ThresholdRule::KnockoffPlus => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// `f64::INFINITY` when nothing qualifies.
    pub threshold: f64,
    /// Selected features, 0-based and increasing.
    pub selected: Vec<usize>,
    pub fdp: Option<f64>,
    pub power: Option<f64>,
}

impl SelectionResult {
    pub fn false_discoveries(&self, truth: &GroundTruth) -> usize {
        self.selected
            .iter()
            .filter(|j| !truth.is_relevant(**j))
            .count()
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidQ(q))
    }
}

/// Smallest candidate `t` among the distinct nonzero `|W_j|` whose ratio is at
/// most `q`.
pub fn knockoff_threshold(w: &[f64], q: f64) -> Result<f64> {
    knockoff_threshold_with(w, q, ThresholdRule::Knockoff)
}

pub fn knockoff_threshold_with(w: &[f64], q: f64, rule: ThresholdRule) -> Result<f64> {
    check_q(q)?;
    if let Some(i) = w.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEntry { row: i + 1, col: 1 });
    }
    let mut pos: Vec<f64> = w.iter().copied().filter(|v| *v > 0.0).collect();
    let mut neg: Vec<f64> = w.iter().filter(|v| **v < 0.0).map(|v| -v).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = pos.iter().chain(neg.iter()).copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let offset = rule.offset();
    for t in candidates {
        // counts of entries >= t in each sorted magnitude list
        let n_pos = pos.len() - pos.partition_point(|v| *v < t);
        let n_neg = neg.len() - neg.partition_point(|v| *v < t);
        let ratio = (n_neg + offset) as f64 / n_pos.max(1) as f64;
        if ratio <= q {
            return Ok(t);
        }
    }
    Ok(f64::INFINITY)
}

/// Applies the threshold and, when `truth` is given, scores the selection.
pub fn select(w: &[f64], q: f64, truth: Option<&GroundTruth>) -> Result<SelectionResult> {
    select_with(w, q, truth, ThresholdRule::Knockoff)
}

pub fn select_with(
    w: &[f64],
    q: f64,
    truth: Option<&GroundTruth>,
    rule: ThresholdRule,
) -> Result<SelectionResult> {
    let threshold = knockoff_threshold_with(w, q, rule)?;
    let selected: Vec<usize> = if threshold.is_finite() {
        (0..w.len()).filter(|&j| w[j] >= threshold).collect()
    } else {
        Vec::new()
    };
    let (fdp, power) = match truth {
        Some(t) => {
            if t.p() != w.len() {
                return Err(Error::DimensionMismatch {
                    context: "ground truth vs statistics",
                    expected: w.len(),
                    found: t.p(),
                });
            }
            if t.h1().is_empty() {
                return Err(Error::EmptyH1);
            }
            let (fdp, power) = score(&selected, t);
            (Some(fdp), Some(power))
        }
        None => (None, None),
    };
    Ok(SelectionResult {
        threshold,
        selected,
        fdp,
        power,
    })
}

/// False discovery proportion only; defined even when `h1` is empty.
pub fn false_discovery_proportion(selected: &[usize], truth: &GroundTruth) -> f64 {
    let false_hits = selected.iter().filter(|j| !truth.is_relevant(**j)).count();
    false_hits as f64 / selected.len().max(1) as f64
}

fn score(selected: &[usize], truth: &GroundTruth) -> (f64, f64) {
    let true_hits = selected.iter().filter(|j| truth.is_relevant(**j)).count();
    let fdp = false_discovery_proportion(selected, truth);
    let power = true_hits as f64 / truth.h1().len() as f64;
    (fdp, power)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let w = [3.0, 2.0, -1.0, 1.5];
        assert_eq!(knockoff_threshold(&w, 0.5).unwrap(), 1.0);
        let truth = GroundTruth::new(4, vec![0, 1], None).unwrap();
        let s = select(&w, 0.5, Some(&truth)).unwrap();
        assert_eq!(s.selected, vec![0, 1, 3]);
        assert!((s.fdp.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.power, Some(1.0));
    }

    #[test]
    fn all_positive_and_all_negative() {
        let w = [0.7, 2.0, 0.3, 5.0];
        assert_eq!(knockoff_threshold(&w, 0.1).unwrap(), 0.3);
        let w = [-0.7, -2.0, -0.3];
        assert_eq!(knockoff_threshold(&w, 0.9).unwrap(), f64::INFINITY);
        let truth = GroundTruth::new(3, vec![0], None).unwrap();
        let s = select(&w, 0.9, Some(&truth)).unwrap();
        assert!(s.selected.is_empty());
        assert_eq!((s.fdp, s.power), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn zeros_are_not_candidates() {
        let w = [0.0, 0.0, 0.0];
        assert_eq!(knockoff_threshold(&w, 0.2).unwrap(), f64::INFINITY);
        let w = [0.0, 1.0];
        let s = select(&w, 0.2, None).unwrap();
        assert_eq!(s.selected, vec![1]);
    }

    #[test]
    fn fdp_and_power_counting() {
        let truth = GroundTruth::new(5, vec![0, 1], None).unwrap();
        let (fdp, power) = score(&[0, 1, 2], &truth);
        assert!((fdp - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(power, 1.0);
    }

    #[test]
    fn invalid_inputs() {
        for q in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                knockoff_threshold(&[1.0], q),
                Err(Error::InvalidQ(_))
            ));
        }
        let empty = GroundTruth::new(2, vec![], None).unwrap();
        assert_eq!(
            select(&[1.0, -1.0], 0.2, Some(&empty)).unwrap_err(),
            Error::EmptyH1
        );
    }

    #[test]
    fn plus_rule_is_more_conservative() {
        let w = [5.0, 4.0, 3.0];
        assert_eq!(
            knockoff_threshold_with(&w, 0.2, ThresholdRule::Knockoff).unwrap(),
            3.0
        );
        // (1 + 0) / 3 > 0.2 at every candidate
        assert_eq!(
            knockoff_threshold_with(&w, 0.2, ThresholdRule::KnockoffPlus).unwrap(),
            f64::INFINITY
        );
    }
}
