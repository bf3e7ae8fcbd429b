use knockoff_core::selection::{
    knockoff_threshold, knockoff_threshold_with, select, ThresholdRule,
};
use proptest::prelude::*;

/// Scans every candidate magnitude and recounts from scratch.
fn brute_force(w: &[f64], q: f64, offset: usize) -> f64 {
    let mut best = f64::INFINITY;
    for t in w.iter().map(|v| v.abs()).filter(|t| *t > 0.0) {
        let pos = w.iter().filter(|v| **v >= t).count();
        let neg = w.iter().filter(|v| **v <= -t).count();
        if (neg + offset) as f64 / pos.max(1) as f64 <= q && t < best {
            best = t;
        }
    }
    best
}

// values on a coarse grid so ties and zeros are common
fn w_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-12i32..=12).prop_map(|k| k as f64 / 4.0), 1..=50)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn threshold_matches_enumeration(w in w_vec(), q in 0.01f64..0.99) {
        prop_assert_eq!(knockoff_threshold(&w, q).unwrap(), brute_force(&w, q, 0));
        prop_assert_eq!(
            knockoff_threshold_with(&w, q, ThresholdRule::KnockoffPlus).unwrap(),
            brute_force(&w, q, 1)
        );
    }

    #[test]
    fn threshold_is_nonincreasing_in_q(w in w_vec(), a in 0.01f64..0.99, b in 0.01f64..0.99) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(knockoff_threshold(&w, hi).unwrap() <= knockoff_threshold(&w, lo).unwrap());
    }

    #[test]
    fn selection_is_permutation_equivariant(w in w_vec(), q in 0.05f64..0.5, seed in any::<u64>()) {
        let n = w.len();
        let mut perm: Vec<usize> = (0..n).collect();
        // deterministic shuffle from the seed
        let mut state = seed | 1;
        for i in (1..n).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            perm.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let permuted: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
        let a = select(&w, q, None).unwrap();
        let b = select(&permuted, q, None).unwrap();
        prop_assert_eq!(a.threshold, b.threshold);
        let mut mapped: Vec<usize> = b.selected.iter().map(|&k| perm[k]).collect();
        mapped.sort_unstable();
        prop_assert_eq!(a.selected, mapped);
    }

    #[test]
    fn threshold_scales_with_w(w in w_vec(), q in 0.05f64..0.9, c in 0.1f64..10.0) {
        let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
        let a = knockoff_threshold(&w, q).unwrap();
        let b = knockoff_threshold(&scaled, q).unwrap();
        if a.is_finite() {
            prop_assert!((b - a * c).abs() <= 1e-12 * b.abs());
        } else {
            prop_assert!(b.is_infinite());
        }
    }
}
