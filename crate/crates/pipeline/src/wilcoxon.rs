//! Wilcoxon signed-rank test for paired per-case scores.
//!
//! Two-sided. Zero differences are dropped; tied absolute differences get
//! average ranks. Up to 25 effective pairs the p-value comes from the
//! exact conditional null distribution (counting sign assignments by
//! rank-sum with integer arithmetic over doubled ranks); above that, the
//! normal approximation with tie and continuity correction.

use craniaug_core::normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("paired inputs must have equal lengths, got {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 6 non-zero differences, got {0}")]
    InsufficientData(usize),
}

/// Largest effective n handled by the exact distribution.
pub const WILCOXON_EXACT_LIMIT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    /// W+: the rank sum of the positive differences y - x. Swapping the
    /// inputs maps W+ to W- (effect direction flips); the p-value is
    /// unchanged.
    pub statistic: f64,
    /// Two-sided probability under the signed-rank null.
    pub p_value: f64,
    /// Pairs remaining after zero differences are removed.
    pub n_effective: usize,
}

/// Average ranks of |d| ascending, ties averaged. Returns doubled ranks
/// (always integers, since average ranks are multiples of 1/2).
fn doubled_ranks(abs_diffs: &[f64]) -> Vec<u64> {
    let n = abs_diffs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| abs_diffs[a].total_cmp(&abs_diffs[b]));
    let mut ranks2 = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && abs_diffs[order[j + 1]] == abs_diffs[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) tie: average rank = (i + j) / 2 + 1,
        // doubled = i + j + 2.
        let r2 = (i + j + 2) as u64;
        for &idx in &order[i..=j] {
            ranks2[idx] = r2;
        }
        i = j + 1;
    }
    ranks2
}

/// Exact two-sided p for the observed doubled W+ given the doubled ranks:
/// (#assignments with W+ <= w_min) + (#assignments with W+ >= w_max), over
/// 2^n, where w_min/w_max are the smaller/larger of (W+, W-).
fn exact_p(ranks2: &[u64], w2_plus: u64) -> f64 {
    let n = ranks2.len();
    let total2: u64 = ranks2.iter().sum();
    let w2_min = w2_plus.min(total2 - w2_plus);
    let w2_max = total2 - w2_min;

    // counts[s] = number of sign assignments whose positive-rank doubled
    // sum is s.
    let mut counts = vec![0u64; total2 as usize + 1];
    counts[0] = 1;
    for &r in ranks2 {
        for s in (r as usize..counts.len()).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    let below: u64 = counts[..=w2_min as usize].iter().sum();
    let above: u64 = counts[w2_max as usize..].iter().sum();
    // When W+ == W- the two tails share the midpoint; count it once.
    let overlap: u64 = if w2_max <= w2_min {
        counts[w2_max as usize..=w2_min as usize].iter().sum()
    } else {
        0
    };
    (below + above - overlap) as f64 / 2f64.powi(n as i32)
}

/// Normal approximation with tie correction and a 0.5 continuity
/// correction toward the mean.
fn approx_p(ranks2: &[u64], w2_plus: u64) -> f64 {
    let n = ranks2.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
    // Tie groups: count multiplicities of each doubled rank.
    let mut sorted = ranks2.to_vec();
    sorted.sort_unstable();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        var -= (t * t * t - t) / 48.0;
        i = j + 1;
    }
    if var <= 0.0 {
        // All differences tie to one value; the statistic is degenerate.
        return 1.0;
    }
    let total2: u64 = ranks2.iter().sum();
    let w_min = (w2_plus.min(total2 - w2_plus)) as f64 / 2.0;
    let z = (w_min - mean + 0.5) / var.sqrt();
    (2.0 * normal::cdf(z)).clamp(0.0, 1.0)
}

/// Two-sided Wilcoxon signed-rank test on paired scores, differences taken
/// as y - x.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<ComparisonResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| b - a)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n < 6 {
        return Err(StatsError::InsufficientData(n));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks2 = doubled_ranks(&abs);
    let w2_plus: u64 = ranks2
        .iter()
        .zip(&diffs)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&r, _)| r)
        .sum();

    let p_value = if n <= WILCOXON_EXACT_LIMIT {
        exact_p(&ranks2, w2_plus)
    } else {
        approx_p(&ranks2, w2_plus)
    };
    Ok(ComparisonResult {
        statistic: w2_plus as f64 / 2.0,
        p_value,
        n_effective: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use craniaug_core::rng::RngState;

    /// Full sign enumeration over 2^n assignments with the same doubled
    /// integer ranks: the independent reference for the exact path.
    pub(crate) fn enumeration_p(ranks2: &[u64], w2_plus: u64) -> f64 {
        let n = ranks2.len();
        let total2: u64 = ranks2.iter().sum();
        let w2_min = w2_plus.min(total2 - w2_plus);
        let w2_max = total2 - w2_min;
        let mut hits = 0u64;
        for mask in 0u64..(1u64 << n) {
            let mut s = 0u64;
            for (i, &r) in ranks2.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    s += r;
                }
            }
            if s <= w2_min || s >= w2_max {
                hits += 1;
            }
        }
        hits as f64 / 2f64.powi(n as i32)
    }

    #[test]
    fn constant_shift_n10_is_2_over_1024() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 1.5).collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(r.n_effective, 10);
        assert_eq!(r.statistic, 55.0);
        assert!(
            (r.p_value - 2.0 / 1024.0).abs() < 1e-15,
            "p = {}",
            r.p_value
        );
    }

    #[test]
    fn all_zero_differences_error() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        match wilcoxon_signed_rank(&x, &x) {
            Err(StatsError::InsufficientData(0)) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn length_mismatch_is_reported() {
        let x = vec![1.0; 5];
        let y = vec![1.0; 6];
        assert!(matches!(
            wilcoxon_signed_rank(&x, &y),
            Err(StatsError::LengthMismatch(5, 6))
        ));
    }

    #[test]
    fn swap_preserves_p_and_flips_statistic() {
        let mut rng = RngState::new(70);
        for _ in 0..20 {
            let n = 8 + rng.uniform_usize(10);
            let x: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 1.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| v + rng.uniform(-0.2, 0.4)).collect();
            let Ok(a) = wilcoxon_signed_rank(&x, &y) else {
                continue;
            };
            let b = wilcoxon_signed_rank(&y, &x).unwrap();
            assert_eq!(a.p_value, b.p_value);
            let total = a.n_effective * (a.n_effective + 1) / 2;
            assert_eq!(a.statistic + b.statistic, total as f64);
        }
    }

    #[test]
    fn exact_path_matches_enumeration_with_and_without_ties() {
        let mut rng = RngState::new(71);
        for trial in 0..60 {
            let n = 6 + rng.uniform_usize(7); // 6..=12
            let x: Vec<f64> = (0..n).map(|_| rng.uniform_usize(6) as f64).collect();
            let y: Vec<f64> = x
                .iter()
                .map(|v| v + rng.uniform_usize(7) as f64 - 3.0)
                .collect();
            let diffs: Vec<f64> = x
                .iter()
                .zip(&y)
                .map(|(&a, &b)| b - a)
                .filter(|d| *d != 0.0)
                .collect();
            if diffs.len() < 6 {
                continue;
            }
            let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
            let ranks2 = doubled_ranks(&abs);
            let w2: u64 = ranks2
                .iter()
                .zip(&diffs)
                .filter(|(_, &d)| d > 0.0)
                .map(|(&r, _)| r)
                .sum();
            let expected = enumeration_p(&ranks2, w2);
            let got = wilcoxon_signed_rank(&x, &y).unwrap().p_value;
            assert_eq!(got, expected, "trial {trial}: n={n}");
        }
    }

    #[test]
    fn approx_path_reasonable_for_large_n() {
        // n = 40 with a clear shift: p must be far below 0.01 and within
        // [0, 1].
        let mut rng = RngState::new(72);
        let x: Vec<f64> = (0..40).map(|_| rng.uniform(0.0, 1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 0.5 + rng.uniform(0.0, 0.1)).collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert!(r.p_value < 1e-6, "p = {}", r.p_value);

        // Exchangeable pairs: p should not be tiny.
        let x: Vec<f64> = (0..40).map(|_| rng.uniform(0.0, 1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.uniform(-0.1, 0.1)).collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert!(r.p_value > 0.001);
        assert!(r.p_value <= 1.0);
    }

    #[test]
    fn exact_and_approx_agree_near_the_boundary() {
        // At n = 25 the exact path runs; the approximation should land
        // within a few percent absolute.
        let mut rng = RngState::new(73);
        let x: Vec<f64> = (0..25).map(|_| rng.uniform(0.0, 1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.uniform(-0.15, 0.25)).collect();
        let diffs: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(&a, &b)| b - a)
            .filter(|d| *d != 0.0)
            .collect();
        let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
        let ranks2 = doubled_ranks(&abs);
        let w2: u64 = ranks2
            .iter()
            .zip(&diffs)
            .filter(|(_, &d)| d > 0.0)
            .map(|(&r, _)| r)
            .sum();
        let exact = exact_p(&ranks2, w2);
        let approx = approx_p(&ranks2, w2);
        assert!(
            (exact - approx).abs() < 0.03,
            "exact {exact} vs approx {approx}"
        );
    }
}
