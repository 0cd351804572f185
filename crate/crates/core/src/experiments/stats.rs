//! Two-sample Wilcoxon rank-sum (Mann–Whitney U) test.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankSumResult {
    /// U statistic of the first sample.
    pub u_statistic: f64,
    pub z_score: f64,
    /// Two-sided normal-approximation p-value.
    pub p_value: f64,
}

/// Rank-sum test with midranks and tie-corrected variance, without
/// continuity correction.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<RankSumResult> {
    rank_sum_test_with(a, b, false)
}

/// As [`rank_sum_test`]; `continuity` shrinks `|U − μ|` by one half before
/// standardising.
pub fn rank_sum_test_with(a: &[f64], b: &[f64], continuity: bool) -> Result<RankSumResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("sample", "both samples must be non-empty"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("sample", "values must be finite"));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;

    let mut pooled: Vec<(f64, bool)> = a.iter().map(|v| (*v, true)).chain(b.iter().map(|v| (*v, false))).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_a += midrank * pooled[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }

    let u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if !(var > 0.0) {
        return Ok(RankSumResult { u_statistic: u, z_score: 0.0, p_value: 1.0 });
    }
    let mut diff = u - mean;
    if continuity {
        diff = diff.signum() * (diff.abs() - 0.5).max(0.0);
    }
    let z = diff / var.sqrt();
    let normal = Normal::standard();
    let p = (2.0 * normal.cdf(-z.abs())).min(1.0);
    Ok(RankSumResult { u_statistic: u, z_score: z, p_value: p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separated_triples() {
        let r = rank_sum_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u_statistic, 0.0);
        assert!((r.z_score + 1.964).abs() < 1e-3, "{}", r.z_score);
        assert!((r.p_value - 0.0495).abs() < 1e-4, "{}", r.p_value);
        // Continuity correction moves p towards the exact permutation value.
        let c = rank_sum_test_with(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], true).unwrap();
        assert!(c.p_value > r.p_value);
    }

    #[test]
    fn identical_samples() {
        let s = [3.0, 1.0, 4.0, 1.0, 5.0];
        let r = rank_sum_test(&s, &s).unwrap();
        assert_eq!(r.u_statistic, 12.5);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let c = rank_sum_test(&[2.0; 4], &[2.0; 3]).unwrap();
        assert_eq!(c.p_value, 1.0);
        assert!(rank_sum_test(&[], &[1.0]).is_err());
    }

    #[test]
    fn exact_permutation_oracle_for_small_samples() {
        // Enumerate all splits of the pooled ranks and count those with
        // |U − μ| at least as extreme as observed.
        let a = [1.0, 4.0, 5.0, 9.0];
        let b = [2.0, 3.0, 6.0, 7.0, 8.0];
        let r = rank_sum_test(&a, &b).unwrap();
        let pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
        let u_of = |mask: u32| -> f64 {
            let mut u = 0.0;
            for i in 0..9 {
                for j in 0..9 {
                    if mask >> i & 1 == 1 && mask >> j & 1 == 0 && pooled[i] > pooled[j] {
                        u += 1.0;
                    }
                }
            }
            u
        };
        let observed = u_of(0b1111);
        assert_eq!(observed, r.u_statistic);
        let (mut extreme, mut total) = (0, 0);
        for mask in 0u32..512 {
            if mask.count_ones() == 4 {
                total += 1;
                if (u_of(mask) - 10.0).abs() >= (observed - 10.0).abs() {
                    extreme += 1;
                }
            }
        }
        let exact = extreme as f64 / total as f64;
        assert!((r.p_value - exact).abs() < 0.1, "normal {} exact {}", r.p_value, exact);
    }

    proptest! {
        #[test]
        fn swapping_samples_reflects_u(a in prop::collection::vec(0u8..20, 1..15), b in prop::collection::vec(0u8..20, 1..15)) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = rank_sum_test(&a, &b).unwrap();
            let ba = rank_sum_test(&b, &a).unwrap();
            prop_assert!((ab.u_statistic + ba.u_statistic - (a.len() * b.len()) as f64).abs() < 1e-9);
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab.p_value));
        }

        #[test]
        fn p_decreases_with_separation(shift in 0.0f64..10.0, extra in 0.1f64..5.0) {
            let a: Vec<f64> = (0..8).map(|i| i as f64).collect();
            let b1: Vec<f64> = a.iter().map(|v| v + shift).collect();
            let b2: Vec<f64> = a.iter().map(|v| v + shift + extra).collect();
            let r1 = rank_sum_test(&a, &b1).unwrap();
            let r2 = rank_sum_test(&a, &b2).unwrap();
            prop_assert!(r2.z_score.abs() >= r1.z_score.abs() - 1e-12);
            prop_assert!(r2.p_value <= r1.p_value + 1e-12);
        }
    }
}
