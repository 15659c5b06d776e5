//! Wilcoxon signed-rank test for paired samples.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::StatsError;

/// Largest effective sample size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// `a` tends to exceed `b`.
    Greater,
    /// `a` tends to fall below `b`.
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub w_statistic: f64,
    pub r_plus: f64,
    pub r_minus: f64,
    pub n_effective: usize,
    pub p_value: f64,
    pub method: Method,
    pub alternative: Alternative,
    /// `p < 0.05`.
    pub reject_h0: bool,
}

/// Non-zero differences `a - b` with their average ranks by magnitude,
/// doubled so that tied half-ranks stay integral.
pub fn doubled_ranks(diffs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let mut ranks = vec![0u64; diffs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean; doubled that is i + j + 2
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

/// Number of sign assignments reaching each doubled positive-rank sum.
pub(crate) fn sign_sum_counts(ranks: &[u64]) -> Vec<f64> {
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0.0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Exact p-value from the full distribution of the positive-rank sum over
/// all `2^n` sign assignments. `t2` is the doubled observed positive sum.
pub fn exact_p_value(ranks2: &[u64], t2: u64, alternative: Alternative) -> f64 {
    let counts = sign_sum_counts(ranks2);
    let total = 2f64.powi(ranks2.len() as i32);
    let t2 = t2 as usize;
    let le: f64 = counts[..=t2].iter().sum();
    let ge: f64 = counts[t2..].iter().sum();
    let p = match alternative {
        Alternative::TwoSided => 2.0 * le.min(ge) / total,
        Alternative::Greater => ge / total,
        Alternative::Less => le / total,
    };
    p.min(1.0)
}

/// Normal approximation with tie and continuity corrections.
pub fn normal_p_value(diffs: &[f64], r_plus: f64, alternative: Alternative) -> f64 {
    let n = diffs.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut mags: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < mags.len() {
        let mut j = i;
        while j + 1 < mags.len() && mags[j + 1] == mags[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let sd = var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = match alternative {
        Alternative::TwoSided => {
            let d = r_plus - mean;
            let z = ((d.abs() - 0.5).max(0.0)) / sd;
            2.0 * normal.sf(z)
        }
        Alternative::Greater => normal.sf((r_plus - mean - 0.5) / sd),
        Alternative::Less => normal.cdf((r_plus - mean + 0.5) / sd),
    };
    p.min(1.0)
}

/// Paired signed-rank test of `a` against `b`. Zero differences are
/// dropped; the exact null distribution is used up to [`EXACT_MAX_N`]
/// remaining pairs, the normal approximation above.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alternative: Alternative) -> Result<WilcoxonResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::Empty);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(StatsError::AllDifferencesZero);
    }
    let ranks2 = doubled_ranks(&diffs);
    let t2: u64 = diffs.iter().zip(&ranks2).filter(|(d, _)| **d > 0.0).map(|(_, r)| *r).sum();
    let total2: u64 = ranks2.iter().sum();
    let r_plus = t2 as f64 / 2.0;
    let r_minus = (total2 - t2) as f64 / 2.0;
    let n = diffs.len();
    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_p_value(&ranks2, t2, alternative), Method::Exact)
    } else {
        (normal_p_value(&diffs, r_plus, alternative), Method::NormalApprox)
    };
    Ok(WilcoxonResult {
        w_statistic: r_plus.min(r_minus),
        r_plus,
        r_minus,
        n_effective: n,
        p_value,
        method,
        alternative,
        reject_h0: p_value < 0.05,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Enumerates every sign pattern directly.
    fn brute_force_p(ranks2: &[u64], t2: u64) -> f64 {
        let n = ranks2.len();
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u64..(1 << n) {
            let s: u64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| ranks2[k]).sum();
            le += u64::from(s <= t2);
            ge += u64::from(s >= t2);
        }
        (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
    }

    #[test]
    fn textbook_example() {
        let a = [1.0, -2.0, 3.0, -4.0, 5.0];
        let b = [0.0; 5];
        let r = wilcoxon_signed_rank(&a, &b, Alternative::TwoSided).unwrap();
        assert_eq!((r.r_plus, r.r_minus, r.w_statistic), (9.0, 6.0, 6.0));
        assert_eq!(r.method, Method::Exact);
        // 2^5 patterns; positive sums <= 6 occur in 12 of them
        assert_eq!(r.p_value, brute_force_p(&[2, 4, 6, 8, 10], 18));
        assert!((r.p_value - 0.8125).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_mismatch() {
        assert!(matches!(wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0], Alternative::TwoSided), Err(StatsError::AllDifferencesZero)));
        assert!(matches!(wilcoxon_signed_rank(&[1.0], &[1.0, 2.0], Alternative::TwoSided), Err(StatsError::LengthMismatch(1, 2))));
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(doubled_ranks(&[1.0, -1.0, 2.0, 3.0, -3.0]), vec![3, 3, 6, 9, 9]);
    }

    #[test]
    fn one_sided_tails_sum_past_one() {
        let a = [1.5, 2.0, -0.5, 3.0, 4.0, 0.1];
        let b = [0.0; 6];
        let g = wilcoxon_signed_rank(&a, &b, Alternative::Greater).unwrap();
        let l = wilcoxon_signed_rank(&a, &b, Alternative::Less).unwrap();
        assert!(g.p_value < l.p_value);
        assert!(g.p_value + l.p_value >= 1.0);
    }

    #[test]
    fn reference_values_from_scipy() {
        // scipy.stats.wilcoxon(a, b): statistic 75.0, pvalue 0.2773551940917969
        let a = [
            0.5365, 0.5355, 0.5311, 0.4761, 0.4577, 0.5446, 0.5114, 0.4503, 0.541, 0.5485, 0.4786, 0.5314, 0.4582,
            0.4938, 0.5318, 0.4909, 0.5018, 0.4617, 0.5314, 0.4998,
        ];
        let b = [
            0.5651, 0.526, 0.5528, 0.4794, 0.4916, 0.5703, 0.5128, 0.4749, 0.517, 0.5687, 0.444, 0.5333, 0.4745,
            0.4933, 0.5195, 0.4698, 0.4899, 0.4777, 0.5442, 0.4896,
        ];
        let r = wilcoxon_signed_rank(&a, &b, Alternative::TwoSided).unwrap();
        assert_eq!(r.w_statistic, 75.0);
        assert!((r.p_value - 0.2773551940917969).abs() < 1e-12);
        assert!(!r.reject_h0);
        let swapped = wilcoxon_signed_rank(&b, &a, Alternative::TwoSided).unwrap();
        assert_eq!((swapped.r_plus, swapped.r_minus), (r.r_minus, r.r_plus));
        assert_eq!(swapped.p_value, r.p_value);
    }
}
