use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Largest sample size for which the exact null distribution is used.
pub const EXACT_LIMIT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of positive differences.
    pub w_plus: f64,
    /// Non-zero differences.
    pub n: usize,
    pub p: f64,
    /// Exact two-sided p as `numerator / 2^n`, when the exact method ran.
    pub exact: Option<(u64, u32)>,
}

/// Mid-ranks of `values` (1-based), ties sharing the mean of their ranks.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped and tied magnitudes get mid-ranks. Up to
/// [`EXACT_LIMIT`] pairs the p-value comes from the exact sign-flip
/// distribution; beyond that a tie-corrected normal approximation with
/// continuity correction is used. All-zero differences give `p = 1`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> WilcoxonResult {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        log::warn!("all paired differences are zero; reporting p = 1");
        return WilcoxonResult {
            w_plus: 0.0,
            n: 0,
            p: 1.0,
            exact: Some((1, 0)),
        };
    }
    let mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = mid_ranks(&mags);
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();

    if n <= EXACT_LIMIT {
        // doubled mid-ranks are integers
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        let observed = (w_plus * 2.0).round() as usize;
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0u64; total + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let le: u64 = counts[..=observed].iter().sum();
        let ge: u64 = counts[observed..].iter().sum();
        let denom = 1u64 << n;
        let num = (2 * le.min(ge)).min(denom);
        return WilcoxonResult {
            w_plus,
            n,
            p: num as f64 / denom as f64,
            exact: Some((num, n as u32)),
        };
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = mags.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let diff = w_plus - mean;
    let z = if var > 0.0 {
        (diff.abs() - 0.5).max(0.0) / var.sqrt()
    } else {
        0.0
    };
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = (2.0 * (1.0 - normal.cdf(z))).min(1.0);
    WilcoxonResult {
        w_plus,
        n,
        p,
        exact: None,
    }
}

/// Bonferroni correction `min(1, p * m)`.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    assert!(m >= 1, "need at least one hypothesis");
    (p * m as f64).min(1.0)
}
