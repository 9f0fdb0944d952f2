//! Two-sided Wilcoxon signed-rank test.
//!
//! Exact zeros are dropped first. With at most [`EXACT_MAX_N`] non-zero
//! differences and no tied magnitudes, the p-value comes from the exact null
//! distribution of `W+` (subset-sum counts over ranks 1..n). Otherwise the
//! normal approximation is used with the tie-corrected variance and a 0.5
//! continuity correction toward the mean.

use serde::{Deserialize, Serialize};

use super::dist::normal_sf;
use super::StatsError;

pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences.
    pub statistic: f64,
    pub p_value: f64,
    /// Differences left after dropping zeros.
    pub n: usize,
    pub exact: bool,
}

/// Average ranks (1-based) of `values`; equal values share their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
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

/// Null distribution of `W+` for n untied ranks: `counts[w]` sign
/// assignments give `W+ = w`, out of `2^n`.
pub fn exact_counts(n: usize) -> Vec<u64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for r in 1..=n {
        for w in (r..=max).rev() {
            counts[w] += counts[w - r];
        }
    }
    counts
}

fn exact_p(w_plus: f64, n: usize) -> f64 {
    let counts = exact_counts(n);
    let total = 2f64.powi(n as i32);
    let w = w_plus.round() as usize;
    let lower: u64 = counts[..=w].iter().sum();
    let upper: u64 = counts[w..].iter().sum();
    (2.0 * lower.min(upper) as f64 / total).min(1.0)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn wilcoxon_signed_rank(deltas: &[f64]) -> Result<WilcoxonResult, StatsError> {
    if deltas.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let nonzero: Vec<f64> = deltas.iter().copied().filter(|&d| d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(StatsError::AllZero);
    }
    let n = nonzero.len();
    let mags: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&mags);
    let w_plus: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    let mut sorted = mags.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }

    if n <= EXACT_MAX_N && tie_term == 0.0 {
        return Ok(WilcoxonResult {
            statistic: w_plus,
            p_value: exact_p(w_plus, n),
            n,
            exact: true,
        });
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let diff = w_plus - mean;
    let p_value = if var <= 0.0 {
        1.0
    } else {
        // Continuity correction as in R and SciPy: shift by 0.5 * sign(diff).
        let z = (diff - 0.5 * sign(diff)).abs() / var.sqrt();
        (2.0 * normal_sf(z)).min(1.0)
    };
    Ok(WilcoxonResult {
        statistic: w_plus,
        p_value,
        n,
        exact: false,
    })
}
