//! BCa bootstrap confidence interval for the median.
//!
//! Replicates are medians of resamples drawn with replacement. The default
//! resampler is ChaCha8 seeded with the cell seed; each index is
//! `bounded_draw(next_u64(), n)`, drawn resample by resample, position by
//! position.
//!
//! * `z0 = Φ⁻¹(p)`, `p` = (replicates below the observed median + half of
//!   those equal to it) / B, clamped to `[1/(2B), 1 - 1/(2B)]`.
//! * `a = Σ(θ̄ − θᵢ)³ / (6 [Σ(θ̄ − θᵢ)²]^{3/2})` over leave-one-out medians.
//! * `α_j = Φ(z0 + (z0 + z_j) / (1 − a (z0 + z_j)))` for
//!   `z_j = Φ⁻¹((1 ∓ level)/2)`.
//! * An endpoint at level `q` is the sorted replicate at index
//!   `ceil(q·B) − 1`, with `q·B` snapped to the nearest integer when within
//!   1e-9 of it.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dist::{normal_cdf, normal_quantile};
use super::StatsError;
use crate::seed::bounded_draw;

pub const DEFAULT_REPLICATES: usize = 10_000;
pub const DEFAULT_LEVEL: f64 = 0.95;
pub const MIN_REPLICATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcaInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub b_replicates: usize,
    pub seed: u64,
    pub z0: f64,
    pub accel: f64,
    /// All replicates were equal; the interval collapses to the estimate.
    pub degenerate: bool,
}

impl BcaInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Point interval at `value`, used when no resampling is possible.
    pub fn point(value: f64, level: f64, b_replicates: usize, seed: u64) -> Self {
        BcaInterval {
            lower: value,
            upper: value,
            level,
            b_replicates,
            seed,
            z0: 0.0,
            accel: 0.0,
            degenerate: true,
        }
    }
}

/// Forced bias correction and acceleration, for testing the interval formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcaOverride {
    pub z0: f64,
    pub accel: f64,
}

/// Source of resample indices.
pub trait Resampler {
    /// Fills `out` with indices in `0..n`.
    fn draw(&mut self, n: usize, out: &mut [usize]);
}

pub struct ChaChaResampler(ChaCha8Rng);

impl ChaChaResampler {
    pub fn new(seed: u64) -> Self {
        ChaChaResampler(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl Resampler for ChaChaResampler {
    fn draw(&mut self, n: usize, out: &mut [usize]) {
        for o in out {
            *o = bounded_draw(self.0.next_u64(), n);
        }
    }
}

/// Walks every index tuple in `0..n` to the power `n`, in lexicographic
/// order, wrapping after the last one. With `B = n^n` every resample occurs
/// exactly once.
#[derive(Debug, Default)]
pub struct ExhaustiveResampler {
    next: u64,
}

impl Resampler for ExhaustiveResampler {
    fn draw(&mut self, n: usize, out: &mut [usize]) {
        let mut c = self.next;
        for o in out.iter_mut().rev() {
            *o = (c % n as u64) as usize;
            c /= n as u64;
        }
        self.next += 1;
    }
}

/// Median; averages the two middle values for even lengths. Reorders `values`.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    assert!(n > 0, "median of an empty slice");
    let mid = n / 2;
    let (lo, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if n % 2 == 1 {
        upper
    } else {
        let lower = lo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    }
}

pub fn median(values: &[f64]) -> f64 {
    median_in_place(&mut values.to_vec())
}

/// Medians of `b` resamples of `data`.
pub fn bootstrap_medians(data: &[f64], b: usize, resampler: &mut dyn Resampler) -> Vec<f64> {
    let n = data.len();
    let mut idx = vec![0usize; n];
    let mut buf = vec![0.0; n];
    (0..b)
        .map(|_| {
            resampler.draw(n, &mut idx);
            for (v, &i) in buf.iter_mut().zip(&idx) {
                *v = data[i];
            }
            median_in_place(&mut buf)
        })
        .collect()
}

/// Jackknife acceleration of the median; 0 when all leave-one-out medians agree.
pub fn jackknife_accel(data: &[f64]) -> f64 {
    let n = data.len();
    let thetas: Vec<f64> = (0..n)
        .map(|i| {
            let mut rest: Vec<f64> = data
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &v)| v)
                .collect();
            median_in_place(&mut rest)
        })
        .collect();
    let mean = thetas.iter().sum::<f64>() / n as f64;
    let (mut s2, mut s3) = (0.0, 0.0);
    for t in &thetas {
        let d = mean - t;
        s2 += d * d;
        s3 += d * d * d;
    }
    if s2 == 0.0 {
        0.0
    } else {
        s3 / (6.0 * s2.powf(1.5))
    }
}

/// `Φ⁻¹` of the tie-aware fraction of replicates below `observed`.
pub fn bias_correction(replicates: &[f64], observed: f64) -> f64 {
    let b = replicates.len() as f64;
    let below = replicates.iter().filter(|&&r| r < observed).count() as f64;
    let ties = replicates.iter().filter(|&&r| r == observed).count() as f64;
    let p = ((below + 0.5 * ties) / b).clamp(0.5 / b, 1.0 - 0.5 / b);
    normal_quantile(p)
}

/// Index into `b` sorted replicates for level `q`.
pub fn percentile_index(q: f64, b: usize) -> usize {
    let mut t = q * b as f64;
    if (t - t.round()).abs() < 1e-9 {
        t = t.round();
    }
    let idx = t.ceil() as i64 - 1;
    idx.clamp(0, b as i64 - 1) as usize
}

/// Plain percentile interval of sorted replicates.
pub fn percentile_interval(sorted: &[f64], level: f64) -> (f64, f64) {
    let alpha = (1.0 - level) / 2.0;
    let b = sorted.len();
    (
        sorted[percentile_index(alpha, b)],
        sorted[percentile_index(1.0 - alpha, b)],
    )
}

fn adjusted_level(z0: f64, accel: f64, z: f64) -> f64 {
    let s = z0 + z;
    let den = 1.0 - accel * s;
    if den <= 0.0 {
        return if s > 0.0 { 1.0 } else { 0.0 };
    }
    normal_cdf(z0 + s / den)
}

fn check_inputs(data: &[f64], level: f64) -> Result<(), StatsError> {
    if data.len() < 2 {
        return Err(StatsError::TooFewSamples {
            needed: 2,
            got: data.len(),
        });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidLevel(level));
    }
    Ok(())
}

/// BCa interval from precomputed replicates (any order).
pub fn bca_from_replicates(
    data: &[f64],
    replicates: &[f64],
    level: f64,
    seed: u64,
    hook: Option<BcaOverride>,
) -> Result<BcaInterval, StatsError> {
    check_inputs(data, level)?;
    if replicates.is_empty() {
        return Err(StatsError::TooFewReplicates { needed: 1, got: 0 });
    }
    let b = replicates.len();
    let observed = median(data);
    if replicates.iter().all(|&r| r == replicates[0]) {
        return Ok(BcaInterval::point(observed, level, b, seed));
    }
    let (z0, accel) = match hook {
        Some(o) => (o.z0, o.accel),
        None => (bias_correction(replicates, observed), jackknife_accel(data)),
    };
    let alpha = (1.0 - level) / 2.0;
    let a1 = adjusted_level(z0, accel, normal_quantile(alpha));
    let a2 = adjusted_level(z0, accel, normal_quantile(1.0 - alpha));
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(BcaInterval {
        lower: sorted[percentile_index(a1, b)],
        upper: sorted[percentile_index(a2, b)],
        level,
        b_replicates: b,
        seed,
        z0,
        accel,
        degenerate: false,
    })
}

/// BCa interval with an explicit resampler and optional override; also
/// returns the replicates for auditing.
pub fn bca_interval_with(
    data: &[f64],
    b: usize,
    level: f64,
    seed: u64,
    resampler: &mut dyn Resampler,
    hook: Option<BcaOverride>,
) -> Result<(BcaInterval, Vec<f64>), StatsError> {
    check_inputs(data, level)?;
    if b == 0 {
        return Err(StatsError::TooFewReplicates { needed: 1, got: 0 });
    }
    let replicates = bootstrap_medians(data, b, resampler);
    let interval = bca_from_replicates(data, &replicates, level, seed, hook)?;
    Ok((interval, replicates))
}

/// BCa interval of the median with `b` ChaCha8 resamples seeded by `seed`.
pub fn bca_interval(
    data: &[f64],
    b: usize,
    level: f64,
    seed: u64,
) -> Result<BcaInterval, StatsError> {
    if b < MIN_REPLICATES {
        return Err(StatsError::TooFewReplicates {
            needed: MIN_REPLICATES,
            got: b,
        });
    }
    let mut resampler = ChaChaResampler::new(seed);
    Ok(bca_interval_with(data, b, level, seed, &mut resampler, None)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[7.0]), 7.0);
    }

    #[test]
    fn constant_data_is_degenerate() {
        let iv = bca_interval(&[0.3; 10], 1000, 0.95, 1).unwrap();
        assert!(iv.degenerate);
        assert_eq!((iv.lower, iv.upper), (0.3, 0.3));
    }

    #[test]
    fn preconditions() {
        assert!(bca_interval(&[1.0], 1000, 0.95, 1).is_err());
        assert!(bca_interval(&[1.0, 2.0], 99, 0.95, 1).is_err());
        assert!(bca_interval(&[1.0, 2.0], 1000, 1.0, 1).is_err());
    }

    #[test]
    fn percentile_indices() {
        assert_eq!(percentile_index(0.025, 10_000), 249);
        assert_eq!(percentile_index(0.975, 10_000), 9749);
        assert_eq!(percentile_index(0.0, 10), 0);
        assert_eq!(percentile_index(1.0, 10), 9);
        assert_eq!(percentile_index(0.5 + 1e-12, 10), 4);
    }

    #[test]
    fn exhaustive_resampler_order() {
        let mut r = ExhaustiveResampler::default();
        let mut out = [0usize; 2];
        let mut seen = Vec::new();
        for _ in 0..4 {
            r.draw(2, &mut out);
            seen.push(out);
        }
        assert_eq!(seen, [[0, 0], [0, 1], [1, 0], [1, 1]]);
    }

    #[test]
    fn same_seed_same_interval() {
        let data: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = bca_interval(&data, 2000, 0.95, 42).unwrap();
        let b = bca_interval(&data, 2000, 0.95, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.lower <= a.upper);
    }
}
