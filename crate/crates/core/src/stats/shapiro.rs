//! Shapiro–Wilk normality test, Royston's approximation (algorithm AS R94).
//!
//! Coefficients come from polynomial approximations in `1/sqrt(n)`; the
//! p-value from a normalising transform of `ln(1 - W)` whose mean and spread
//! are polynomials in `n` (n ≤ 11) or `ln n` (n ≥ 12). For n = 3 the exact
//! distribution is used.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::dist::{normal_quantile, normal_sf};
use super::StatsError;

/// Coefficient table version; bump if any constant below changes.
pub const TABLE_VERSION: u32 = 1;

const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

pub const MIN_N: usize = 3;
pub const MAX_N: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapiroResult {
    pub w: f64,
    pub p_value: f64,
}

/// `c[0] + c[1] x + c[2] x^2 + ...`
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

/// Upper-half coefficients `a[0..n/2]`, largest first.
fn coefficients(n: usize) -> Vec<f64> {
    let half = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let an25 = n as f64 + 0.25;
    let m: Vec<f64> = (1..=half)
        .map(|i| normal_quantile((i as f64 - 0.375) / an25))
        .collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / (n as f64).sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;
    let mut a = vec![0.0; half];
    a[0] = a1;
    let (first_free, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        a[1] = a2;
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    for i in first_free..half {
        a[i] = -m[i] / fac;
    }
    a
}

pub fn shapiro_wilk(x: &[f64]) -> Result<ShapiroResult, StatsError> {
    let n = x.len();
    if !(MIN_N..=MAX_N).contains(&n) {
        return Err(StatsError::SampleSize {
            min: MIN_N,
            max: MAX_N,
            got: n,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let range = sorted[n - 1] - sorted[0];
    if range < 1e-19 {
        return Err(StatsError::ZeroVariance);
    }
    let half = coefficients(n);
    // Antisymmetric full coefficient vector, lowest order statistic first.
    let full: Vec<f64> = (0..n)
        .map(|i| {
            let j = n - 1 - i;
            match i.cmp(&j) {
                std::cmp::Ordering::Less => -half[i],
                std::cmp::Ordering::Greater => half[j],
                std::cmp::Ordering::Equal => 0.0,
            }
        })
        .collect();
    // W as the squared correlation of coefficients and scaled data.
    let xs: Vec<f64> = sorted.iter().map(|v| v / range).collect();
    let mean_a = full.iter().sum::<f64>() / n as f64;
    let mean_x = xs.iter().sum::<f64>() / n as f64;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (a, v) in full.iter().zip(&xs) {
        let (da, dx) = (a - mean_a, v - mean_x);
        ssa += da * da;
        ssx += dx * dx;
        sax += da * dx;
    }
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = 1.0 - w1;

    if n == 3 {
        // Exact: P = (6/pi) (asin(sqrt(W)) - asin(sqrt(3/4))).
        let p = (6.0 / PI) * (w.sqrt().asin() - (0.75f64).sqrt().asin());
        return Ok(ShapiroResult {
            w,
            p_value: p.clamp(0.0, 1.0),
        });
    }
    let nf = n as f64;
    let mut y = w1.ln();
    let (m, s) = if n <= 11 {
        let gamma = poly(&G, nf);
        if y >= gamma {
            return Ok(ShapiroResult { w, p_value: 1e-99 });
        }
        y = -(gamma - y).ln();
        (poly(&C3, nf), poly(&C4, nf).exp())
    } else {
        let ln_n = nf.ln();
        (poly(&C5, ln_n), poly(&C6, ln_n).exp())
    };
    Ok(ShapiroResult {
        w,
        p_value: normal_sf((y - m) / s),
    })
}
