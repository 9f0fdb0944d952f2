//! Levene's test for equal variances, median-centred (Brown–Forsythe).

use serde::{Deserialize, Serialize};

use super::bootstrap::median;
use super::dist::f_sf;
use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeveneResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
}

pub fn levene_test(groups: &[Vec<f64>]) -> Result<LeveneResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(StatsError::TooFewSamples {
            needed: 2,
            got: g.len(),
        });
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let k = groups.len();
    let total: usize = groups.iter().map(Vec::len).sum();
    let z: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let m = median(g);
            g.iter().map(|v| (v - m).abs()).collect()
        })
        .collect();
    let means: Vec<f64> = z
        .iter()
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .collect();
    let grand = z.iter().flatten().sum::<f64>() / total as f64;
    let between: f64 = z
        .iter()
        .zip(&means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let within: f64 = z
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let (df1, df2) = (k - 1, total - k);
    if within == 0.0 {
        if between == 0.0 {
            return Ok(LeveneResult {
                statistic: 0.0,
                p_value: 1.0,
                df_between: df1,
                df_within: df2,
            });
        }
        return Err(StatsError::ZeroVariance);
    }
    let statistic = (df2 as f64 / df1 as f64) * between / within;
    Ok(LeveneResult {
        statistic,
        p_value: f_sf(statistic, df1 as f64, df2 as f64),
        df_between: df1,
        df_within: df2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_groups() {
        let g = vec![1.0, 2.0, 4.0, 7.0];
        let r = levene_test(&[g.clone(), g]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn preconditions() {
        assert!(matches!(
            levene_test(&[vec![1.0, 2.0]]),
            Err(StatsError::TooFewGroups(1))
        ));
        assert!(levene_test(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }
}
