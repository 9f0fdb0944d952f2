//! Per (method, reference) summary statistics over all metric scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::metrics::{MetricRow, ReferenceType};
use crate::prompting::PromptMethod;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveRow {
    pub method: PromptMethod,
    pub reference_type: ReferenceType,
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single score.
    pub std: f64,
    pub n: usize,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the n − 1 denominator; 0 when n < 2.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// One row per (reference, method) present, Abstract first, methods in
/// reporting order.
pub fn descriptive_stats(rows: &[MetricRow]) -> Vec<DescriptiveRow> {
    let mut cells: BTreeMap<(ReferenceType, PromptMethod), Vec<f64>> = BTreeMap::new();
    for r in rows {
        cells
            .entry((r.reference_type, r.method))
            .or_default()
            .push(r.score);
    }
    cells
        .into_iter()
        .map(|((reference_type, method), scores)| DescriptiveRow {
            method,
            reference_type,
            mean: mean(&scores),
            std: sample_std(&scores),
            n: scores.len(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert_eq!(mean(&[0.0, 1.0]), 0.5);
        assert!((sample_std(&[0.0, 1.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(sample_std(&[0.5; 4]), 0.0);
        assert_eq!(sample_std(&[0.5]), 0.0);
    }
}
