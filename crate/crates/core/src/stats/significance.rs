//! Paired comparisons against the baseline and the dual-test verdict.
//!
//! A cell is one (method, metric, reference) combination with a non-baseline
//! method. Its Wilcoxon p-value is Holm-adjusted within a family of cells;
//! it counts as significant only if the adjusted p is below `alpha` and the
//! BCa interval of the median difference excludes 0.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bootstrap::{
    bca_interval_with, median, BcaInterval, ChaChaResampler, DEFAULT_LEVEL, DEFAULT_REPLICATES,
    MIN_REPLICATES,
};
use super::holm::holm_correction;
use super::levene::levene_test;
use super::shapiro::shapiro_wilk;
use super::wilcoxon::wilcoxon_signed_rank;
use super::StatsError;
use crate::metrics::{MetricName, MetricRow, ReferenceType};
use crate::prompting::PromptMethod;
use crate::seed::derive_seed;

/// Differences `S(method) − S(baseline)` for one cell, ordered by pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub method: PromptMethod,
    pub metric: MetricName,
    pub reference_type: ReferenceType,
    pub deltas: Vec<f64>,
    /// `(paper_id, llm_id)` per delta.
    pub pair_labels: Vec<(String, String)>,
}

pub fn paired_differences(
    rows: &[MetricRow],
    method: PromptMethod,
    metric: MetricName,
    reference_type: ReferenceType,
) -> Result<PairedSample, StatsError> {
    // (paper, llm) -> (method score, baseline score)
    type Pair = (Option<f64>, Option<f64>);
    let mut scores: BTreeMap<(&str, &str), Pair> = BTreeMap::new();
    for r in rows
        .iter()
        .filter(|r| r.metric == metric && r.reference_type == reference_type)
    {
        let slot = scores.entry((&r.paper_id, &r.llm_id)).or_default();
        if r.method == method {
            slot.0 = Some(r.score);
        } else if r.method == PromptMethod::Baseline {
            slot.1 = Some(r.score);
        }
    }
    if !scores.values().any(|s| s.0.is_some()) {
        return Err(StatsError::EmptyCell {
            cell: cell_label(method, metric, reference_type),
        });
    }
    let mut deltas = Vec::with_capacity(scores.len());
    let mut pair_labels = Vec::with_capacity(scores.len());
    for ((paper, llm), (m, b)) in scores {
        match (m, b) {
            (Some(m), Some(b)) => {
                deltas.push(m - b);
                pair_labels.push((paper.to_string(), llm.to_string()));
            }
            (None, None) => {}
            (m, _) => {
                return Err(StatsError::MissingPair {
                    paper_id: paper.to_string(),
                    llm_id: llm.to_string(),
                    method: if m.is_none() {
                        method.to_string()
                    } else {
                        PromptMethod::Baseline.to_string()
                    },
                    metric: metric.to_string(),
                    reference: reference_type.to_string(),
                })
            }
        }
    }
    Ok(PairedSample {
        method,
        metric,
        reference_type,
        deltas,
        pair_labels,
    })
}

/// File-name-safe cell label, e.g. `CR-K1_ROUGE1_Abstract`.
pub fn cell_label(
    method: PromptMethod,
    metric: MetricName,
    reference_type: ReferenceType,
) -> String {
    format!("{method}_{metric}_{reference_type}")
}

/// Seed of one cell; independent of processing order.
pub fn cell_seed(
    global_seed: u64,
    method: PromptMethod,
    metric: MetricName,
    reference_type: ReferenceType,
) -> u64 {
    derive_seed(
        global_seed,
        &[
            &method.to_string(),
            metric.as_str(),
            &reference_type.to_string(),
        ],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolmFamily {
    /// All cells sharing a reference type.
    #[default]
    PerReference,
    /// Every cell in the run.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, PartialOrd, Ord)]
pub enum Stars {
    #[default]
    None,
    One,
    Two,
    Three,
}

impl Stars {
    /// Thresholds 0.001 / 0.01 / 0.05 on the adjusted p, only for cells
    /// significant under both tests.
    pub fn from_p(p_holm: f64, combined: bool) -> Self {
        if !combined {
            Stars::None
        } else if p_holm < 0.001 {
            Stars::Three
        } else if p_holm < 0.01 {
            Stars::Two
        } else if p_holm < 0.05 {
            Stars::One
        } else {
            Stars::None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stars::None => "none",
            Stars::One => "*",
            Stars::Two => "**",
            Stars::Three => "***",
        }
    }
}

impl fmt::Display for Stars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Stars {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Stars {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match String::deserialize(d)?.as_str() {
            "none" | "" => Ok(Stars::None),
            "*" => Ok(Stars::One),
            "**" => Ok(Stars::Two),
            "***" => Ok(Stars::Three),
            other => Err(serde::de::Error::custom(format!("unknown stars {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignificanceConfig {
    pub family: HolmFamily,
    pub replicates: usize,
    pub level: f64,
    pub alpha: f64,
    pub global_seed: u64,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig {
            family: HolmFamily::PerReference,
            replicates: DEFAULT_REPLICATES,
            level: DEFAULT_LEVEL,
            alpha: 0.05,
            global_seed: 0,
        }
    }
}

impl SignificanceConfig {
    pub fn validate(&self) -> Result<(), StatsError> {
        if self.replicates < MIN_REPLICATES {
            return Err(StatsError::TooFewReplicates {
                needed: MIN_REPLICATES,
                got: self.replicates,
            });
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(StatsError::InvalidLevel(self.level));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(StatsError::InvalidLevel(self.alpha));
        }
        Ok(())
    }
}

/// Verdict for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub method: PromptMethod,
    pub metric: MetricName,
    pub reference_type: ReferenceType,
    pub n: usize,
    pub median_delta: f64,
    pub wilcoxon_stat: f64,
    pub wilcoxon_exact: bool,
    pub p_raw: f64,
    pub p_holm: f64,
    pub bca: BcaInterval,
    pub significant_wilcoxon: bool,
    pub significant_bca: bool,
    pub significant_combined: bool,
    pub stars: Stars,
    /// Normality diagnostic only; never changes the test used.
    pub shapiro_w: Option<f64>,
    pub shapiro_p: Option<f64>,
    pub note: Option<String>,
}

/// Replicate distribution of one cell, for `bootstrap_audit/<cell>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapAudit {
    pub cell: String,
    pub observed_median: f64,
    pub z0: f64,
    pub accel: f64,
    pub b_replicates: usize,
    pub seed: u64,
    /// Distinct replicate medians with their counts, ascending.
    pub histogram: Vec<(f64, usize)>,
}

/// Levene test across methods' deltas for one (metric, reference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeveneRow {
    pub reference_type: ReferenceType,
    pub metric: MetricName,
    pub groups: usize,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignificanceRun {
    pub outcomes: Vec<TestOutcome>,
    pub audits: Vec<BootstrapAudit>,
    pub levene: Vec<LeveneRow>,
}

fn histogram(replicates: &[f64]) -> Vec<(f64, usize)> {
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize)> = Vec::new();
    for v in sorted {
        match out.last_mut() {
            Some((last, c)) if *last == v => *c += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

struct CellResult {
    outcome: TestOutcome,
    audit: Option<BootstrapAudit>,
    deltas: Vec<f64>,
}

fn run_cell(
    rows: &[MetricRow],
    (reference_type, method, metric): (ReferenceType, PromptMethod, MetricName),
    config: &SignificanceConfig,
    audit: bool,
) -> Result<CellResult, StatsError> {
    let sample = paired_differences(rows, method, metric, reference_type)?;
    let deltas = sample.deltas;
    let n = deltas.len();
    let seed = cell_seed(config.global_seed, method, metric, reference_type);
    let median_delta = median(&deltas);
    let mut notes = Vec::new();

    let (wilcoxon_stat, p_raw, wilcoxon_exact) = match wilcoxon_signed_rank(&deltas) {
        Ok(r) => (r.statistic, r.p_value, r.exact),
        Err(StatsError::AllZero) => {
            notes.push("all deltas zero");
            (0.0, 1.0, false)
        }
        Err(e) => return Err(e),
    };

    let mut audit_record = None;
    let (bca, significant_bca) = if n < 2 {
        notes.push("fewer than 2 pairs; no bootstrap");
        (
            BcaInterval::point(median_delta, config.level, 0, seed),
            false,
        )
    } else {
        let mut resampler = ChaChaResampler::new(seed);
        let (bca, replicates) = bca_interval_with(
            &deltas,
            config.replicates,
            config.level,
            seed,
            &mut resampler,
            None,
        )?;
        if audit {
            audit_record = Some(BootstrapAudit {
                cell: cell_label(method, metric, reference_type),
                observed_median: median_delta,
                z0: bca.z0,
                accel: bca.accel,
                b_replicates: bca.b_replicates,
                seed,
                histogram: histogram(&replicates),
            });
        }
        (bca, !bca.contains(0.0))
    };

    let (shapiro_w, shapiro_p) = match shapiro_wilk(&deltas) {
        Ok(r) => (Some(r.w), Some(r.p_value)),
        Err(_) => (None, None),
    };
    if let (Some(w), Some(p)) = (shapiro_w, shapiro_p) {
        log::debug!(
            "{}: Shapiro-Wilk W = {w:.4}, p = {p:.4}",
            cell_label(method, metric, reference_type)
        );
    }

    Ok(CellResult {
        outcome: TestOutcome {
            method,
            metric,
            reference_type,
            n,
            median_delta,
            wilcoxon_stat,
            wilcoxon_exact,
            p_raw,
            p_holm: p_raw,
            bca,
            significant_wilcoxon: false,
            significant_bca,
            significant_combined: false,
            stars: Stars::None,
            shapiro_w,
            shapiro_p,
            note: if notes.is_empty() {
                None
            } else {
                Some(notes.join("; "))
            },
        },
        audit: audit_record,
        deltas,
    })
}

/// Every non-baseline cell in `rows`, ordered by (reference, method, metric).
pub fn comparison_cells(rows: &[MetricRow]) -> Vec<(ReferenceType, PromptMethod, MetricName)> {
    rows.iter()
        .filter(|r| r.method != PromptMethod::Baseline)
        .map(|r| (r.reference_type, r.method, r.metric))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Runs every comparison cell; with `audit`, keeps replicate histograms.
pub fn run_significance_full(
    rows: &[MetricRow],
    config: &SignificanceConfig,
    audit: bool,
) -> Result<SignificanceRun, StatsError> {
    config.validate()?;
    let cells = comparison_cells(rows);
    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|&cell| run_cell(rows, cell, config, audit))
        .collect::<Result<_, _>>()?;

    let mut families: BTreeMap<Option<ReferenceType>, Vec<usize>> = BTreeMap::new();
    for (i, r) in results.iter().enumerate() {
        let key = match config.family {
            HolmFamily::PerReference => Some(r.outcome.reference_type),
            HolmFamily::Global => None,
        };
        families.entry(key).or_default().push(i);
    }
    let mut outcomes: Vec<TestOutcome> = results.iter().map(|r| r.outcome.clone()).collect();
    for members in families.values() {
        let raw: Vec<f64> = members.iter().map(|&i| outcomes[i].p_raw).collect();
        for (&i, p) in members.iter().zip(holm_correction(&raw)?) {
            let o = &mut outcomes[i];
            o.p_holm = p;
            o.significant_wilcoxon = p < config.alpha;
            o.significant_combined = o.significant_wilcoxon && o.significant_bca;
            o.stars = Stars::from_p(p, o.significant_combined);
        }
    }

    let mut by_metric: BTreeMap<(ReferenceType, MetricName), Vec<Vec<f64>>> = BTreeMap::new();
    for r in &results {
        by_metric
            .entry((r.outcome.reference_type, r.outcome.metric))
            .or_default()
            .push(r.deltas.clone());
    }
    let levene = by_metric
        .into_iter()
        .filter_map(|((reference_type, metric), groups)| {
            levene_test(&groups).ok().map(|l| LeveneRow {
                reference_type,
                metric,
                groups: groups.len(),
                statistic: l.statistic,
                p_value: l.p_value,
            })
        })
        .collect();

    Ok(SignificanceRun {
        outcomes,
        audits: results.into_iter().filter_map(|r| r.audit).collect(),
        levene,
    })
}

pub fn run_significance(
    rows: &[MetricRow],
    config: &SignificanceConfig,
) -> Result<Vec<TestOutcome>, StatsError> {
    Ok(run_significance_full(rows, config, false)?.outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::KeyCount;

    fn row(paper: &str, method: PromptMethod, score: f64) -> MetricRow {
        MetricRow {
            run_id: "t".into(),
            paper_id: paper.into(),
            llm_id: "m".into(),
            method,
            reference_type: ReferenceType::Abstract,
            metric: MetricName::ROUGE1,
            score,
            detail: None,
            degenerate: false,
        }
    }

    #[test]
    fn deltas_and_missing_pairs() {
        let cr = PromptMethod::Cr(KeyCount::One);
        let rows = vec![
            row("b", PromptMethod::Baseline, 0.5),
            row("a", PromptMethod::Baseline, 0.2),
            row("a", cr, 0.3),
            row("b", cr, 0.5),
        ];
        let s = paired_differences(&rows, cr, MetricName::ROUGE1, ReferenceType::Abstract).unwrap();
        assert_eq!(s.pair_labels[0].0, "a");
        assert!((s.deltas[0] - 0.1).abs() < 1e-15);
        assert_eq!(s.deltas[1], 0.0);
        let err = paired_differences(&rows[1..], cr, MetricName::ROUGE1, ReferenceType::Abstract)
            .unwrap_err();
        assert!(err.to_string().contains("b"), "{err}");
    }

    #[test]
    fn zero_cell_is_not_significant() {
        let cr = PromptMethod::Cr(KeyCount::One);
        let mut rows = Vec::new();
        for p in ["a", "b", "c", "d"] {
            rows.push(row(p, PromptMethod::Baseline, 0.4));
            rows.push(row(p, cr, 0.4));
        }
        let config = SignificanceConfig {
            replicates: 200,
            ..Default::default()
        };
        let out = run_significance(&rows, &config).unwrap();
        assert_eq!(out.len(), 1);
        let o = &out[0];
        assert_eq!(o.p_raw, 1.0);
        assert_eq!(o.p_holm, o.p_raw);
        assert!(o.bca.degenerate && o.bca.contains(0.0));
        assert!(!o.significant_combined);
        assert_eq!(o.stars, Stars::None);
    }

    #[test]
    fn stars_thresholds() {
        assert_eq!(Stars::from_p(0.0005, true), Stars::Three);
        assert_eq!(Stars::from_p(0.005, true), Stars::Two);
        assert_eq!(Stars::from_p(0.02, true), Stars::One);
        assert_eq!(Stars::from_p(0.0005, false), Stars::None);
        assert_eq!(serde_json::to_string(&Stars::Two).unwrap(), "\"**\"");
    }
}
