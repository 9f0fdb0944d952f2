//! Statistical procedure: paired differences against the baseline,
//! Wilcoxon signed-rank with Holm correction, BCa bootstrap intervals of the
//! median, and Shapiro–Wilk / Levene diagnostics.
//!
//! ```
//! use sumalign::stats::{holm_correction, wilcoxon_signed_rank};
//! assert_eq!(wilcoxon_signed_rank(&[1.0, 2.0, 3.0]).unwrap().p_value, 0.25);
//! assert_eq!(holm_correction(&[0.01, 0.04, 0.03]).unwrap(), [0.03, 0.06, 0.06]);
//! ```

pub mod bootstrap;
pub mod descriptive;
pub mod dist;
pub mod holm;
pub mod levene;
pub mod shapiro;
pub mod significance;
pub mod wilcoxon;

use thiserror::Error;

pub use bootstrap::{bca_interval, median, BcaInterval};
pub use descriptive::{descriptive_stats, DescriptiveRow};
pub use holm::holm_correction;
pub use levene::{levene_test, LeveneResult};
pub use shapiro::{shapiro_wilk, ShapiroResult};
pub use significance::{
    paired_differences, run_significance, run_significance_full, HolmFamily, PairedSample,
    SignificanceConfig, SignificanceRun, Stars, TestOutcome,
};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("input contains NaN or infinite values")]
    NonFinite,
    #[error("all differences are zero")]
    AllZero,
    #[error("p-value {0} outside [0, 1]")]
    InvalidPValue(f64),
    #[error("need at least {needed} values, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("need at least {needed} bootstrap replicates, got {got}")]
    TooFewReplicates { needed: usize, got: usize },
    #[error("level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("sample size {got} outside [{min}, {max}]")]
    SampleSize { min: usize, max: usize, got: usize },
    #[error("all values are identical")]
    ZeroVariance,
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("no {method} score for paper {paper_id}, llm {llm_id} ({metric} vs {reference})")]
    MissingPair {
        paper_id: String,
        llm_id: String,
        method: String,
        metric: String,
        reference: String,
    },
    #[error("no rows for cell {cell}")]
    EmptyCell { cell: String },
}
