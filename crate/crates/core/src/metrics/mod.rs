//! Summary quality metrics and the per-summary evaluation driver.
//!
//! Lexical metrics (ROUGE-1, ROUGE-2, ROUGE-L, METEOR) share [`tokenize`].
//! BERTScore and cosine similarity go through the embedding traits, so any
//! backend (deterministic, sidecar, cache) can supply the vectors.
//!
//! ```
//! use sumalign::metrics::{rouge_n, tokenize};
//! let r = rouge_n(&tokenize("the cat sat on the mat"), &tokenize("the cat sat"), 1).unwrap();
//! assert_eq!(r.recall, 0.5);
//! ```

pub mod bertscore;
pub mod meteor;
pub mod rouge;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{segment_doc, AbstractDoc};
use crate::embeddings::{cosine_sim, EmbeddingError, SentenceEmbedder, TokenEmbedder};
use crate::inference::SummaryRecord;
use crate::prompting::{KeyCount, SentenceSelection};

pub use bertscore::{bertscore, bertscore_vectors};
pub use meteor::{meteor, MeteorScore};
pub use rouge::{lcs_len, rouge_l, rouge_n, LcsScores};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("n-gram order must be at least 1")]
    InvalidN,
    #[error("reference has {len} tokens, fewer than n = {n}")]
    ReferenceTooShort { n: usize, len: usize },
    #[error("reference is empty")]
    EmptyReference,
    #[error("token sequence is empty")]
    EmptyInput,
    #[error("text is empty")]
    EmptyText,
    #[error("summary for {paper_id} does not belong to {doc_id}")]
    WrongDocument { paper_id: String, doc_id: String },
    #[error("no {k}-sentence selection for {paper_id}")]
    MissingSelection { paper_id: String, k: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Prompt(#[from] crate::prompting::PromptError),
}

/// Lowercased alphanumeric tokens of a text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    /// Character length of the source text.
    pub source_len: usize,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercases and splits on every maximal run of non-alphanumeric characters.
///
/// ```
/// use sumalign::metrics::tokenize;
/// assert_eq!(tokenize("S. cerevisiae-3").tokens, ["s", "cerevisiae", "3"]);
/// ```
pub fn tokenize(text: &str) -> TokenSeq {
    let tokens = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect();
    TokenSeq {
        tokens,
        source_len: text.chars().count(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Harmonic mean, 0 when `P + R <= 0`.
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

#[allow(non_camel_case_types, clippy::upper_case_acronyms)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricName {
    ROUGE1,
    ROUGE2,
    ROUGEL,
    BERTSCORE_F1,
    METEOR,
    COSINE,
}

impl MetricName {
    pub const ALL: [MetricName; 6] = [
        MetricName::ROUGE1,
        MetricName::ROUGE2,
        MetricName::ROUGEL,
        MetricName::BERTSCORE_F1,
        MetricName::METEOR,
        MetricName::COSINE,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::ROUGE1 => "ROUGE1",
            MetricName::ROUGE2 => "ROUGE2",
            MetricName::ROUGEL => "ROUGEL",
            MetricName::BERTSCORE_F1 => "BERTSCORE_F1",
            MetricName::METEOR => "METEOR",
            MetricName::COSINE => "COSINE",
        }
    }

    /// Closed interval every score of this metric lies in.
    pub fn range(self) -> (f64, f64) {
        match self {
            MetricName::COSINE => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricName::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

/// What a summary is scored against. Serialized as `Abstract`, `K1`, `K2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReferenceType {
    Abstract,
    KeySentences(KeyCount),
}

impl ReferenceType {
    pub const ALL: [ReferenceType; 3] = [
        ReferenceType::Abstract,
        ReferenceType::KeySentences(KeyCount::One),
        ReferenceType::KeySentences(KeyCount::Two),
    ];
}

impl fmt::Display for ReferenceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferenceType::Abstract => f.write_str("Abstract"),
            ReferenceType::KeySentences(k) => write!(f, "K{}", k.get()),
        }
    }
}

impl FromStr for ReferenceType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Abstract" | "abstract" => Ok(ReferenceType::Abstract),
            "K1" | "k1" => Ok(ReferenceType::KeySentences(KeyCount::One)),
            "K2" | "k2" => Ok(ReferenceType::KeySentences(KeyCount::Two)),
            _ => Err(format!("unknown reference type {s:?}")),
        }
    }
}

impl Serialize for ReferenceType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ReferenceType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One score, as stored in `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub paper_id: String,
    pub llm_id: String,
    pub method: crate::prompting::PromptMethod,
    pub reference_type: ReferenceType,
    pub metric: MetricName,
    pub score: f64,
    /// Precision, recall and F1 behind the stored score, where defined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Prf>,
    /// Set when a zero-denominator convention produced the score.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl MetricRow {
    pub fn in_range(&self) -> bool {
        let (lo, hi) = self.metric.range();
        self.score.is_finite() && self.score >= lo && self.score <= hi
    }

    /// Uniqueness key within a run.
    pub fn key(
        &self,
    ) -> (
        &str,
        &str,
        crate::prompting::PromptMethod,
        ReferenceType,
        MetricName,
    ) {
        (
            &self.paper_id,
            &self.llm_id,
            self.method,
            self.reference_type,
            self.metric,
        )
    }
}

/// Which ROUGE component becomes the stored score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RougeVariant {
    #[default]
    Recall,
    Precision,
    F1,
}

impl RougeVariant {
    pub fn pick(self, prf: &Prf) -> f64 {
        match self {
            RougeVariant::Recall => prf.recall,
            RougeVariant::Precision => prf.precision,
            RougeVariant::F1 => prf.f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricSettings {
    pub rouge_variant: RougeVariant,
    pub rouge_l_beta: f64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings {
            rouge_variant: RougeVariant::Recall,
            rouge_l_beta: 1.0,
        }
    }
}

/// Cosine similarity of whole-text embeddings.
pub fn cosine_text_sim(
    reference: &str,
    candidate: &str,
    embedder: &dyn SentenceEmbedder,
) -> Result<f64, MetricError> {
    if reference.trim().is_empty() || candidate.trim().is_empty() {
        return Err(MetricError::EmptyText);
    }
    let v = embedder.embed(&[reference.to_string(), candidate.to_string()])?;
    Ok(cosine_sim(&v[0], &v[1])?)
}

/// A metric value before it is attached to a summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub metric: MetricName,
    pub score: f64,
    pub detail: Option<Prf>,
    pub degenerate: bool,
}

/// All six metrics of `candidate` against `reference`. Empty or too-short
/// references are errors; degenerate candidates score 0 with the flag set.
pub fn score_all(
    reference: &str,
    candidate: &str,
    sentences: &dyn SentenceEmbedder,
    tokens: &dyn TokenEmbedder,
    settings: &MetricSettings,
) -> Result<Vec<Scored>, MetricError> {
    let r = tokenize(reference);
    let c = tokenize(candidate);
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let empty = c.is_empty();
    let mut out = Vec::with_capacity(6);
    for (metric, n) in [(MetricName::ROUGE1, 1), (MetricName::ROUGE2, 2)] {
        let prf = rouge_n(&r, &c, n)?;
        out.push(Scored {
            metric,
            score: settings.rouge_variant.pick(&prf),
            detail: Some(prf),
            degenerate: empty,
        });
    }
    let l = rouge_l(&r, &c, settings.rouge_l_beta)?.prf();
    out.push(Scored {
        metric: MetricName::ROUGEL,
        score: settings.rouge_variant.pick(&l),
        detail: Some(l),
        degenerate: empty,
    });

    let bert = if empty {
        None
    } else {
        let prf = bertscore(reference, candidate, tokens)?;
        Some(prf)
    };
    out.push(match bert {
        Some(prf) if prf.f1 >= 0.0 => Scored {
            metric: MetricName::BERTSCORE_F1,
            score: prf.f1.min(1.0),
            detail: Some(prf),
            degenerate: prf.precision + prf.recall <= 0.0,
        },
        other => Scored {
            metric: MetricName::BERTSCORE_F1,
            score: 0.0,
            detail: other,
            degenerate: true,
        },
    });

    let m = meteor(&r, &c);
    out.push(Scored {
        metric: MetricName::METEOR,
        score: m.score,
        detail: None,
        degenerate: m.matches == 0,
    });

    let (score, degenerate) = if candidate.trim().is_empty() {
        (0.0, true)
    } else {
        (cosine_text_sim(reference, candidate, sentences)?, false)
    };
    out.push(Scored {
        metric: MetricName::COSINE,
        score,
        detail: None,
        degenerate,
    });
    for s in &out {
        if s.degenerate {
            log::warn!("{} scored 0 by convention (degenerate candidate)", s.metric);
        }
    }
    Ok(out)
}

/// Concatenated key sentences of a selection, in abstract order.
pub fn key_reference_text(
    doc: &AbstractDoc,
    selection: &SentenceSelection,
) -> Result<String, MetricError> {
    let split = segment_doc(doc).map_err(crate::prompting::PromptError::from)?;
    if let Some(&bad) = selection.key_indices.iter().find(|&&i| i >= split.len()) {
        return Err(crate::prompting::PromptError::IndexOutOfRange {
            index: bad,
            len: split.len(),
        }
        .into());
    }
    let mut idx = selection.key_indices.clone();
    idx.sort_unstable();
    Ok(split.join(&idx))
}

/// Scores one summary against the abstract and, for baseline, CR and RA
/// summaries, against the key-sentence reference of every K in `key_refs`.
///
/// `key_refs` lists the key-sentence references active in the run. A CR or
/// RA summary is only scored against the reference of its own K.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_summary(
    record: &SummaryRecord,
    doc: &AbstractDoc,
    selections: &[&SentenceSelection],
    key_refs: &[KeyCount],
    sentences: &dyn SentenceEmbedder,
    tokens: &dyn TokenEmbedder,
    settings: &MetricSettings,
    run_id: &str,
) -> Result<Vec<MetricRow>, MetricError> {
    use crate::prompting::PromptMethod;
    if record.paper_id != doc.id {
        return Err(MetricError::WrongDocument {
            paper_id: record.paper_id.clone(),
            doc_id: doc.id.clone(),
        });
    }
    let mut refs = vec![(ReferenceType::Abstract, doc.text.clone())];
    let ks: Vec<KeyCount> = match record.method {
        PromptMethod::Baseline => key_refs.to_vec(),
        PromptMethod::Cr(k) | PromptMethod::Ra(k) if key_refs.contains(&k) => vec![k],
        _ => Vec::new(),
    };
    for k in ks {
        let sel = selections
            .iter()
            .find(|s| s.k == k.get() && s.source_id == doc.id)
            .ok_or_else(|| MetricError::MissingSelection {
                paper_id: doc.id.clone(),
                k: k.get(),
            })?;
        refs.push((
            ReferenceType::KeySentences(k),
            key_reference_text(doc, sel)?,
        ));
    }
    let mut rows = Vec::with_capacity(refs.len() * 6);
    for (reference_type, text) in refs {
        for s in score_all(&text, &record.summary_text, sentences, tokens, settings)? {
            rows.push(MetricRow {
                run_id: run_id.to_string(),
                paper_id: record.paper_id.clone(),
                llm_id: record.llm_id.clone(),
                method: record.method,
                reference_type,
                metric: s.metric,
                score: s.score,
                detail: s.detail,
                degenerate: s.degenerate,
            });
        }
    }
    Ok(rows)
}
