//! Key/random sentence selection and the seven prompt templates.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{segment_doc, AbstractDoc, CorpusError, SentenceSplit};
use crate::embeddings::{top_k_nearest, EmbeddingError, EmbeddingVector, SentenceEmbedder};
pub use crate::seed::bounded_draw;
use crate::seed::derive_seed;

/// Terms whose averaged embedding is the key-sentence query.
pub const KEY_TERMS: [&str; 3] = ["result", "method", "conclusion"];

pub const BASELINE_INSTRUCTION: &str = "Summarise:";
pub const PE1_INSTRUCTION: &str = "Write a concise abstract summarising this text:";
pub const PE2_INSTRUCTION: &str = "Write a concise abstract summarising this text using the following sections: Background, Objective, Methods, Results, Conclusion.";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{0} needs a sentence selection")]
    SelectionRequired(PromptMethod),
    #[error("{0} takes no sentence selection")]
    UnexpectedSelection(PromptMethod),
    #[error("selection has k = {got}, method needs k = {expected}")]
    KMismatch { expected: usize, got: usize },
    #[error("selection belongs to {selection:?}, not {doc:?}")]
    SourceMismatch { selection: String, doc: String },
    #[error("selection index {index} out of range for {len} sentences")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("cannot pick {k} sentences: only {available} available")]
    InsufficientSentences { k: usize, available: usize },
    #[error("unknown prompt method {0:?}")]
    UnknownMethod(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Number of repeated sentences for CR/RA prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyCount {
    One,
    Two,
}

impl KeyCount {
    pub const ALL: [KeyCount; 2] = [KeyCount::One, KeyCount::Two];

    pub fn new(k: usize) -> Option<Self> {
        match k {
            1 => Some(KeyCount::One),
            2 => Some(KeyCount::Two),
            _ => None,
        }
    }

    pub fn get(self) -> usize {
        match self {
            KeyCount::One => 1,
            KeyCount::Two => 2,
        }
    }
}

impl Serialize for KeyCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(self.get() as u64)
    }
}

impl<'de> Deserialize<'de> for KeyCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let k = usize::deserialize(d)?;
        KeyCount::new(k)
            .ok_or_else(|| serde::de::Error::custom(format!("k must be 1 or 2, got {k}")))
    }
}

/// One of the seven prompt conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptMethod {
    Baseline,
    Pe1,
    Pe2,
    /// Context repetition: key sentences appended after the abstract.
    Cr(KeyCount),
    /// Random addition: non-key sentences appended after the abstract.
    Ra(KeyCount),
}

impl PromptMethod {
    /// All seven, in reporting order.
    pub const ALL: [PromptMethod; 7] = [
        PromptMethod::Baseline,
        PromptMethod::Pe1,
        PromptMethod::Pe2,
        PromptMethod::Cr(KeyCount::One),
        PromptMethod::Ra(KeyCount::One),
        PromptMethod::Cr(KeyCount::Two),
        PromptMethod::Ra(KeyCount::Two),
    ];

    pub fn k(self) -> Option<KeyCount> {
        match self {
            PromptMethod::Cr(k) | PromptMethod::Ra(k) => Some(k),
            _ => None,
        }
    }

    pub fn needs_selection(self) -> bool {
        self.k().is_some()
    }

    fn rank(self) -> usize {
        PromptMethod::ALL
            .iter()
            .position(|m| *m == self)
            .expect("every method is listed")
    }
}

impl PartialOrd for PromptMethod {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PromptMethod {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank().cmp(&other.rank())
    }
}

impl fmt::Display for PromptMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptMethod::Baseline => f.write_str("baseline"),
            PromptMethod::Pe1 => f.write_str("PE-1"),
            PromptMethod::Pe2 => f.write_str("PE-2"),
            PromptMethod::Cr(k) => write!(f, "CR-K{}", k.get()),
            PromptMethod::Ra(k) => write!(f, "RA-K{}", k.get()),
        }
    }
}

impl FromStr for PromptMethod {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        let method = match norm.as_str() {
            "BASELINE" => PromptMethod::Baseline,
            "PE-1" | "PE1" => PromptMethod::Pe1,
            "PE-2" | "PE2" => PromptMethod::Pe2,
            "CR-K1" => PromptMethod::Cr(KeyCount::One),
            "CR-K2" => PromptMethod::Cr(KeyCount::Two),
            "RA-K1" => PromptMethod::Ra(KeyCount::One),
            "RA-K2" => PromptMethod::Ra(KeyCount::Two),
            _ => return Err(PromptError::UnknownMethod(s.to_string())),
        };
        Ok(method)
    }
}

impl Serialize for PromptMethod {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PromptMethod {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Sentences chosen for one abstract at one K.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSelection {
    #[serde(rename = "paper_id")]
    pub source_id: String,
    pub k: usize,
    /// Key sentences in abstract order.
    pub key_indices: Vec<usize>,
    /// Key sentences nearest first.
    #[serde(default)]
    pub key_ranked: Vec<usize>,
    /// Random sentences in abstract order; empty when not drawn.
    #[serde(default)]
    pub random_indices: Vec<usize>,
    pub seed: u64,
}

/// Key sentences ranked nearest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeySentences {
    pub ranked: Vec<usize>,
}

impl KeySentences {
    pub fn in_abstract_order(&self) -> Vec<usize> {
        let mut v = self.ranked.clone();
        v.sort_unstable();
        v
    }
}

/// Mean embedding of [`KEY_TERMS`].
pub fn key_term_query(embedder: &dyn SentenceEmbedder) -> Result<EmbeddingVector, PromptError> {
    let terms: Vec<String> = KEY_TERMS.iter().map(|t| t.to_string()).collect();
    Ok(EmbeddingVector::mean(&embedder.embed(&terms)?)?)
}

/// The `k` sentences nearest (L2) to the averaged key-term embedding.
pub fn select_key_sentences(
    split: &SentenceSplit,
    k: usize,
    embedder: &dyn SentenceEmbedder,
) -> Result<KeySentences, PromptError> {
    if k == 0 || k > split.len() {
        return Err(PromptError::InsufficientSentences {
            k,
            available: split.len(),
        });
    }
    let query = key_term_query(embedder)?;
    let vectors = embedder.embed(&split.texts())?;
    Ok(KeySentences {
        ranked: top_k_nearest(&query, &vectors, k)?,
    })
}

/// Samples `k` sentence indices outside `key_indices` without replacement.
///
/// The generator is ChaCha8 seeded with `seed`. A partial Fisher–Yates
/// shuffle runs over the ascending list of non-key indices: step `i` takes
/// one `next_u64()` draw, maps it to `i + bounded_draw(draw, len - i)` and
/// swaps. The first `k` entries are returned in ascending order.
pub fn select_random_sentences(
    n_sentences: usize,
    key_indices: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>, PromptError> {
    let mut pool: Vec<usize> = (0..n_sentences)
        .filter(|i| !key_indices.contains(i))
        .collect();
    if k > pool.len() {
        return Err(PromptError::InsufficientSentences {
            k,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..k {
        let j = i + bounded_draw(rng.next_u64(), pool.len() - i);
        pool.swap(i, j);
    }
    let mut picked = pool[..k].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Seed for one paper at one K.
pub fn selection_seed(global_seed: u64, paper_id: &str, k: usize) -> u64 {
    derive_seed(global_seed, &[paper_id, &k.to_string()])
}

/// Key sentences, then (optionally) random sentences from the remainder.
pub fn select_for_paper(
    split: &SentenceSplit,
    k: usize,
    embedder: &dyn SentenceEmbedder,
    global_seed: u64,
    with_random: bool,
) -> Result<SentenceSelection, PromptError> {
    let keys = select_key_sentences(split, k, embedder)?;
    let seed = selection_seed(global_seed, &split.source_id, k);
    let key_indices = keys.in_abstract_order();
    let random_indices = if with_random {
        select_random_sentences(split.len(), &key_indices, k, seed)?
    } else {
        Vec::new()
    };
    Ok(SentenceSelection {
        source_id: split.source_id.clone(),
        k,
        key_indices,
        key_ranked: keys.ranked,
        random_indices,
        seed,
    })
}

/// A fully materialised prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    pub method: PromptMethod,
    pub source_id: String,
    pub prompt_text: String,
    pub selection: Option<SentenceSelection>,
    /// Byte range of the verbatim abstract inside `prompt_text`.
    pub abstract_range: Range<usize>,
}

impl PromptSpec {
    pub fn abstract_text(&self) -> &str {
        &self.prompt_text[self.abstract_range.clone()]
    }
}

fn checked_join(split: &SentenceSplit, indices: &[usize]) -> Result<String, PromptError> {
    if let Some(&index) = indices.iter().find(|&&i| i >= split.len()) {
        return Err(PromptError::IndexOutOfRange {
            index,
            len: split.len(),
        });
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    Ok(split.join(&sorted))
}

/// Materialises `method` for `doc`. CR/RA need the selection made at the
/// method's K; the other methods must not get one.
pub fn build_prompt(
    method: PromptMethod,
    doc: &AbstractDoc,
    selection: Option<&SentenceSelection>,
) -> Result<PromptSpec, PromptError> {
    let (instruction, context) = match (method, selection) {
        (PromptMethod::Cr(k) | PromptMethod::Ra(k), Some(sel)) => {
            if sel.k != k.get() {
                return Err(PromptError::KMismatch {
                    expected: k.get(),
                    got: sel.k,
                });
            }
            if sel.source_id != doc.id {
                return Err(PromptError::SourceMismatch {
                    selection: sel.source_id.clone(),
                    doc: doc.id.clone(),
                });
            }
            let indices = match method {
                PromptMethod::Cr(_) => &sel.key_indices,
                _ => &sel.random_indices,
            };
            if indices.len() != k.get() {
                return Err(PromptError::InsufficientSentences {
                    k: k.get(),
                    available: indices.len(),
                });
            }
            let split = segment_doc(doc)?;
            (BASELINE_INSTRUCTION, Some(checked_join(&split, indices)?))
        }
        (PromptMethod::Cr(_) | PromptMethod::Ra(_), None) => {
            return Err(PromptError::SelectionRequired(method))
        }
        (_, Some(_)) => return Err(PromptError::UnexpectedSelection(method)),
        (PromptMethod::Baseline, None) => (BASELINE_INSTRUCTION, None),
        (PromptMethod::Pe1, None) => (PE1_INSTRUCTION, None),
        (PromptMethod::Pe2, None) => (PE2_INSTRUCTION, None),
    };
    let mut prompt_text = format!("{instruction} ");
    let start = prompt_text.len();
    prompt_text.push_str(&doc.text);
    let abstract_range = start..prompt_text.len();
    if let Some(ctx) = context {
        prompt_text.push(' ');
        prompt_text.push_str(&ctx);
    }
    Ok(PromptSpec {
        method,
        source_id: doc.id.clone(),
        prompt_text,
        selection: selection.cloned(),
        abstract_range,
    })
}
