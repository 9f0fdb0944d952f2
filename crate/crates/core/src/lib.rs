//! Evaluation harness for LLM summaries of scientific abstracts.
//!
//! The pipeline runs in stages: segment abstracts into sentences, pick key
//! sentences by embedding distance, build prompts, collect summaries, score
//! them with six metrics, and test the per-method score changes against the
//! baseline with paired, multiplicity-corrected tests.

pub mod corpus;
pub mod embeddings;
pub mod experiment;
pub mod inference;
pub mod metrics;
pub mod prompting;
pub mod seed;
pub mod stats;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/embeddings.md")]
    mod embeddings {}
    #[doc = include_str!("../../../book/src/prompting.md")]
    mod prompting {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
