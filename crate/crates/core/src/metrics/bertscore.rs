//! BERTScore by greedy max-cosine matching, without IDF weighting.
//!
//! Recall averages, over reference tokens, the best cosine to any candidate
//! token; precision does the same from the candidate side.

use crate::embeddings::{EmbeddingError, EmbeddingVector, TokenEmbedder};

use super::{MetricError, Prf};

fn unit_rows(vectors: &[EmbeddingVector]) -> Result<Vec<Vec<f64>>, MetricError> {
    vectors
        .iter()
        .map(|v| {
            let n = v.norm();
            if n == 0.0 {
                return Err(MetricError::Embedding(EmbeddingError::ZeroNorm));
            }
            Ok(v.components().iter().map(|x| x / n).collect())
        })
        .collect()
}

/// Scores two token-vector sequences. `f1` is 0 when `P + R <= 0`.
pub fn bertscore_vectors(
    reference: &[EmbeddingVector],
    candidate: &[EmbeddingVector],
) -> Result<Prf, MetricError> {
    if reference.is_empty() || candidate.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let dim = reference[0].dim();
    if let Some(bad) = reference.iter().chain(candidate).find(|v| v.dim() != dim) {
        return Err(MetricError::Embedding(EmbeddingError::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        }));
    }
    let r = unit_rows(reference)?;
    let c = unit_rows(candidate)?;
    let mut best_r = vec![f64::NEG_INFINITY; r.len()];
    let mut best_c = vec![f64::NEG_INFINITY; c.len()];
    for (i, a) in r.iter().enumerate() {
        for (j, b) in c.iter().enumerate() {
            let cos = a
                .iter()
                .zip(b)
                .map(|(x, y)| x * y)
                .sum::<f64>()
                .clamp(-1.0, 1.0);
            best_r[i] = best_r[i].max(cos);
            best_c[j] = best_c[j].max(cos);
        }
    }
    let recall = best_r.iter().sum::<f64>() / r.len() as f64;
    let precision = best_c.iter().sum::<f64>() / c.len() as f64;
    Ok(Prf::from_pr(precision, recall))
}

/// Embeds both texts token by token and scores them.
pub fn bertscore(
    reference: &str,
    candidate: &str,
    embedder: &dyn TokenEmbedder,
) -> Result<Prf, MetricError> {
    let r: Vec<EmbeddingVector> = embedder
        .embed_tokens(reference)?
        .into_iter()
        .map(|t| t.vector)
        .collect();
    let c: Vec<EmbeddingVector> = embedder
        .embed_tokens(candidate)?
        .into_iter()
        .map(|t| t.vector)
        .collect();
    bertscore_vectors(&r, &c)
}
