//! ROUGE-N with clipped n-gram counts and ROUGE-L over the token LCS.

use std::collections::HashMap;

use super::{MetricError, Prf, TokenSeq};

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Recall is the clipped match count over the reference n-gram count;
/// precision uses the candidate n-gram count (0 when it has none).
pub fn rouge_n(reference: &TokenSeq, candidate: &TokenSeq, n: usize) -> Result<Prf, MetricError> {
    if n == 0 {
        return Err(MetricError::InvalidN);
    }
    if reference.len() < n {
        return Err(MetricError::ReferenceTooShort {
            n,
            len: reference.len(),
        });
    }
    let ref_counts = ngram_counts(&reference.tokens, n);
    let cand_counts = ngram_counts(&candidate.tokens, n);
    let matched: usize = ref_counts
        .iter()
        .map(|(gram, &rc)| rc.min(cand_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    let ref_total = reference.len() + 1 - n;
    let cand_total = (candidate.len() + 1).saturating_sub(n);
    let recall = matched as f64 / ref_total as f64;
    let precision = if cand_total == 0 {
        0.0
    } else {
        matched as f64 / cand_total as f64
    };
    Ok(Prf::from_pr(precision, recall))
}

/// Length of the longest common subsequence, two-row DP.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcsScores {
    pub lcs: usize,
    pub r_lcs: f64,
    pub p_lcs: f64,
    pub f_lcs: f64,
}

impl LcsScores {
    pub fn prf(&self) -> Prf {
        Prf {
            precision: self.p_lcs,
            recall: self.r_lcs,
            f1: self.f_lcs,
        }
    }
}

/// `F = (1 + b^2) R P / (R + b^2 P)`, 0 when both R and P are 0.
pub fn rouge_l(
    reference: &TokenSeq,
    candidate: &TokenSeq,
    beta: f64,
) -> Result<LcsScores, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let lcs = lcs_len(&reference.tokens, &candidate.tokens);
    let r_lcs = lcs as f64 / reference.len() as f64;
    let p_lcs = if candidate.is_empty() {
        0.0
    } else {
        lcs as f64 / candidate.len() as f64
    };
    let b2 = beta * beta;
    let f_lcs = if r_lcs == 0.0 && p_lcs == 0.0 {
        0.0
    } else {
        (1.0 + b2) * r_lcs * p_lcs / (r_lcs + b2 * p_lcs)
    };
    Ok(LcsScores {
        lcs,
        r_lcs,
        p_lcs,
        f_lcs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tokenize;

    #[test]
    fn identical_is_one() {
        let t = tokenize("the cat sat on the mat");
        let s = rouge_n(&t, &t, 2).unwrap();
        assert_eq!((s.recall, s.precision, s.f1), (1.0, 1.0, 1.0));
        assert_eq!(rouge_l(&t, &t, 1.0).unwrap().f_lcs, 1.0);
    }

    #[test]
    fn clipped_unigrams() {
        let r = rouge_n(
            &tokenize("the cat sat on the mat"),
            &tokenize("the cat sat"),
            1,
        )
        .unwrap();
        assert_eq!(r.recall, 0.5);
        assert_eq!(r.precision, 1.0);
        let r = rouge_n(&tokenize("a b c"), &tokenize("x y z"), 2).unwrap();
        assert_eq!((r.recall, r.f1), (0.0, 0.0));
    }

    #[test]
    fn short_reference_errors() {
        assert!(matches!(
            rouge_n(&tokenize("a"), &tokenize("a b"), 2),
            Err(MetricError::ReferenceTooShort { .. })
        ));
        assert!(rouge_n(&tokenize("a"), &tokenize("a"), 0).is_err());
        assert!(rouge_l(&tokenize(""), &tokenize("a"), 1.0).is_err());
    }

    #[test]
    fn lcs_cases() {
        let s = rouge_l(&tokenize("a b c d"), &tokenize("a c b d"), 1.0).unwrap();
        assert_eq!(s.lcs, 3);
        assert_eq!(s.r_lcs, 0.75);
        let e = rouge_l(&tokenize("a b"), &tokenize(""), 1.0).unwrap();
        assert_eq!((e.r_lcs, e.p_lcs, e.f_lcs), (0.0, 0.0, 0.0));
    }

    #[test]
    fn beta_weights_recall() {
        let s = rouge_l(&tokenize("a b c d"), &tokenize("a b"), 100.0).unwrap();
        assert!((s.f_lcs - s.r_lcs).abs() < 1e-3);
    }
}
