//! METEOR with exact unigram matching and the linear fragmentation penalty.
//!
//! `P = m/|s|`, `R = m/|r|`, `Fmean = 10PR / (R + 9P)`,
//! `Penalty = 0.5 * chunks / m`, `score = Fmean * (1 - Penalty)`.
//!
//! The alignment always has the maximum possible number of matches `m`
//! (per token type, the smaller of its two counts). Among those alignments
//! the one with the fewest chunks is wanted. That is a minimum common string
//! partition problem (NP-hard in general), so the search runs in two stages:
//! a greedy longest-run tiling gives an upper bound, then a bounded
//! branch-and-bound tries to beat it. When the search finishes within its
//! node budget the chunk count is the exact minimum; otherwise the best
//! alignment found so far is kept and `exact` is false.

use std::collections::HashMap;

use super::TokenSeq;

/// Search nodes explored before the branch-and-bound stops.
pub const SEARCH_BUDGET: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorScore {
    pub score: f64,
    pub matches: usize,
    pub chunks: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_mean: f64,
    pub penalty: f64,
    /// Whether the chunk count is proven minimal.
    pub exact: bool,
}

impl MeteorScore {
    fn zero() -> Self {
        MeteorScore {
            score: 0.0,
            matches: 0,
            chunks: 0,
            precision: 0.0,
            recall: 0.0,
            f_mean: 0.0,
            penalty: 0.0,
            exact: true,
        }
    }
}

/// Matched `(candidate_pos, reference_pos)` pairs.
pub type Alignment = Vec<(usize, usize)>;

/// Chunks in an alignment: runs adjacent and in order on both sides.
pub fn count_chunks(alignment: &[(usize, usize)]) -> usize {
    let mut pairs = alignment.to_vec();
    pairs.sort_unstable();
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(c, r) in &pairs {
        match prev {
            Some((pc, pr)) if c == pc + 1 && r == pr + 1 => {}
            _ => chunks += 1,
        }
        prev = Some((c, r));
    }
    chunks
}

/// Maximum number of exact unigram matches.
pub fn max_matches(reference: &[String], candidate: &[String]) -> usize {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for t in reference {
        counts.entry(t).or_default().0 += 1;
    }
    for t in candidate {
        counts.entry(t).or_default().1 += 1;
    }
    counts.values().map(|&(r, c)| r.min(c)).sum()
}

/// Repeatedly aligns the longest run of still-unmatched tokens that occurs
/// contiguously in both sequences (earliest candidate, then reference,
/// position on ties).
pub fn greedy_alignment(reference: &[String], candidate: &[String]) -> Alignment {
    let (nr, nc) = (reference.len(), candidate.len());
    let mut used_r = vec![false; nr];
    let mut used_c = vec![false; nc];
    let mut alignment = Vec::new();
    loop {
        // run[i][j]: length of the common unmatched run ending at c[i-1], r[j-1].
        let mut best = (0usize, 0usize, 0usize);
        let mut prev = vec![0usize; nr + 1];
        let mut cur = vec![0usize; nr + 1];
        for i in 0..nc {
            for j in 0..nr {
                cur[j + 1] = if !used_c[i] && !used_r[j] && candidate[i] == reference[j] {
                    prev[j] + 1
                } else {
                    0
                };
                let len = cur[j + 1];
                if len > 0 {
                    let (ci, rj) = (i + 1 - len, j + 1 - len);
                    if len > best.0 || (len == best.0 && (ci, rj) < (best.1, best.2)) {
                        best = (len, ci, rj);
                    }
                }
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        let (len, ci, rj) = best;
        if len == 0 {
            break;
        }
        for k in 0..len {
            used_c[ci + k] = true;
            used_r[rj + k] = true;
            alignment.push((ci + k, rj + k));
        }
    }
    alignment.sort_unstable();
    alignment
}

struct Search<'a> {
    candidate: &'a [String],
    /// Reference positions per token type.
    positions: HashMap<&'a str, Vec<usize>>,
    /// Candidate occurrences of each type at or after position i.
    remaining_c: Vec<HashMap<&'a str, usize>>,
    quota: HashMap<&'a str, usize>,
    used_r: Vec<bool>,
    current: Alignment,
    best: Alignment,
    best_chunks: usize,
    nodes: usize,
    exhausted: bool,
}

impl<'a> Search<'a> {
    fn run(&mut self, i: usize, chunks: usize, last: Option<(usize, usize)>) {
        if chunks >= self.best_chunks {
            return;
        }
        self.nodes += 1;
        if self.nodes > SEARCH_BUDGET {
            self.exhausted = true;
            return;
        }
        if i == self.candidate.len() {
            self.best = self.current.clone();
            self.best_chunks = chunks;
            return;
        }
        let tok = self.candidate[i].as_str();
        let need = self.quota.get(tok).copied().unwrap_or(0);
        if need > 0 {
            let extend = last.filter(|&(c, _)| c + 1 == i).map(|(_, r)| r + 1);
            let mut options: Vec<usize> = self.positions[tok]
                .iter()
                .copied()
                .filter(|&r| !self.used_r[r])
                .collect();
            if let Some(e) = extend {
                if let Some(p) = options.iter().position(|&r| r == e) {
                    options.remove(p);
                    options.insert(0, e);
                }
            }
            for r in options {
                let new_chunks = if Some(r) == extend {
                    chunks
                } else {
                    chunks + 1
                };
                self.used_r[r] = true;
                *self.quota.get_mut(tok).unwrap() -= 1;
                self.current.push((i, r));
                self.run(i + 1, new_chunks, Some((i, r)));
                self.current.pop();
                *self.quota.get_mut(tok).unwrap() += 1;
                self.used_r[r] = false;
                if self.exhausted {
                    return;
                }
            }
        }
        // Skipping keeps m maximal only if enough later occurrences remain.
        let later = self.remaining_c[i + 1].get(tok).copied().unwrap_or(0);
        if later >= need {
            self.run(i + 1, chunks, last);
        }
    }
}

/// Maximum-match alignment with as few chunks as the search can prove,
/// plus whether minimality was proven.
pub fn min_chunk_alignment(reference: &[String], candidate: &[String]) -> (Alignment, bool) {
    let greedy = greedy_alignment(reference, candidate);
    let greedy_chunks = count_chunks(&greedy);
    if greedy_chunks <= 1 {
        return (greedy, true);
    }
    let mut positions: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, t) in reference.iter().enumerate() {
        positions.entry(t).or_default().push(j);
    }
    let mut remaining_c = vec![HashMap::new(); candidate.len() + 1];
    for i in (0..candidate.len()).rev() {
        let mut m = remaining_c[i + 1].clone();
        *m.entry(candidate[i].as_str()).or_insert(0) += 1;
        remaining_c[i] = m;
    }
    let mut quota = HashMap::new();
    for (tok, pos) in &positions {
        let c = remaining_c[0].get(tok).copied().unwrap_or(0);
        quota.insert(*tok, pos.len().min(c));
    }
    let mut search = Search {
        candidate,
        positions,
        remaining_c,
        quota,
        used_r: vec![false; reference.len()],
        current: Vec::new(),
        best: greedy,
        best_chunks: greedy_chunks,
        nodes: 0,
        exhausted: false,
    };
    search.run(0, 0, None);
    let exact = !search.exhausted;
    (search.best, exact)
}

pub fn meteor(reference: &TokenSeq, candidate: &TokenSeq) -> MeteorScore {
    let (r, c) = (&reference.tokens, &candidate.tokens);
    if r.is_empty() || c.is_empty() || max_matches(r, c) == 0 {
        return MeteorScore::zero();
    }
    let (alignment, exact) = min_chunk_alignment(r, c);
    let m = alignment.len();
    let chunks = count_chunks(&alignment);
    let precision = m as f64 / c.len() as f64;
    let recall = m as f64 / r.len() as f64;
    let f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (chunks as f64 / m as f64);
    MeteorScore {
        score: f_mean * (1.0 - penalty),
        matches: m,
        chunks,
        precision,
        recall,
        f_mean,
        penalty,
        exact,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tokenize;

    #[test]
    fn identical_contiguous() {
        let t = tokenize("a b c d");
        let s = meteor(&t, &t);
        assert_eq!((s.matches, s.chunks), (4, 1));
        assert_eq!(s.f_mean, 1.0);
        assert_eq!(s.penalty, 0.125);
        assert_eq!(s.score, 0.875);
    }

    #[test]
    fn swapped_halves() {
        let s = meteor(&tokenize("a b c d"), &tokenize("c d a b"));
        assert_eq!((s.matches, s.chunks), (4, 2));
        assert_eq!(s.penalty, 0.25);
        assert_eq!(s.score, 0.75);
    }

    #[test]
    fn no_overlap() {
        assert_eq!(meteor(&tokenize("a b"), &tokenize("x y")).score, 0.0);
        assert_eq!(meteor(&tokenize(""), &tokenize("x y")).score, 0.0);
    }

    #[test]
    fn search_never_worse_than_greedy() {
        let r = tokenize("a b c d e b c");
        let c = tokenize("b c d e a b c");
        let (al, exact) = min_chunk_alignment(&r.tokens, &c.tokens);
        assert!(exact);
        assert_eq!(al.len(), max_matches(&r.tokens, &c.tokens));
        assert!(count_chunks(&al) <= count_chunks(&greedy_alignment(&r.tokens, &c.tokens)));
    }

    #[test]
    fn chunk_counting() {
        assert_eq!(count_chunks(&[(0, 2), (1, 3), (2, 0), (3, 1)]), 2);
        assert_eq!(count_chunks(&[(0, 1), (1, 0)]), 2);
        assert_eq!(count_chunks(&[]), 0);
    }
}
