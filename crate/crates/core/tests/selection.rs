//! Key-sentence retrieval and random addition.

use proptest::prelude::*;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sumalign::corpus::{segment_doc, AbstractDoc};
use sumalign::embeddings::{
    l2_distance, top_k_nearest, EmbeddingBackend, EmbeddingBackendConfig, EmbeddingVector,
};
use sumalign::prompting::{
    build_prompt, select_for_paper, select_random_sentences, KeyCount, PromptMethod,
};

/// Replays the documented draw sequence: ChaCha8 from `seed`, one u64 per
/// step, index `i + floor(draw * (len - i) / 2^64)`.
fn replay(n: usize, keys: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).filter(|i| !keys.contains(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..k {
        let span = (pool.len() - i) as u128;
        let j = i + ((rng.next_u64() as u128 * span) >> 64) as usize;
        pool.swap(i, j);
    }
    let mut out = pool[..k].to_vec();
    out.sort();
    out
}

fn vectors(dim: usize, max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, dim), 1..max)
}

fn ev(v: &[f64]) -> EmbeddingVector {
    EmbeddingVector::new(v.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn random_selection_replays_the_draw_sequence(n in 3usize..20, seed in any::<u64>(), k in 1usize..=2, key in 0usize..20) {
        let keys: Vec<usize> = vec![key % n];
        prop_assume!(n - keys.len() >= k);
        let got = select_random_sentences(n, &keys, k, seed).unwrap();
        prop_assert_eq!(&got, &replay(n, &keys, k, seed));
        prop_assert!(got.iter().all(|i| !keys.contains(i) && *i < n));
        prop_assert!(got.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn top_k_matches_full_sort(rows in vectors(4, 25), q in prop::collection::vec(-10.0f64..10.0, 4), k in 1usize..6) {
        let cands: Vec<EmbeddingVector> = rows.iter().map(|r| ev(r)).collect();
        prop_assume!(k <= cands.len());
        let query = ev(&q);
        let got = top_k_nearest(&query, &cands, k).unwrap();
        let mut all: Vec<(f64, usize)> = cands
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let d: f64 = q.iter().zip(c.components()).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, i)
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<usize> = all.iter().take(k).map(|p| p.1).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn l2_is_a_metric(a in prop::collection::vec(-5.0f64..5.0, 6), b in prop::collection::vec(-5.0f64..5.0, 6), c in prop::collection::vec(-5.0f64..5.0, 6)) {
        let (a, b, c) = (ev(&a), ev(&b), ev(&c));
        let ab = l2_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, l2_distance(&b, &a).unwrap());
        prop_assert_eq!(l2_distance(&a, &a).unwrap(), 0.0);
        prop_assert!(ab <= l2_distance(&a, &c).unwrap() + l2_distance(&c, &b).unwrap() + 1e-12);
    }
}

#[test]
fn random_selection_is_roughly_uniform() {
    // 10 sentences, key {0, 1}, K = 2: each of 8 others should appear in 1/4 of draws.
    let mut hits = [0usize; 10];
    let trials = 20_000;
    for seed in 0..trials {
        for i in select_random_sentences(10, &[0, 1], 2, seed).unwrap() {
            hits[i] += 1;
        }
    }
    assert_eq!(hits[0] + hits[1], 0);
    for &h in &hits[2..] {
        let frac = h as f64 / trials as f64;
        assert!((frac - 0.25).abs() < 0.015, "{hits:?}");
    }
}

#[test]
fn random_selection_needs_enough_sentences() {
    assert!(select_random_sentences(3, &[0, 1], 2, 1).is_err());
    assert_eq!(
        select_random_sentences(4, &[0, 1], 2, 1).unwrap(),
        vec![2, 3]
    );
}

#[test]
fn paper_selection_feeds_prompts() {
    let doc = AbstractDoc::new(
        "p1",
        "T",
        "We built a method. The result was strong. Our conclusion is cautious. Data came from farms. Costs were low.",
    );
    let split = segment_doc(&doc).unwrap();
    let embedder = EmbeddingBackend::new(EmbeddingBackendConfig::deterministic(32)).unwrap();
    let sel = select_for_paper(&split, 2, &embedder, 9, true).unwrap();
    assert_eq!(sel.key_indices.len(), 2);
    assert_eq!(sel.random_indices.len(), 2);
    assert!(sel
        .random_indices
        .iter()
        .all(|i| !sel.key_indices.contains(i)));
    assert_eq!(
        sel,
        select_for_paper(&split, 2, &embedder, 9, true).unwrap()
    );

    let cr = build_prompt(PromptMethod::Cr(KeyCount::Two), &doc, Some(&sel)).unwrap();
    assert_eq!(cr.abstract_text(), doc.text);
    for &i in &sel.key_indices {
        let s = &split.sentences[i].text;
        assert_eq!(
            cr.prompt_text.matches(s.as_str()).count(),
            2,
            "{s} repeated once"
        );
    }
    let ra = build_prompt(PromptMethod::Ra(KeyCount::Two), &doc, Some(&sel)).unwrap();
    assert!(ra.prompt_text.len() > ra.abstract_range.end);
    assert!(build_prompt(PromptMethod::Cr(KeyCount::One), &doc, Some(&sel)).is_err());
    assert!(build_prompt(PromptMethod::Pe1, &doc, Some(&sel)).is_err());
}
