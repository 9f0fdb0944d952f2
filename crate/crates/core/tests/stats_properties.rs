//! Statistical routines against enumeration and an independent library.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal};
use sumalign::stats::bootstrap::{
    bca_from_replicates, bca_interval, bca_interval_with, median, BcaOverride, ChaChaResampler,
};
use sumalign::stats::dist;
use sumalign::stats::{holm_correction, wilcoxon_signed_rank};

/// Two-sided exact p by listing all 2^n sign patterns over ranks 1..n.
fn brute_wilcoxon_p(deltas: &[f64]) -> f64 {
    let n = deltas.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| deltas[a].abs().total_cmp(&deltas[b].abs()));
    let mut w = 0usize;
    for (rank0, &i) in order.iter().enumerate() {
        if deltas[i] > 0.0 {
            w += rank0 + 1;
        }
    }
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let s: usize = (0..n).filter(|b| mask >> b & 1 == 1).map(|b| b + 1).sum();
        le += (s <= w) as u64;
        ge += (s >= w) as u64;
    }
    let total = (1u64 << n) as f64;
    (2.0 * (le.min(ge) as f64) / total).min(1.0)
}

fn distinct_deltas() -> impl Strategy<Value = Vec<f64>> {
    (1usize..=12)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::sample::subsequence((1..=40).collect::<Vec<u32>>(), n),
            )
        })
        .prop_flat_map(|(n, mags)| (Just(mags), prop::collection::vec(any::<bool>(), n)))
        .prop_map(|(mags, signs)| {
            mags.iter()
                .zip(signs)
                .map(|(&m, s)| if s { m as f64 } else { -(m as f64) })
                .collect()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn wilcoxon_exact_matches_sign_enumeration(d in distinct_deltas()) {
        let r = wilcoxon_signed_rank(&d).unwrap();
        prop_assert!(r.exact);
        prop_assert!((r.p_value - brute_wilcoxon_p(&d)).abs() < 1e-15);
    }

    #[test]
    fn wilcoxon_is_symmetric_under_negation(d in distinct_deltas()) {
        let neg: Vec<f64> = d.iter().map(|x| -x).collect();
        let a = wilcoxon_signed_rank(&d).unwrap();
        let b = wilcoxon_signed_rank(&neg).unwrap();
        prop_assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn holm_adjustments_are_bounded_and_ordered(p in prop::collection::vec(0.0f64..=1.0, 1..30)) {
        let adj = holm_correction(&p).unwrap();
        let m = p.len() as f64;
        for (raw, a) in p.iter().zip(&adj) {
            prop_assert!(a >= raw);
            prop_assert!(*a <= 1.0);
            prop_assert!(*a <= (raw * m).min(1.0) + 1e-15);
        }
        let mut idx: Vec<usize> = (0..p.len()).collect();
        idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
        for w in idx.windows(2) {
            prop_assert!(adj[w[0]] <= adj[w[1]]);
        }
        for alpha in [0.01, 0.05, 0.1] {
            for (raw, a) in p.iter().zip(&adj) {
                if raw * m < alpha {
                    prop_assert!(*a < alpha, "Bonferroni rejection kept by Holm");
                }
            }
        }
    }

    #[test]
    fn bca_is_affine_equivariant(data in prop::collection::vec(-5.0f64..5.0, 8..30), scale in 0.5f64..4.0, shift in -3.0f64..3.0, seed in any::<u64>()) {
        let base = bca_interval(&data, 400, 0.95, seed).unwrap();
        let moved: Vec<f64> = data.iter().map(|x| scale * x + shift).collect();
        let m = bca_interval(&moved, 400, 0.95, seed).unwrap();
        prop_assert!((m.lower - (scale * base.lower + shift)).abs() < 1e-9);
        prop_assert!((m.upper - (scale * base.upper + shift)).abs() < 1e-9);
    }

    #[test]
    fn bca_interval_is_ordered_and_from_replicates(data in prop::collection::vec(-1.0f64..1.0, 2..25), seed in any::<u64>()) {
        let (iv, reps) = bca_interval_with(&data, 300, 0.9, seed, &mut ChaChaResampler::new(seed), None).unwrap();
        prop_assert!(iv.lower <= iv.upper);
        prop_assert!(reps.contains(&iv.lower) && reps.contains(&iv.upper));
    }

    #[test]
    fn normal_functions_match_statrs(z in -8.0f64..8.0, p in 1e-12f64..(1.0 - 1e-12)) {
        // Coarse cross-check: statrs' normal CDF is built on its ~1e-10 erf.
        let n = Normal::standard();
        prop_assert!((dist::normal_cdf(z) - n.cdf(z)).abs() < 1e-9);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        prop_assert!(rel(dist::normal_sf(z), n.sf(z)) < 1e-8);
        prop_assert!((dist::normal_quantile(p) - n.inverse_cdf(p)).abs() < 1e-8);
    }

    #[test]
    fn gamma_and_beta_match_statrs(x in 0.05f64..60.0, a in 0.2f64..40.0, b in 0.2f64..40.0, t in 0.0f64..=1.0) {
        let lg = statrs::function::gamma::ln_gamma(x);
        prop_assert!((dist::ln_gamma(x) - lg).abs() < 1e-10 * lg.abs().max(1.0));
        prop_assert!((dist::beta_inc(a, b, t) - statrs::function::beta::beta_reg(a, b, t)).abs() < 1e-10);
    }

    #[test]
    fn f_survival_matches_statrs(f in 0.0f64..20.0, d1 in 1u32..20, d2 in 2u32..300) {
        let oracle = FisherSnedecor::new(d1 as f64, d2 as f64).unwrap().sf(f);
        prop_assert!((dist::f_sf(f, d1 as f64, d2 as f64) - oracle).abs() < 1e-9);
    }
}

/// `(x, erf x, erfc x)` from glibc via CPython's `math` module. statrs' erf
/// is only good to ~1e-10, so it is not used as the oracle here.
const ERF_TABLE: [(f64, f64, f64); 16] = [
    (-3.5, -0.9999992569016276, 1.9999992569016276),
    (-2.5, -0.999593047982555, 1.999593047982555),
    (-1.8890863722895883, -0.9924503028689665, 1.9924503028689664),
    (-1.0, -0.8427007929497149, 1.842700792949715),
    (-0.5, -0.5204998778130465, 1.5204998778130465),
    (-0.1, -0.1124629160182849, 1.1124629160182848),
    (1e-08, 1.1283791670955126e-08, 0.9999999887162083),
    (0.25, 0.2763263901682369, 0.7236736098317631),
    (0.75, 0.7111556336535151, 0.28884436634648486),
    (1.5, 0.9661051464753108, 0.033894853524689274),
    (1.99, 0.995111413199617, 0.004888586800383003),
    (2.0, 0.9953222650189527, 0.004677734981047265),
    (2.01, 0.9955248493552482, 0.004475150644751763),
    (3.0, 0.9999779095030014, 2.2090496998585438e-05),
    (4.5, 0.9999999998033839, 1.9661604415428873e-10),
    (5.9, 0.9999999999999999, 7.190409783550478e-17),
];

#[test]
fn erf_matches_libm_table() {
    for (x, e, ec) in ERF_TABLE {
        assert!((dist::erf(x) - e).abs() <= 4.0 * f64::EPSILON, "erf({x})");
        assert!((dist::erfc(x) - ec).abs() / ec < 1e-13, "erfc({x})");
    }
}

#[test]
fn holm_hand_case() {
    assert_eq!(
        holm_correction(&[0.01, 0.04, 0.03]).unwrap(),
        vec![0.03, 0.06, 0.06]
    );
}

#[test]
fn wilcoxon_exact_and_normal_agree_at_twenty() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let shift = rng.random_range(-0.6..0.6);
        let d: Vec<f64> = (0..20)
            .map(|_| rng.random_range(-1.0..1.0) + shift)
            .collect();
        let exact = wilcoxon_signed_rank(&d).unwrap();
        assert!(exact.exact);
        // One duplicated magnitude forces the tie-corrected normal path.
        let mut tied = d.clone();
        tied.push(d[0]);
        let approx_same = {
            let n = 20.0f64;
            let mean = n * (n + 1.0) / 4.0;
            let sd = (n * (n + 1.0) * (2.0 * n + 1.0) / 24.0).sqrt();
            let diff = exact.statistic - mean;
            let z = (diff - 0.5 * diff.signum()).abs() / sd;
            (2.0 * Normal::standard().sf(z)).min(1.0)
        };
        assert!(!wilcoxon_signed_rank(&tied).unwrap().exact);
        worst = worst.max((exact.p_value - approx_same).abs());
    }
    assert!(worst < 0.05, "largest exact/normal gap {worst}");
}

#[test]
fn forced_zero_bias_gives_percentile_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..1.0)).collect();
    let (_, reps) =
        bca_interval_with(&data, 1000, 0.95, 3, &mut ChaChaResampler::new(3), None).unwrap();
    let hook = Some(BcaOverride {
        z0: 0.0,
        accel: 0.0,
    });
    let iv = bca_from_replicates(&data, &reps, 0.95, 3, hook).unwrap();
    let mut sorted = reps.clone();
    sorted.sort_by(f64::total_cmp);
    // 2.5% and 97.5% of 1000 sorted replicates: the 25th and 975th values.
    assert_eq!(iv.lower, sorted[24]);
    assert_eq!(iv.upper, sorted[974]);
    assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
}
