//! Shapiro–Wilk and Levene against values precomputed with SciPy.

use serde::Deserialize;
use sumalign::stats::{levene_test, shapiro_wilk};

#[derive(Deserialize)]
struct Fixtures {
    shapiro_wilk: Vec<ShapiroCase>,
    levene: Vec<LeveneCase>,
}

#[derive(Deserialize)]
struct ShapiroCase {
    name: String,
    data: Vec<f64>,
    w: f64,
    p: f64,
}

#[derive(Deserialize)]
struct LeveneCase {
    name: String,
    groups: Vec<Vec<f64>>,
    stat: f64,
    p: f64,
}

fn fixtures() -> Fixtures {
    serde_json::from_str(include_str!("fixtures/reference_stats.json")).unwrap()
}

#[test]
fn shapiro_matches_reference() {
    let f = fixtures();
    assert_eq!(f.shapiro_wilk.len(), 5);
    for c in f.shapiro_wilk {
        let r = shapiro_wilk(&c.data).unwrap();
        assert!(
            (r.w - c.w).abs() <= 1e-4,
            "{}: W {} vs {}",
            c.name,
            r.w,
            c.w
        );
        assert!(
            (r.p_value - c.p).abs() <= 1e-3,
            "{}: p {} vs {}",
            c.name,
            r.p_value,
            c.p
        );
    }
}

#[test]
fn levene_matches_reference() {
    let f = fixtures();
    assert_eq!(f.levene.len(), 5);
    for c in f.levene {
        let r = levene_test(&c.groups).unwrap();
        assert!(
            (r.statistic - c.stat).abs() <= 1e-4 * c.stat.abs().max(1.0),
            "{}: {} vs {}",
            c.name,
            r.statistic,
            c.stat
        );
        assert!(
            (r.p_value - c.p).abs() <= 1e-3,
            "{}: p {} vs {}",
            c.name,
            r.p_value,
            c.p
        );
    }
}
