//! Metrics against brute-force tallies and pairwise concordance.

use hesvm_core::metrics::{confusion, fit_through_origin, metrics, roc};
use proptest::prelude::*;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn bits(rng: &mut ChaCha20Rng, n: usize, p_one: f64) -> Vec<u8> {
    (0..n).map(|_| u8::from(((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64) < p_one)).collect()
}

#[test]
fn metrics_match_direct_formulas_on_1e5_pairs() {
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let pred = bits(&mut rng, 100_000, 0.45);
    let truth = bits(&mut rng, 100_000, 0.55);
    let c = confusion(&pred, &truth).unwrap();
    let m = metrics(&c).unwrap();

    let (mut tp, mut tn, mut fp, mut fn_) = (0.0, 0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(&truth) {
        match (p, t) {
            (1, 1) => tp += 1.0,
            (0, 0) => tn += 1.0,
            (1, 0) => fp += 1.0,
            _ => fn_ += 1.0,
        }
    }
    let acc = (tp + tn) / (tp + tn + fp + fn_);
    let pre = tp / (tp + fp);
    let rec = tp / (tp + fn_);
    let f1 = 2.0 * pre * rec / (pre + rec);
    assert!((m.accuracy - acc).abs() <= 1e-12);
    assert!((m.precision - pre).abs() <= 1e-12);
    assert!((m.recall - rec).abs() <= 1e-12);
    assert!((m.f1 - f1).abs() <= 1e-12);
    assert_eq!(c.total(), 100_000);
}

fn concordance(scores: &[f64], truth: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if truth[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if truth[j] != 0 {
                continue;
            }
            den += 1.0;
            num += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    num / den
}

#[test]
fn trapezoid_auc_equals_concordance() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for round in 0..20 {
        let truth = bits(&mut rng, 200, 0.5);
        // Every other round uses coarse scores so ties are exercised.
        let scores: Vec<f64> = truth
            .iter()
            .map(|&t| {
                let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                let s = u + 0.3 * t as f64;
                if round % 2 == 0 {
                    s
                } else {
                    (s * 8.0).floor()
                }
            })
            .collect();
        let r = roc(&scores, &truth).unwrap();
        assert!((r.auc - concordance(&scores, &truth)).abs() <= 1e-9);
    }
}

#[test]
fn timing_fit_through_origin() {
    let x = [10.0, 25.0, 50.0, 100.0];
    let y = [101.0, 248.0, 503.0, 998.0];
    let f = fit_through_origin(&x, &y).unwrap();
    assert!((f.slope - 9.984).abs() < 0.01);
    assert!(f.r_squared > 0.99);
}

proptest! {
    #[test]
    fn auc_invariant_under_increasing_maps(
        raw in prop::collection::hash_set(-1_000_000i64..1_000_000, 4..60),
        seed: u64,
    ) {
        let scores: Vec<f64> = raw.into_iter().map(|v| v as f64 / 1000.0).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut truth = bits(&mut rng, scores.len(), 0.5);
        truth[0] = 1;
        truth[1] = 0;
        let base = roc(&scores, &truth).unwrap().auc;
        let affine: Vec<f64> = scores.iter().map(|t| 2.0 * t + 3.0).collect();
        let cubic: Vec<f64> = scores.iter().map(|t| t * t * t).collect();
        prop_assert!((roc(&affine, &truth).unwrap().auc - base).abs() < 1e-12);
        prop_assert!((roc(&cubic, &truth).unwrap().auc - base).abs() < 1e-12);
    }

    #[test]
    fn roc_is_monotone_with_fixed_endpoints(
        scores in prop::collection::vec(-5.0f64..5.0, 2..80),
        seed: u64,
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut truth = bits(&mut rng, scores.len(), 0.5);
        truth[0] = 1;
        truth[1] = 0;
        let r = roc(&scores, &truth).unwrap();
        prop_assert_eq!(r.points[0], (0.0, 0.0));
        prop_assert_eq!(*r.points.last().unwrap(), (1.0, 1.0));
        for w in r.points.windows(2) {
            prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        prop_assert!((0.0..=1.0).contains(&r.auc));
    }
}
