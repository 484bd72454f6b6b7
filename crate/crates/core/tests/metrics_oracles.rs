mod common;

use iavkit::attribution::AttributionMap;
use iavkit::bundle::LabelMode;
use iavkit::metrics::{
    aav, attention_entropy, checkpoint_diff, classify_heads, entropy_profile, global_iav, ia_score, iav_all,
    Baseline, DiffTarget, HeadType,
};
use iavkit::Tensor;
use proptest::prelude::*;

const N: usize = 16;
const L: usize = 2;
const H: usize = 2;
const P: usize = 16;

fn row(b: &iavkit::bundle::AnalysisBundle, i: usize, l: usize, h: usize) -> Vec<f64> {
    let base = ((i * L + l) * H + h) * P;
    b.attention().data()[base..base + P].to_vec()
}

#[test]
fn iav_and_global_match_scalar_loops() {
    let b = common::random_bundle(42, N, L, H, P);
    let iavs = iav_all(&b, LabelMode::Predicted).unwrap();
    let mut sums = vec![0.0; L * H];
    for (i, iav) in iavs.iter().enumerate() {
        let attr = &b.attribution().data()[i * P..(i + 1) * P];
        assert_eq!(iav.scores.len(), L * H);
        for l in 0..L {
            for h in 0..H {
                let expected = common::oracle_cosine(attr, &row(&b, i, l, h));
                assert!((iav.get(l, h) - expected).abs() < 1e-12);
                sums[l * H + h] += expected;
            }
        }
    }
    let g = global_iav(&b, LabelMode::Predicted).unwrap();
    for (got, sum) in g.scores.iter().zip(&sums) {
        assert!((got - sum / N as f64).abs() < 1e-12);
    }
}

#[test]
fn attribution_equal_to_attention_gives_all_ones() {
    // One head per layer so each sample's attribution can equal every head.
    let mut r = common::rng(7);
    let mut attention = Vec::new();
    let mut attribution = Vec::new();
    for _ in 0..N {
        let p = common::probability(&mut r, P);
        for _ in 0..L * H {
            attention.extend_from_slice(&p);
        }
        attribution.extend(p.iter().map(|v| v * 3.0));
    }
    let b = common::bundle(N, L, H, P, attention, attribution);
    let g = global_iav(&b, LabelMode::Predicted).unwrap();
    assert!(g.scores.iter().all(|s| (s - 1.0).abs() < 1e-9));
}

#[test]
fn entropy_profile_matches_loops() {
    let b = common::random_bundle(3, N, L, H, P);
    let e = entropy_profile(&b).unwrap();
    for l in 0..L {
        for h in 0..H {
            let mean = (0..N).map(|i| common::oracle_entropy(&row(&b, i, l, h))).sum::<f64>() / N as f64;
            assert!((e.get(l, h) - mean).abs() < 1e-12);
        }
    }
    assert!((e.max_entropy - (P as f64).ln()).abs() < 1e-15);
}

#[test]
fn uniform_baseline_scores_at_least_inverse_sqrt_p() {
    let b = common::random_bundle(5, 6, L, H, P);
    let uniform = AttributionMap::new(Tensor::full(vec![P], 1.0).unwrap(), 0, "uniform");
    let g = aav(&b, &Baseline::Shared(uniform), "uniform").unwrap();
    assert!(g.scores.iter().all(|s| *s >= 1.0 / (P as f64).sqrt() - 1e-12));
    assert_eq!(g.label_mode, None);
}

#[test]
fn checkpoint_diff_matches_loop_oracle() {
    let a = common::random_bundle(10, 4, L, H, P);
    let b = common::random_bundle(11, 4, L, H, P);
    let unit = |v: &[f64]| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect::<Vec<_>>()
    };
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();

    let mut attr = 0.0;
    let mut att = 0.0;
    for i in 0..4 {
        let fa = &a.attribution().data()[i * P..(i + 1) * P];
        let fb = &b.attribution().data()[i * P..(i + 1) * P];
        attr += dist(&unit(fa), &unit(fb));
        let mut per_head = 0.0;
        for l in 0..L {
            for h in 0..H {
                per_head += dist(&unit(&row(&a, i, l, h)), &unit(&row(&b, i, l, h)));
            }
        }
        att += per_head / (L * H) as f64;
    }
    assert!((checkpoint_diff(&a, &b, DiffTarget::Attribution).unwrap() - attr / 4.0).abs() < 1e-12);
    assert!((checkpoint_diff(&a, &b, DiffTarget::Attention).unwrap() - att / 4.0).abs() < 1e-12);
    assert_eq!(checkpoint_diff(&a, &a, DiffTarget::Attribution).unwrap(), 0.0);
}

#[test]
fn disjoint_supports_differ_by_sqrt_two() {
    let mut x = vec![0.0; P];
    x[0] = 1.0;
    let mut y = vec![0.0; P];
    y[1] = 2.0;
    let att = vec![1.0 / P as f64; P];
    let a = common::bundle(1, 1, 1, P, att.clone(), x);
    let b = common::bundle(1, 1, 1, P, att, y);
    let d = checkpoint_diff(&a, &b, DiffTarget::Attribution).unwrap();
    assert!((d - 2f64.sqrt()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ia_score_is_bounded_and_scale_invariant(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let mut r = common::rng(seed);
        let attr = common::nonnegative(&mut r, P);
        let att = common::probability(&mut r, P);
        let s = ia_score(&attr, &att).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&s));
        let scaled: Vec<f64> = attr.iter().map(|v| v * c).collect();
        prop_assert!((ia_score(&scaled, &att).unwrap().value - s).abs() < 1e-12);
    }

    #[test]
    fn global_iav_ignores_sample_order(seed in any::<u64>(), shift in 1usize..8) {
        let n = 8;
        let b = common::random_bundle(seed, n, L, H, P);
        let order: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let att: Vec<f64> = order.iter().flat_map(|&i| b.attention().data()[i * L * H * P..(i + 1) * L * H * P].to_vec()).collect();
        let attr: Vec<f64> = order.iter().flat_map(|&i| b.attribution().data()[i * P..(i + 1) * P].to_vec()).collect();
        let shuffled = common::bundle(n, L, H, P, att, attr);
        let g1 = global_iav(&b, LabelMode::Predicted).unwrap();
        let g2 = global_iav(&shuffled, LabelMode::Predicted).unwrap();
        for (x, y) in g1.scores.iter().zip(&g2.scores) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_stays_within_bounds(seed in any::<u64>(), p in 1usize..64) {
        let mut r = common::rng(seed);
        let v = common::probability(&mut r, p);
        let h = attention_entropy(&v).unwrap();
        prop_assert!(h >= 0.0 && h <= (p as f64).ln() + 1e-12);
    }

    #[test]
    fn head_types_partition_all_heads(seed in any::<u64>()) {
        let b = common::random_bundle(seed, 5, 3, 2, 9);
        let heads = classify_heads(&b).unwrap();
        let high = heads.iter().filter(|h| h.head_type == HeadType::High).count();
        let low = heads.iter().filter(|h| h.head_type == HeadType::Low).count();
        prop_assert_eq!(high + low, 6);
        for h in &heads {
            prop_assert_eq!(h.head_type == HeadType::High, h.ia_score.median >= 0.5);
        }
    }
}
