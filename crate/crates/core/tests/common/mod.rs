//! Fixtures and scalar-loop oracles shared by the integration tests.
#![allow(dead_code)]

use iavkit::bundle::{AnalysisBundle, AttributionTarget, BundleParts};
use iavkit::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability vector with strictly positive entries.
pub fn probability(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..p).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

pub fn nonnegative(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    (0..p).map(|_| rng.random_range(0.0..1.0)).collect()
}

/// Cosine by explicit loops, no shared helpers.
pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

pub fn oracle_entropy(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &v in p {
        if v > 0.0 {
            h -= v * v.ln();
        }
    }
    h
}

/// Bundle with one attribution map per sample (predicted class) and labels
/// equal to predictions.
pub fn bundle(
    n: usize,
    l: usize,
    h: usize,
    p: usize,
    attention: Vec<f64>,
    attribution: Vec<f64>,
) -> AnalysisBundle {
    let parts = BundleParts {
        attention: Tensor::new(vec![n, l, h, p], attention).unwrap(),
        attribution: Tensor::new(vec![n, p], attribution).unwrap(),
        attribution_target: AttributionTarget::Predicted,
        labels: vec![0; n],
        predictions: vec![0; n],
        images: None,
        class_names: vec!["only".into()],
        attribution_method: "fixture".into(),
        checkpoint_tag: "fixture".into(),
        patch_size: None,
    };
    AnalysisBundle::from_parts(parts).unwrap().0
}

/// Seeded random bundle: probability-vector attention, non-negative attribution.
pub fn random_bundle(seed: u64, n: usize, l: usize, h: usize, p: usize) -> AnalysisBundle {
    let mut r = rng(seed);
    let attention: Vec<f64> = (0..n * l * h).flat_map(|_| probability(&mut r, p)).collect();
    let attribution: Vec<f64> = (0..n).flat_map(|_| nonnegative(&mut r, p)).collect();
    bundle(n, l, h, p, attention, attribution)
}

/// Silhouette coefficient with Euclidean distance, by direct loops.
pub fn silhouette(points: &[(f64, f64)], labels: &[usize]) -> f64 {
    let n = points.len();
    let k = labels.iter().max().unwrap() + 1;
    let dist = |i: usize, j: usize| {
        let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
        (dx * dx + dy * dy).sqrt()
    };
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += dist(i, j);
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

/// Three well-separated Gaussian clusters of `per` points each in `d` dims.
pub fn clusters(seed: u64, per: usize, d: usize) -> (Tensor, Vec<usize>) {
    use rand_distr::{Distribution, Normal};
    let mut r = rng(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut data = Vec::with_capacity(3 * per * d);
    let mut labels = Vec::new();
    for c in 0..3 {
        for _ in 0..per {
            for k in 0..d {
                let center = if k % 3 == c { 10.0 } else { 0.0 };
                data.push(center + noise.sample(&mut r));
            }
            labels.push(c);
        }
    }
    (Tensor::new(vec![3 * per, d], data).unwrap(), labels)
}
