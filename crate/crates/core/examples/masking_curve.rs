//! Accuracy as the most salient patches are masked, for several saliency
//! sources. Uses a linear patch model whose decisions depend on a single
//! patch, so attribution-guided masking hurts first.
//!
//! ```text
//! cargo run --example masking_curve
//! ```

use iavkit::bundle::{AnalysisBundle, AttributionTarget, BundleParts, LabelMode};
use iavkit::perturb::{masking_curve, SaliencySource};
use iavkit::scorer::{LinearPatchScorer, Scorer};
use iavkit::Tensor;
use rand::{Rng, SeedableRng};

fn main() -> iavkit::Result<()> {
    let (n, p, k) = (40, 16, 2);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);

    // Class 1 iff patch 5 is bright.
    let mut w = vec![0.0; k * p];
    w[p + 5] = 1.0;
    w[..p].fill(0.5 / p as f64);
    let scorer = LinearPatchScorer::new(Tensor::new(vec![k, p], w)?, 2)?;

    let mut images = Vec::new();
    for i in 0..n {
        let mut img: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..0.3)).collect();
        if i % 2 == 1 {
            for (r, c) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
                img[r * 8 + c] = 1.0;
            }
        }
        images.extend(img);
    }
    let images = Tensor::new(vec![n, 8, 8, 1], images)?;
    let labels: Vec<usize> = (0..n)
        .map(|i| scorer.predict(&Tensor::new(vec![8, 8, 1], images.slice(&[i]).unwrap().to_vec()).unwrap()))
        .collect::<iavkit::Result<_>>()?;

    // Attribution points at patch 5; attention is uniform.
    let mut attribution = vec![0.01; n * p];
    for i in 0..n {
        attribution[i * p + 5] = 1.0;
    }
    let parts = BundleParts {
        attention: Tensor::full(vec![n, 1, 1, p], 1.0 / p as f64)?,
        attribution: Tensor::new(vec![n, p], attribution)?,
        attribution_target: AttributionTarget::Predicted,
        labels: labels.clone(),
        predictions: labels,
        images: Some(images),
        class_names: vec!["plain".into(), "marked".into()],
        attribution_method: "oracle".into(),
        checkpoint_tag: String::new(),
        patch_size: Some(2),
    };
    let (bundle, _) = AnalysisBundle::from_parts(parts)?;

    let ratios: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    for source in [
        SaliencySource::Attribution(LabelMode::Predicted),
        SaliencySource::AttentionMean,
        SaliencySource::Random { seed: 1 },
    ] {
        let curve = masking_curve(&bundle, &scorer, source, &ratios, 0.0)?;
        let acc: Vec<String> = curve.iter().map(|c| format!("{:.2}", c.accuracy)).collect();
        println!("{:>16}: {}", source.label(), acc.join(" "));
    }
    Ok(())
}
