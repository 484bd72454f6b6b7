//! Agreement between attention maps and input attribution.
//!
//! The IA-Score of a head is the cosine between its CLS attention over patches
//! and the patch-pooled attribution map of the class being explained. Stacking
//! the scores of all `L·H` heads (layer-major) gives the IA-Score vector
//! (IAV); averaging IAVs over samples gives the global IAV. Swapping the
//! attribution for any other patch-level baseline (segmentation masks, another
//! model's saliency) gives an "any-baseline" agreement vector (AAV).
//!
//! Also here: attention entropy per head, High/Low head typing by median
//! IA-Score, and the checkpoint-to-final heatmap distance.
//!
//! Per-sample work runs in parallel, but every reduction sums in sample order,
//! so results are bit-identical for any thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::attribution::{validate_external_attribution, AttributionMap};
use crate::bundle::{AnalysisBundle, AttributionTarget, LabelMode};
use crate::error::{Error, Result};
use crate::tensor::{dot, l2_normalize};

/// Median IA-Score separating High from Low heads.
pub const HEAD_TYPE_THRESHOLD: f64 = 0.5;

/// Probability vectors may be off by this much in total mass.
pub const PROBABILITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IaScore {
    pub value: f64,
    /// The attribution map was all zeros; `value` is 0 by convention.
    pub degenerate: bool,
}

/// Cosine agreement of a non-negative attribution map with an attention
/// vector, both at patch resolution. An all-zero attribution scores 0 and is
/// flagged instead of failing.
pub fn ia_score(attribution: &[f64], attention: &[f64]) -> Result<IaScore> {
    if attribution.len() != attention.len() || attribution.is_empty() {
        return Err(Error::shape(format!(
            "attribution has {} patches, attention {}",
            attribution.len(),
            attention.len()
        )));
    }
    if attribution.iter().chain(attention).any(|v| *v < 0.0) {
        return Err(Error::InvalidArgument(
            "IA-Score inputs must be non-negative".into(),
        ));
    }
    let (Ok(a), Ok(b)) = (l2_normalize(attribution), l2_normalize(attention)) else {
        return Ok(IaScore {
            value: 0.0,
            degenerate: true,
        });
    };
    Ok(IaScore {
        value: dot(&a, &b).clamp(0.0, 1.0),
        degenerate: false,
    })
}

/// IA-Scores of every head for one sample and class, layer-major:
/// index `l·H + h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IavVector {
    pub scores: Vec<f64>,
    pub n_layers: usize,
    pub n_heads: usize,
    pub sample_index: usize,
    pub class_index: usize,
    /// `(layer, head)` pairs whose score hit the zero-attribution convention.
    pub degenerate_heads: Vec<(usize, usize)>,
}

impl IavVector {
    pub fn get(&self, layer: usize, head: usize) -> f64 {
        self.scores[layer * self.n_heads + head]
    }

    /// The `H` scores of one layer.
    pub fn layer(&self, layer: usize) -> &[f64] {
        &self.scores[layer * self.n_heads..(layer + 1) * self.n_heads]
    }
}

fn iav_against(
    bundle: &AnalysisBundle,
    sample: usize,
    class: usize,
    baseline: &[f64],
) -> Result<IavVector> {
    let (n_layers, n_heads) = (bundle.n_layers(), bundle.n_heads());
    let mut scores = Vec::with_capacity(n_layers * n_heads);
    let mut degenerate_heads = Vec::new();
    for l in 0..n_layers {
        for h in 0..n_heads {
            let s = ia_score(baseline, bundle.attention_row(sample, l, h)?)?;
            if s.degenerate {
                degenerate_heads.push((l, h));
            }
            scores.push(s.value);
        }
    }
    Ok(IavVector {
        scores,
        n_layers,
        n_heads,
        sample_index: sample,
        class_index: class,
        degenerate_heads,
    })
}

/// IAV of `sample` against its attribution map for `class`.
pub fn iav(bundle: &AnalysisBundle, sample: usize, class: usize) -> Result<IavVector> {
    let attribution = bundle.attribution_for(sample, class)?;
    iav_against(bundle, sample, class, attribution)
}

/// IAVs of all samples, each against the class `mode` selects.
pub fn iav_all(bundle: &AnalysisBundle, mode: LabelMode) -> Result<Vec<IavVector>> {
    (0..bundle.n_samples())
        .into_par_iter()
        .map(|i| iav(bundle, i, bundle.class_for(i, mode)?))
        .collect()
}

/// Per-head mean agreement over a sample set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalIav {
    pub scores: Vec<f64>,
    pub n_layers: usize,
    pub n_heads: usize,
    pub n_samples: usize,
    /// Class selection for IAV; `None` for class-independent baselines.
    pub label_mode: Option<LabelMode>,
    pub baseline_tag: String,
}

impl GlobalIav {
    pub fn get(&self, layer: usize, head: usize) -> f64 {
        self.scores[layer * self.n_heads + head]
    }

    pub fn layer(&self, layer: usize) -> &[f64] {
        &self.scores[layer * self.n_heads..(layer + 1) * self.n_heads]
    }

    /// Mean score over the heads of one layer.
    pub fn layer_mean(&self, layer: usize) -> f64 {
        let s = self.layer(layer);
        s.iter().sum::<f64>() / s.len() as f64
    }
}

/// Elementwise mean in input order.
fn mean_vectors(vectors: &[IavVector]) -> Vec<f64> {
    let mut acc = vec![0.0; vectors[0].scores.len()];
    for v in vectors {
        for (a, s) in acc.iter_mut().zip(&v.scores) {
            *a += s;
        }
    }
    let n = vectors.len() as f64;
    acc.into_iter().map(|a| a / n).collect()
}

/// Mean IAV over all samples. The mean (not the sum) keeps scores in `[0, 1]`
/// and comparable across sample counts; multiply by `n_samples` for the sum.
pub fn global_iav(bundle: &AnalysisBundle, mode: LabelMode) -> Result<GlobalIav> {
    let vectors = iav_all(bundle, mode)?;
    if vectors.is_empty() {
        return Err(Error::EmptyBundle);
    }
    Ok(GlobalIav {
        scores: mean_vectors(&vectors),
        n_layers: bundle.n_layers(),
        n_heads: bundle.n_heads(),
        n_samples: vectors.len(),
        label_mode: Some(mode),
        baseline_tag: "self-attribution".into(),
    })
}

/// Baseline maps for [`aav`].
#[derive(Debug, Clone)]
pub enum Baseline {
    /// One map used for every sample.
    Shared(AttributionMap),
    /// One map per sample, in sample order.
    PerSample(Vec<AttributionMap>),
}

/// Global agreement of every head with an arbitrary baseline map.
pub fn aav(bundle: &AnalysisBundle, baseline: &Baseline, tag: &str) -> Result<GlobalIav> {
    let n = bundle.n_samples();
    let p = bundle.n_patches();
    let ps = bundle.patch_size();
    let validate = |m: &AttributionMap| -> Result<Vec<f64>> {
        Ok(validate_external_attribution(m, p, ps)?.map.values.into_data())
    };
    let maps: Vec<Vec<f64>> = match baseline {
        Baseline::Shared(m) => vec![validate(m)?; n],
        Baseline::PerSample(ms) => {
            if ms.len() != n {
                return Err(Error::shape(format!(
                    "{} baseline maps for {n} samples",
                    ms.len()
                )));
            }
            ms.iter().map(validate).collect::<Result<_>>()?
        }
    };
    let vectors: Vec<IavVector> = maps
        .par_iter()
        .enumerate()
        .map(|(i, m)| iav_against(bundle, i, bundle.predictions()[i], m))
        .collect::<Result<_>>()?;
    Ok(GlobalIav {
        scores: mean_vectors(&vectors),
        n_layers: bundle.n_layers(),
        n_heads: bundle.n_heads(),
        n_samples: n,
        label_mode: None,
        baseline_tag: tag.to_string(),
    })
}

/// Shannon entropy (natural log) of a probability vector; `0·ln 0 = 0`.
pub fn attention_entropy(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::NotAProbabilityVector("empty vector".into()));
    }
    if let Some(v) = probs.iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::NotAProbabilityVector(format!("entry {v}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(Error::NotAProbabilityVector(format!("sums to {total}")));
    }
    let h: f64 = probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    // Rounding can leave tiny excursions past the bounds.
    Ok(h.clamp(0.0, (probs.len() as f64).ln()))
}

/// Five-number summary plus mean and variance of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
}

impl Summary {
    /// Quartiles use linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyBundle);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let variance = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            min: sorted[0],
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
            mean,
            variance,
        })
    }
}

/// Quantile of sorted data, interpolating at position `q·(n-1)`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Head-by-head attention entropy over a bundle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyProfile {
    pub n_layers: usize,
    pub n_heads: usize,
    /// Mean entropy per head, layer-major `[L·H]`.
    pub mean: Vec<f64>,
    /// Distribution over samples per head, layer-major.
    pub stats: Vec<Summary>,
    /// `ln P`, the entropy of uniform attention.
    pub max_entropy: f64,
}

impl EntropyProfile {
    pub fn get(&self, layer: usize, head: usize) -> f64 {
        self.mean[layer * self.n_heads + head]
    }
}

/// Entropy of every head for every sample, `[N][L·H]`.
fn entropy_matrix(bundle: &AnalysisBundle) -> Result<Vec<Vec<f64>>> {
    (0..bundle.n_samples())
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(bundle.n_layers() * bundle.n_heads());
            for l in 0..bundle.n_layers() {
                for h in 0..bundle.n_heads() {
                    row.push(attention_entropy(bundle.attention_row(i, l, h)?)?);
                }
            }
            Ok(row)
        })
        .collect()
}

/// Column `j` of a row-major matrix held as rows.
fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

pub fn entropy_profile(bundle: &AnalysisBundle) -> Result<EntropyProfile> {
    let matrix = entropy_matrix(bundle)?;
    if matrix.is_empty() {
        return Err(Error::EmptyBundle);
    }
    let heads = bundle.n_layers() * bundle.n_heads();
    let stats = (0..heads)
        .map(|j| Summary::of(&column(&matrix, j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EntropyProfile {
        n_layers: bundle.n_layers(),
        n_heads: bundle.n_heads(),
        mean: stats.iter().map(|s| s.mean).collect(),
        stats,
        max_entropy: (bundle.n_patches() as f64).ln(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HeadType {
    High,
    Low,
}

impl HeadType {
    /// High iff the median reaches the threshold; an exact tie counts as High.
    pub fn from_median(median: f64) -> Self {
        if median >= HEAD_TYPE_THRESHOLD {
            HeadType::High
        } else {
            HeadType::Low
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HeadType::High => "High",
            HeadType::Low => "Low",
        }
    }
}

/// IA-Score distribution and entropy of one head across samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadProfile {
    pub layer: usize,
    pub head: usize,
    pub ia_score: Summary,
    pub mean_entropy: f64,
    pub head_type: HeadType,
}

/// Profiles every head using attribution for the predicted class.
pub fn classify_heads(bundle: &AnalysisBundle) -> Result<Vec<HeadProfile>> {
    classify_heads_with(bundle, LabelMode::Predicted)
}

pub fn classify_heads_with(bundle: &AnalysisBundle, mode: LabelMode) -> Result<Vec<HeadProfile>> {
    let iavs = iav_all(bundle, mode)?;
    if iavs.is_empty() {
        return Err(Error::EmptyBundle);
    }
    let score_rows: Vec<Vec<f64>> = iavs.into_iter().map(|v| v.scores).collect();
    let entropy = entropy_profile(bundle)?;
    let n_heads = bundle.n_heads();
    (0..bundle.n_layers() * n_heads)
        .map(|j| {
            let ia = Summary::of(&column(&score_rows, j))?;
            Ok(HeadProfile {
                layer: j / n_heads,
                head: j % n_heads,
                ia_score: ia,
                mean_entropy: entropy.mean[j],
                head_type: HeadType::from_median(ia.median),
            })
        })
        .collect()
}

/// Which heatmap [`checkpoint_diff`] compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffTarget {
    Attribution,
    Attention,
}

/// Unit-normalized copy; the zero vector stays zero.
fn unit_or_zero(v: &[f64]) -> Vec<f64> {
    l2_normalize(v).unwrap_or_else(|_| vec![0.0; v.len()])
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Attribution row compared across checkpoints: the ground-truth class map
/// for per-class bundles, otherwise the single stored map.
fn diff_attribution(bundle: &AnalysisBundle, sample: usize) -> Result<&[f64]> {
    match bundle.attribution_target() {
        AttributionTarget::PerClass => bundle.attribution_for(sample, bundle.labels()[sample]),
        _ => bundle.attribution().slice(&[sample, 0]),
    }
}

/// Mean distance between the unit-normalized heatmaps of an intermediate
/// checkpoint and the final model over the same samples.
///
/// For attention, each sample contributes the mean over all `L·H` heads of
/// the per-head distance.
pub fn checkpoint_diff(
    bundle_t: &AnalysisBundle,
    bundle_final: &AnalysisBundle,
    target: DiffTarget,
) -> Result<f64> {
    let dims = |b: &AnalysisBundle| [b.n_samples(), b.n_layers(), b.n_heads(), b.n_patches()];
    if dims(bundle_t) != dims(bundle_final) {
        return Err(Error::shape(format!(
            "checkpoint dims {:?} differ from final {:?}",
            dims(bundle_t),
            dims(bundle_final)
        )));
    }
    if bundle_t.labels() != bundle_final.labels() {
        return Err(Error::SampleOrderMismatch(
            "label arrays differ between checkpoint and final bundle".into(),
        ));
    }
    let per_sample: Vec<f64> = (0..bundle_t.n_samples())
        .into_par_iter()
        .map(|i| match target {
            DiffTarget::Attribution => Ok(l2_distance(
                &unit_or_zero(diff_attribution(bundle_t, i)?),
                &unit_or_zero(diff_attribution(bundle_final, i)?),
            )),
            DiffTarget::Attention => {
                let mut total = 0.0;
                for l in 0..bundle_t.n_layers() {
                    for h in 0..bundle_t.n_heads() {
                        total += l2_distance(
                            &unit_or_zero(bundle_t.attention_row(i, l, h)?),
                            &unit_or_zero(bundle_final.attention_row(i, l, h)?),
                        );
                    }
                }
                Ok(total / (bundle_t.n_layers() * bundle_t.n_heads()) as f64)
            }
        })
        .collect::<Result<_>>()?;
    Ok(per_sample.iter().sum::<f64>() / per_sample.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::BundleParts;
    use crate::tensor::Tensor;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ia_score_examples() {
        let v = [0.1, 0.2, 0.3, 0.4];
        assert!(close(ia_score(&v, &v).unwrap().value, 1.0, 1e-15));

        let s = ia_score(&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_eq!(s.value, 0.0);

        let s = ia_score(&[1.0, 1.0, 0.0, 0.0], &[0.5, 0.0, 0.5, 0.0]).unwrap();
        assert!(close(s.value, 0.5, 1e-15));
    }

    #[test]
    fn ia_score_degenerate_attribution_scores_zero() {
        let s = ia_score(&[0.0; 4], &[0.25; 4]).unwrap();
        assert_eq!(s, IaScore { value: 0.0, degenerate: true });
    }

    #[test]
    fn ia_score_errors() {
        assert!(matches!(ia_score(&[1.0], &[0.5, 0.5]), Err(Error::ShapeMismatch(_))));
        assert!(ia_score(&[-1.0, 1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(attention_entropy(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        let uniform = vec![1.0 / 196.0; 196];
        assert!(close(attention_entropy(&uniform).unwrap(), 196f64.ln(), 1e-12));
        assert!(close(196f64.ln(), 5.2781, 1e-4));
        let h = attention_entropy(&[0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!(close(h, 2f64.ln(), 1e-15));
    }

    #[test]
    fn entropy_rejects_non_distributions() {
        assert!(matches!(
            attention_entropy(&[0.5, 0.4]),
            Err(Error::NotAProbabilityVector(_))
        ));
        assert!(attention_entropy(&[1.5, -0.5]).is_err());
        assert!(attention_entropy(&[]).is_err());
    }

    #[test]
    fn head_type_threshold_and_tie() {
        assert_eq!(HeadType::from_median(0.8), HeadType::High);
        assert_eq!(HeadType::from_median(0.2), HeadType::Low);
        assert_eq!(HeadType::from_median(0.5), HeadType::High);
        assert_eq!(HeadType::from_median(0.5 - 1e-15), HeadType::Low);
    }

    #[test]
    fn summary_uses_linear_interpolation() {
        let s = Summary::of(&[0.9, 0.7, 0.8]).unwrap();
        assert_eq!((s.min, s.median, s.max), (0.7, 0.8, 0.9));
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (1.75, 2.5, 3.25));
        assert_eq!(s.variance, 1.25);
    }

    fn two_sample_bundle(attention: Vec<f64>, labels: Vec<usize>) -> AnalysisBundle {
        let parts = BundleParts {
            attention: Tensor::new(vec![2, 1, 1, 2], attention).unwrap(),
            attribution: Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            attribution_target: AttributionTarget::Predicted,
            labels,
            predictions: vec![0, 0],
            images: None,
            class_names: vec!["only".into()],
            attribution_method: "test".into(),
            checkpoint_tag: String::new(),
            patch_size: None,
        };
        AnalysisBundle::from_parts(parts).unwrap().0
    }

    #[test]
    fn global_iav_is_the_mean_of_sample_iavs() {
        // Sample 0 scores [1], sample 1 scores [0] for the single head.
        let b = two_sample_bundle(vec![1.0, 0.0, 1.0, 0.0], vec![0, 0]);
        let g = global_iav(&b, LabelMode::Predicted).unwrap();
        assert_eq!(g.scores, vec![0.5]);
        assert_eq!(g.n_samples, 2);
    }

    #[test]
    fn checkpoint_diff_identity_and_disjoint() {
        let a = two_sample_bundle(vec![1.0, 0.0, 1.0, 0.0], vec![0, 0]);
        assert_eq!(checkpoint_diff(&a, &a, DiffTarget::Attention).unwrap(), 0.0);
        assert_eq!(checkpoint_diff(&a, &a, DiffTarget::Attribution).unwrap(), 0.0);
        let b = two_sample_bundle(vec![0.0, 1.0, 0.0, 1.0], vec![0, 0]);
        let d = checkpoint_diff(&a, &b, DiffTarget::Attention).unwrap();
        assert!(close(d, 2f64.sqrt(), 1e-15));
    }
}
