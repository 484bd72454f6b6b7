//! Input disturbance: saliency-guided patch masking, Gaussian blur and
//! jigsaw shuffles, plus accuracy curves over any [`Scorer`].
//!
//! Images are `[rows, cols, channels]`; patches are indexed row-major.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::attribution::{check_grid, image_dims};
use crate::bundle::{AnalysisBundle, LabelMode};
use crate::error::{Error, Result};
use crate::scorer::Scorer;
use crate::tensor::Tensor;

/// Slack for `ratio · P` landing a rounding error above an integer.
const CEIL_SLACK: f64 = 1e-9;

/// Where the per-patch saliency used for masking comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SaliencySource {
    /// CLS attention of a single head.
    AttentionHead { layer: usize, head: usize },
    /// CLS attention averaged over all heads of all layers, renormalized.
    AttentionMean,
    /// The stored attribution map for the class the mode selects.
    Attribution(LabelMode),
    /// Seeded uniform noise, one independent stream per sample.
    Random { seed: u64 },
}

impl SaliencySource {
    pub fn label(&self) -> String {
        match self {
            SaliencySource::AttentionHead { layer, head } => format!("attention-l{layer}h{head}"),
            SaliencySource::AttentionMean => "attention-mean".into(),
            SaliencySource::Attribution(_) => "attribution".into(),
            SaliencySource::Random { .. } => "random".into(),
        }
    }
}

/// Patches to mask at `ratio`: `ceil(ratio · P)`, and 0 at ratio 0.
pub fn masked_patch_count(ratio: f64, n_patches: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!(
            "masking ratio {ratio} outside [0, 1]"
        )));
    }
    let raw = ratio * n_patches as f64;
    Ok(((raw - CEIL_SLACK).ceil().max(0.0) as usize).min(n_patches))
}

/// Indices of the `count` most salient patches; equal saliencies resolve to
/// the lower index first.
pub fn top_patches(saliency: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..saliency.len()).collect();
    order.sort_by(|&a, &b| saliency[b].total_cmp(&saliency[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

fn fill_patches(image: &mut Tensor, patch_size: usize, patches: &[usize], fill: f64) {
    let (cols, ch) = (image.dim(1), image.dim(2));
    let grid_c = cols / patch_size;
    let data = image.data_mut();
    for &p in patches {
        let (br, bc) = (p / grid_c, p % grid_c);
        for r in br * patch_size..(br + 1) * patch_size {
            let start = (r * cols + bc * patch_size) * ch;
            data[start..start + patch_size * ch].fill(fill);
        }
    }
}

/// Replaces the `ceil(ratio · P)` highest-saliency patches with `fill`.
pub fn mask_image(
    image: &Tensor,
    saliency: &[f64],
    patch_size: usize,
    ratio: f64,
    fill: f64,
) -> Result<Tensor> {
    let (rows, cols, _) = image_dims(image)?;
    check_grid(rows, cols, patch_size)?;
    let n_patches = (rows / patch_size) * (cols / patch_size);
    if saliency.len() != n_patches {
        return Err(Error::shape(format!(
            "saliency has {} entries for {n_patches} patches",
            saliency.len()
        )));
    }
    if !fill.is_finite() {
        return Err(Error::NonFinite("mask fill value".into()));
    }
    let count = masked_patch_count(ratio, n_patches)?;
    let mut out = image.clone();
    fill_patches(&mut out, patch_size, &top_patches(saliency, count), fill);
    Ok(out)
}

/// Patch size that tiles the bundle's images into its `P` patches.
pub fn bundle_patch_size(bundle: &AnalysisBundle) -> Result<usize> {
    if let Some(ps) = bundle.patch_size() {
        return Ok(ps);
    }
    let images = bundle.images().ok_or(Error::MissingImages)?;
    let (rows, cols) = (images.dim(1), images.dim(2));
    (1..=rows.min(cols))
        .find(|ps| rows % ps == 0 && cols % ps == 0 && (rows / ps) * (cols / ps) == bundle.n_patches())
        .ok_or_else(|| {
            Error::shape(format!(
                "no square patch size tiles {rows}x{cols} images into {} patches",
                bundle.n_patches()
            ))
        })
}

/// Per-patch saliency of one sample under `source`.
pub fn saliency_for(bundle: &AnalysisBundle, sample: usize, source: SaliencySource) -> Result<Vec<f64>> {
    match source {
        SaliencySource::AttentionHead { layer, head } => {
            Ok(bundle.attention_row(sample, layer, head)?.to_vec())
        }
        SaliencySource::AttentionMean => {
            let mut acc = vec![0.0; bundle.n_patches()];
            for l in 0..bundle.n_layers() {
                for h in 0..bundle.n_heads() {
                    for (a, v) in acc.iter_mut().zip(bundle.attention_row(sample, l, h)?) {
                        *a += v;
                    }
                }
            }
            let total: f64 = acc.iter().sum();
            Ok(acc.into_iter().map(|a| a / total).collect())
        }
        SaliencySource::Attribution(mode) => {
            let class = bundle.class_for(sample, mode)?;
            Ok(bundle.attribution_for(sample, class)?.to_vec())
        }
        SaliencySource::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(sample as u64);
            Ok((0..bundle.n_patches()).map(|_| rng.random::<f64>()).collect())
        }
    }
}

/// One point of an accuracy curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    /// Masking ratio, blur sigma, or swap count.
    pub x: f64,
    pub accuracy: f64,
}

/// Fraction of images whose arg-max score equals the ground-truth label.
/// Images are scored in parallel and counted in sample order.
fn accuracy_over<F>(bundle: &AnalysisBundle, scorer: &impl Scorer, transform: F) -> Result<f64>
where
    F: Fn(usize, Tensor) -> Result<Tensor> + Sync,
{
    bundle.images().ok_or(Error::MissingImages)?;
    let hits: Vec<bool> = (0..bundle.n_samples())
        .into_par_iter()
        .map(|i| {
            let image = transform(i, bundle.image(i)?)?;
            Ok(scorer.predict(&image)? == bundle.labels()[i])
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64)
}

/// Accuracy on the unmodified images.
pub fn baseline_accuracy(bundle: &AnalysisBundle, scorer: &impl Scorer) -> Result<f64> {
    accuracy_over(bundle, scorer, |_, img| Ok(img))
}

/// Accuracy after masking the most salient patches, for each ratio.
pub fn masking_curve(
    bundle: &AnalysisBundle,
    scorer: &impl Scorer,
    source: SaliencySource,
    ratios: &[f64],
    fill: f64,
) -> Result<Vec<CurvePoint>> {
    bundle.images().ok_or(Error::MissingImages)?;
    let ps = bundle_patch_size(bundle)?;
    let saliency: Vec<Vec<f64>> = (0..bundle.n_samples())
        .map(|i| saliency_for(bundle, i, source))
        .collect::<Result<_>>()?;
    ratios
        .iter()
        .map(|&ratio| {
            let accuracy = accuracy_over(bundle, scorer, |i, img| {
                mask_image(&img, &saliency[i], ps, ratio, fill)
            })?;
            Ok(CurvePoint { x: ratio, accuracy })
        })
        .collect()
}

/// Normalized 1-D Gaussian taps over `[-⌈3σ⌉, ⌈3σ⌉]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
fn reflect(i: i64, n: usize) -> usize {
    let period = 2 * n as i64;
    let m = i.rem_euclid(period);
    if m < n as i64 {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Separable per-channel Gaussian blur with reflect padding; `sigma = 0`
/// returns the image unchanged.
pub fn gaussian_blur(image: &Tensor, sigma: f64) -> Result<Tensor> {
    let (rows, cols, ch) = image_dims(image)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("blur sigma {sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let src = image.data();
    let at = |r: usize, c: usize, k: usize| (r * cols + c) * ch + k;

    let mut horizontal = vec![0.0; src.len()];
    for r in 0..rows {
        for c in 0..cols {
            for k in 0..ch {
                horizontal[at(r, c, k)] = kernel
                    .iter()
                    .enumerate()
                    .map(|(t, w)| w * src[at(r, reflect(c as i64 + t as i64 - radius, cols), k)])
                    .sum();
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for r in 0..rows {
        for c in 0..cols {
            for k in 0..ch {
                out[at(r, c, k)] = kernel
                    .iter()
                    .enumerate()
                    .map(|(t, w)| w * horizontal[at(reflect(r as i64 + t as i64 - radius, rows), c, k)])
                    .sum();
            }
        }
    }
    Tensor::new(image.shape().to_vec(), out)
}

/// `grid`×`grid` cells, `swaps` random transpositions, seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct JigsawSpec {
    pub grid: usize,
    pub swaps: usize,
    pub seed: u64,
}

impl JigsawSpec {
    /// The cell pairs exchanged, in order. Each swap draws two distinct cells
    /// uniformly; cells may be picked again by later swaps.
    pub fn transpositions(&self) -> Vec<(usize, usize)> {
        let n = self.grid * self.grid;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.swaps)
            .map(|_| {
                let a = rng.random_range(0..n);
                let mut b = rng.random_range(0..n - 1);
                if b >= a {
                    b += 1;
                }
                (a, b)
            })
            .collect()
    }

    /// Spec with an independent seed for sample `index`.
    pub fn for_sample(&self, index: usize) -> Self {
        Self {
            seed: self
                .seed
                .wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            ..*self
        }
    }
}

/// Shuffles grid cells of the image by successive transpositions.
pub fn jigsaw(image: &Tensor, spec: &JigsawSpec) -> Result<Tensor> {
    let (rows, cols, ch) = image_dims(image)?;
    let g = spec.grid;
    if g == 0 || rows % g != 0 || cols % g != 0 {
        return Err(Error::GridMismatch { grid: g, rows, cols });
    }
    if spec.swaps == 0 {
        return Ok(image.clone());
    }
    if g * g < 2 {
        return Err(Error::InvalidArgument(
            "a 1x1 grid has no distinct cells to swap".into(),
        ));
    }
    let (cell_r, cell_c) = (rows / g, cols / g);
    let mut out = image.clone();
    let data = out.data_mut();
    for (a, b) in spec.transpositions() {
        let (ar, ac) = (a / g, a % g);
        let (br, bc) = (b / g, b % g);
        for dr in 0..cell_r {
            let ra = ((ar * cell_r + dr) * cols + ac * cell_c) * ch;
            let rb = ((br * cell_r + dr) * cols + bc * cell_c) * ch;
            for k in 0..cell_c * ch {
                data.swap(ra + k, rb + k);
            }
        }
    }
    Ok(out)
}

/// A distribution shift applied to every image before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    Blur { sigma: f64 },
    Jigsaw(JigsawSpec),
}

impl Perturbation {
    pub fn apply(&self, image: &Tensor, sample: usize) -> Result<Tensor> {
        match self {
            Perturbation::Blur { sigma } => gaussian_blur(image, *sigma),
            Perturbation::Jigsaw(spec) => jigsaw(image, &spec.for_sample(sample)),
        }
    }

    /// Position on a robustness curve's x-axis.
    pub fn degree(&self) -> f64 {
        match self {
            Perturbation::Blur { sigma } => *sigma,
            Perturbation::Jigsaw(spec) => spec.swaps as f64,
        }
    }
}

/// Accuracy under each perturbation.
pub fn robustness_curve(
    bundle: &AnalysisBundle,
    scorer: &impl Scorer,
    perturbations: &[Perturbation],
) -> Result<Vec<CurvePoint>> {
    perturbations
        .iter()
        .map(|p| {
            Ok(CurvePoint {
                x: p.degree(),
                accuracy: accuracy_over(bundle, scorer, |i, img| p.apply(&img, i))?,
            })
        })
        .collect()
}
