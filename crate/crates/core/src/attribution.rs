//! Input-attribution maps: a built-in occlusion generator and validation of
//! externally produced maps.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scorer::Scorer;
use crate::tensor::{pool_to_patches, Tensor};

pub const OCCLUSION_TAG: &str = "occlusion";

/// A non-negative importance map explaining one class decision.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    /// `[P]` at patch resolution or `[rows, cols]` at pixel resolution.
    pub values: Tensor,
    pub class_index: usize,
    pub method: String,
    /// Set when every value is zero.
    pub degenerate: bool,
}

impl AttributionMap {
    pub fn new(values: Tensor, class_index: usize, method: impl Into<String>) -> Self {
        let degenerate = values.data().iter().all(|v| *v == 0.0);
        Self {
            values,
            class_index,
            method: method.into(),
            degenerate,
        }
    }
}

/// Copy of `image` with patch `patch` (row-major index) filled with `value`.
pub fn occlude_patch(image: &Tensor, patch_size: usize, patch: usize, value: f64) -> Result<Tensor> {
    let (rows, cols, ch) = image_dims(image)?;
    check_grid(rows, cols, patch_size)?;
    let grid_c = cols / patch_size;
    let n_patches = (rows / patch_size) * grid_c;
    if patch >= n_patches {
        return Err(Error::IndexOutOfRange {
            what: "patch",
            index: patch,
            limit: n_patches,
        });
    }
    let (br, bc) = (patch / grid_c, patch % grid_c);
    let mut out = image.clone();
    let data = out.data_mut();
    for r in br * patch_size..(br + 1) * patch_size {
        let start = (r * cols + bc * patch_size) * ch;
        data[start..start + patch_size * ch].fill(value);
    }
    Ok(out)
}

pub(crate) fn image_dims(image: &Tensor) -> Result<(usize, usize, usize)> {
    if image.rank() != 3 {
        return Err(Error::shape(format!(
            "image must be [rows, cols, channels], got {:?}",
            image.shape()
        )));
    }
    Ok((image.dim(0), image.dim(1), image.dim(2)))
}

pub(crate) fn check_grid(rows: usize, cols: usize, patch_size: usize) -> Result<()> {
    if patch_size == 0 || !rows.is_multiple_of(patch_size) || !cols.is_multiple_of(patch_size) {
        return Err(Error::shape(format!(
            "patch size {patch_size} does not tile a {rows}x{cols} image"
        )));
    }
    Ok(())
}

/// Score drop per patch for every class at once, `[n_classes, P]`, each entry
/// `max(0, f_c(x) - f_c(x with patch p set to baseline))`.
///
/// The `P` occluded forwards run in parallel; results are gathered in patch
/// order so the output does not depend on scheduling.
pub fn occlusion_all_classes(
    scorer: &impl Scorer,
    image: &Tensor,
    patch_size: usize,
    baseline_value: f64,
) -> Result<Tensor> {
    let (rows, cols, _) = image_dims(image)?;
    check_grid(rows, cols, patch_size)?;
    let n_patches = (rows / patch_size) * (cols / patch_size);
    let base = scorer.scores(image)?;
    let occluded: Vec<Vec<f64>> = (0..n_patches)
        .into_par_iter()
        .map(|p| scorer.scores(&occlude_patch(image, patch_size, p, baseline_value)?))
        .collect::<Result<_>>()?;
    let k = base.len();
    let mut out = vec![0.0; k * n_patches];
    for (p, scores) in occluded.iter().enumerate() {
        if scores.len() != k {
            return Err(Error::shape("scorer returned score vectors of varying length"));
        }
        for c in 0..k {
            out[c * n_patches + p] = (base[c] - scores[c]).max(0.0);
        }
    }
    Tensor::new(vec![k, n_patches], out)
}

/// Occlusion attribution for one class at patch granularity.
pub fn occlusion_attribution(
    scorer: &impl Scorer,
    image: &Tensor,
    patch_size: usize,
    class_index: usize,
    baseline_value: f64,
) -> Result<AttributionMap> {
    if class_index >= scorer.n_classes() {
        return Err(Error::IndexOutOfRange {
            what: "class",
            index: class_index,
            limit: scorer.n_classes(),
        });
    }
    let all = occlusion_all_classes(scorer, image, patch_size, baseline_value)?;
    let values = Tensor::from_vec(all.slice(&[class_index])?.to_vec())?;
    Ok(AttributionMap::new(values, class_index, OCCLUSION_TAG))
}

/// Result of [`validate_external_attribution`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedAttribution {
    pub map: AttributionMap,
    pub clamped: usize,
}

/// Brings an externally produced map to patch resolution: pixel maps are
/// pooled with `patch_size`, negatives clamped to zero, and all-zero maps
/// flagged degenerate. Applying it twice gives the same map as once.
pub fn validate_external_attribution(
    map: &AttributionMap,
    expected_patches: usize,
    patch_size: Option<usize>,
) -> Result<ValidatedAttribution> {
    let values = match map.values.shape() {
        [len] if *len == expected_patches => map.values.clone(),
        [rows, cols] => {
            let ps = patch_size.ok_or_else(|| {
                Error::shape(format!(
                    "{rows}x{cols} pixel attribution given without a patch size"
                ))
            })?;
            let pooled = pool_to_patches(&map.values, ps)?;
            if pooled.len() != expected_patches {
                return Err(Error::shape(format!(
                    "{rows}x{cols} attribution pools to {} patches, expected {expected_patches}",
                    pooled.len()
                )));
            }
            pooled
        }
        other => {
            return Err(Error::shape(format!(
                "attribution of shape {other:?} matches neither {expected_patches} patches nor a pixel grid"
            )))
        }
    };
    let clamped = values.data().iter().filter(|v| **v < 0.0).count();
    let values = values.map(|v| v.max(0.0))?;
    Ok(ValidatedAttribution {
        map: AttributionMap::new(values, map.class_index, map.method.clone()),
        clamped,
    })
}
