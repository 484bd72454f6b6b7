//! Anything that maps an image to a vector of class scores.

use crate::error::{Error, Result};
use crate::tensor::{pool_to_patches, Tensor};

pub trait Scorer: Sync {
    fn n_classes(&self) -> usize;

    fn scores(&self, image: &Tensor) -> Result<Vec<f64>>;

    /// Arg-max class; ties go to the lower index.
    fn predict(&self, image: &Tensor) -> Result<usize> {
        Ok(argmax(&self.scores(image)?))
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Adapts a closure into a [`Scorer`].
pub struct FnScorer<F> {
    n_classes: usize,
    f: F,
}

impl<F> FnScorer<F>
where
    F: Fn(&Tensor) -> Result<Vec<f64>> + Sync,
{
    pub fn new(n_classes: usize, f: F) -> Self {
        Self { n_classes, f }
    }
}

impl<F> Scorer for FnScorer<F>
where
    F: Fn(&Tensor) -> Result<Vec<f64>> + Sync,
{
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn scores(&self, image: &Tensor) -> Result<Vec<f64>> {
        (self.f)(image)
    }
}

/// Linear model over patch means: `score[c] = Σ_p weights[c, p] · mean(patch p)`,
/// with the mean taken over all pixels and channels of the patch.
///
/// Its occlusion attribution has a closed form, which makes it a reference
/// model for testing attribution code.
#[derive(Debug, Clone)]
pub struct LinearPatchScorer {
    weights: Tensor,
    patch_size: usize,
}

impl LinearPatchScorer {
    /// `weights` is `[n_classes, P]`.
    pub fn new(weights: Tensor, patch_size: usize) -> Result<Self> {
        if weights.rank() != 2 || patch_size == 0 {
            return Err(Error::shape(format!(
                "linear scorer weights must be [classes, patches], got {:?}",
                weights.shape()
            )));
        }
        Ok(Self {
            weights,
            patch_size,
        })
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn patch_means(&self, image: &Tensor) -> Result<Vec<f64>> {
        if image.rank() != 3 {
            return Err(Error::shape(format!(
                "image must be [rows, cols, channels], got {:?}",
                image.shape()
            )));
        }
        let (rows, cols, ch) = (image.dim(0), image.dim(1), image.dim(2));
        // Average channels first; pooling a channel mean equals the mean over
        // all patch pixels and channels.
        let gray: Vec<f64> = image
            .data()
            .chunks_exact(ch)
            .map(|px| px.iter().sum::<f64>() / ch as f64)
            .collect();
        let gray = Tensor::from_parts_unchecked(vec![rows, cols], gray);
        let means = pool_to_patches(&gray, self.patch_size)?;
        if means.len() != self.weights.dim(1) {
            return Err(Error::shape(format!(
                "image has {} patches, scorer expects {}",
                means.len(),
                self.weights.dim(1)
            )));
        }
        Ok(means.into_data())
    }
}

impl Scorer for LinearPatchScorer {
    fn n_classes(&self) -> usize {
        self.weights.dim(0)
    }

    fn scores(&self, image: &Tensor) -> Result<Vec<f64>> {
        let means = self.patch_means(image)?;
        Ok(self
            .weights
            .data()
            .chunks_exact(means.len())
            .map(|w| w.iter().zip(&means).map(|(a, b)| a * b).sum())
            .collect())
    }
}
