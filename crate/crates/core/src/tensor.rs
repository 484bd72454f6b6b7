//! Dense row-major `f64` arrays and the handful of vector operations the
//! analyses are built from.
//!
//! Every constructor rejects NaN and infinities, so downstream code can assume
//! finite data. Vector operations work on plain slices; a rank-1 [`Tensor`]
//! hands one out through [`Tensor::data`].

use crate::error::{Error, Result};

/// Dense n-dimensional array of finite 64-bit floats, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::shape(format!(
                "dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor element {pos}")));
        }
        Ok(Self { shape, data })
    }

    /// Rank-1 tensor over `data`.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![value; n])
    }

    /// Caller guarantees shape/data agreement and finiteness.
    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() > self.shape.len() {
            return Err(Error::shape(format!(
                "index of rank {} into tensor of rank {}",
                index.len(),
                self.shape.len()
            )));
        }
        let mut offset = 0;
        let mut stride = self.data.len();
        for (&i, &d) in index.iter().zip(&self.shape) {
            if i >= d {
                return Err(Error::IndexOutOfRange {
                    what: "tensor index",
                    index: i,
                    limit: d,
                });
            }
            stride /= d;
            offset += i * stride;
        }
        Ok(offset)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        if index.len() != self.rank() {
            return Err(Error::shape(format!(
                "full index needs {} coordinates, got {}",
                self.rank(),
                index.len()
            )));
        }
        Ok(self.data[self.offset(index)?])
    }

    /// The contiguous block addressed by a leading-index prefix.
    ///
    /// For a `[N, L, H, P]` tensor, `slice(&[n, l, h])` is the length-`P` row.
    pub fn slice(&self, prefix: &[usize]) -> Result<&[f64]> {
        let start = self.offset(prefix)?;
        let len: usize = self.shape[prefix.len()..].iter().product();
        Ok(&self.data[start..start + len])
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Elementwise map; errors if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `dot(a, b) / (|a| |b|)`.
///
/// A zero-norm argument is reported as [`Error::ZeroVector`]; deciding what
/// that means for a score is left to the caller.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape(format!(
            "cosine of vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    // Rounding can push |cos| a hair past 1 for parallel vectors.
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = l2_norm(v);
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Averages non-overlapping `patch_size`×`patch_size` blocks of a rank-2 map.
///
/// Output patches are ordered row-major: left to right along axis 1, then top
/// to bottom along axis 0.
pub fn pool_to_patches(map: &Tensor, patch_size: usize) -> Result<Tensor> {
    if map.rank() != 2 {
        return Err(Error::shape(format!(
            "pooling needs a rank-2 map, got shape {:?}",
            map.shape()
        )));
    }
    let (rows, cols) = (map.dim(0), map.dim(1));
    if patch_size == 0 || rows % patch_size != 0 || cols % patch_size != 0 {
        return Err(Error::shape(format!(
            "{rows}x{cols} map is not divisible by patch size {patch_size}"
        )));
    }
    let (grid_r, grid_c) = (rows / patch_size, cols / patch_size);
    let area = (patch_size * patch_size) as f64;
    let data = map.data();
    let mut out = Vec::with_capacity(grid_r * grid_c);
    for br in 0..grid_r {
        for bc in 0..grid_c {
            let mut acc = 0.0;
            for r in br * patch_size..(br + 1) * patch_size {
                let row = &data[r * cols + bc * patch_size..r * cols + (bc + 1) * patch_size];
                acc += row.iter().sum::<f64>();
            }
            out.push(acc / area);
        }
    }
    Tensor::new(vec![grid_r * grid_c], out)
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::shape("softmax of an empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// In-place softmax over a row; input must be finite.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}
