//! Exact t-SNE for per-layer IAV slices.
//!
//! Pipeline: squared Euclidean distances, a per-point Gaussian bandwidth found
//! by bisection to hit the target perplexity, symmetrized joint
//! probabilities, then gradient descent with momentum and per-coordinate gains
//! on `KL(P || Q)` with a Student-t `Q`. The gradient is computed exactly,
//! which is fine up to a few thousand points.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::IavVector;
use crate::tensor::Tensor;

/// Entropy tolerance (nats) for the bandwidth search.
pub const ENTROPY_TOLERANCE: f64 = 1e-5;
pub const MAX_BISECTION_STEPS: usize = 50;
/// Zero distances between distinct rows get `DUPLICATE_JITTER · (i + j)`.
pub const DUPLICATE_JITTER: f64 = 1e-10;
const MIN_GAIN: f64 = 0.01;
const MIN_Q: f64 = 1e-12;
/// Standard deviation of the initial layout.
const INIT_SCALE: f64 = 1e-4;

/// Rows of each sample's scores for one layer: `[N, H]`.
pub fn layer_slice(iavs: &[IavVector], layer: usize) -> Result<Tensor> {
    let first = iavs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no IAVs to slice".into()))?;
    let (n_layers, n_heads) = (first.n_layers, first.n_heads);
    if layer >= n_layers {
        return Err(Error::IndexOutOfRange {
            what: "layer",
            index: layer,
            limit: n_layers,
        });
    }
    let mut data = Vec::with_capacity(iavs.len() * n_heads);
    for v in iavs {
        if (v.n_layers, v.n_heads) != (n_layers, n_heads) {
            return Err(Error::shape(format!(
                "IAV of sample {} is {}x{}, expected {n_layers}x{n_heads}",
                v.sample_index, v.n_layers, v.n_heads
            )));
        }
        data.extend_from_slice(v.layer(layer));
    }
    Tensor::new(vec![iavs.len(), n_heads], data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TsneInit {
    Pca,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TsneConfig {
    /// Target perplexity; capped to `(N - 1) / 3` (and at least 1).
    pub perplexity: f64,
    pub n_iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations run with exaggerated `P`; momentum switches at the same point.
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
    pub init: TsneInit,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            n_iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
            init: TsneInit::Pca,
        }
    }
}

impl TsneConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_iterations < self.exaggeration_iterations || self.exaggeration_iterations == 0 {
            return Err(Error::InvalidConfig(format!(
                "need n_iterations ({}) >= exaggeration_iterations ({}) > 0",
                self.n_iterations, self.exaggeration_iterations
            )));
        }
        if !(self.perplexity >= 1.0 && self.learning_rate > 0.0 && self.early_exaggeration >= 1.0) {
            return Err(Error::InvalidConfig(
                "perplexity >= 1, learning rate > 0 and exaggeration >= 1 are required".into(),
            ));
        }
        Ok(())
    }
}

/// Symmetrized input affinities and the bandwidth search that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinities {
    pub n: usize,
    /// Row-major `N × N`, symmetric, zero diagonal, sums to 1.
    pub joint: Vec<f64>,
    /// Perplexity actually targeted after capping.
    pub perplexity: f64,
    pub capped: bool,
    /// `exp(H)` of each conditional distribution after the search.
    pub achieved: Vec<f64>,
    /// Points whose search stopped at the step limit before reaching tolerance.
    pub unconverged: usize,
}

/// Squared distances, with deterministic jitter on duplicate rows.
pub fn pairwise_sq_distances(points: &Tensor) -> Result<Vec<f64>> {
    if points.rank() != 2 {
        return Err(Error::shape(format!(
            "points must be [N, D], got {:?}",
            points.shape()
        )));
    }
    let (n, d) = (points.dim(0), points.dim(1));
    let x = points.data();
    Ok((0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            if i == j {
                return 0.0;
            }
            let dist: f64 = x[i * d..(i + 1) * d]
                .iter()
                .zip(&x[j * d..(j + 1) * d])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist == 0.0 {
                DUPLICATE_JITTER * (i + j) as f64
            } else {
                dist
            }
        })
        .collect())
}

/// Conditional distribution `p_{j|i}` for one row at precision `beta`, and its
/// entropy in nats. Distances are shifted by their minimum for stability.
fn conditional_row(dist: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let min = dist
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, d)| *d)
        .fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    let mut weighted = 0.0;
    for (j, (&d, o)) in dist.iter().zip(out.iter_mut()).enumerate() {
        if j == i {
            *o = 0.0;
            continue;
        }
        let shifted = d - min;
        *o = (-beta * shifted).exp();
        total += *o;
        weighted += shifted * *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    total.ln() + beta * weighted / total
}

/// Bisection on the precision of row `i` until `|H - ln(perplexity)|` is within
/// tolerance. Returns the achieved entropy and whether it converged.
fn search_row(dist: &[f64], i: usize, target: f64, out: &mut [f64]) -> (f64, bool) {
    let others: Vec<f64> = dist
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, d)| *d)
        .collect();
    let spread = others.iter().sum::<f64>() / others.len() as f64;
    let mut beta = if spread > 0.0 { 1.0 / spread } else { 1.0 };
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut h = conditional_row(dist, i, beta, out);
    for _ in 0..MAX_BISECTION_STEPS {
        let diff = h - target;
        if diff.abs() <= ENTROPY_TOLERANCE {
            return (h, true);
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
        h = conditional_row(dist, i, beta, out);
    }
    (h, (h - target).abs() <= ENTROPY_TOLERANCE)
}

pub fn effective_perplexity(requested: f64, n: usize) -> (f64, bool) {
    let cap = ((n - 1) as f64 / 3.0).max(1.0);
    if requested > cap {
        (cap, true)
    } else {
        (requested.max(1.0), false)
    }
}

/// Input affinities for `points` at the requested perplexity.
pub fn joint_probabilities(points: &Tensor, perplexity: f64) -> Result<Affinities> {
    let dist = pairwise_sq_distances(points)?;
    let n = points.dim(0);
    if n < 4 {
        return Err(Error::TooFewPoints(n));
    }
    let (perplexity, capped) = effective_perplexity(perplexity, n);
    let target = perplexity.ln();
    let rows: Vec<(Vec<f64>, f64, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            let (h, ok) = search_row(&dist[i * n..(i + 1) * n], i, target, &mut row);
            (row, h, ok)
        })
        .collect();
    let mut joint = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            joint[i * n + j] = (rows[i].0[j] + rows[j].0[i]) / (2.0 * n as f64);
        }
    }
    Ok(Affinities {
        n,
        joint,
        perplexity,
        capped,
        achieved: rows.iter().map(|r| r.1.exp()).collect(),
        unconverged: rows.iter().filter(|r| !r.2).count(),
    })
}

/// Student-t kernel `1 / (1 + |y_i - y_j|²)` with a zero diagonal, and its total.
fn student_kernel(y: &[f64], n: usize) -> (Vec<f64>, f64) {
    let num: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            if i == j {
                0.0
            } else {
                let dx = y[2 * i] - y[2 * j];
                let dy = y[2 * i + 1] - y[2 * j + 1];
                1.0 / (1.0 + dx * dx + dy * dy)
            }
        })
        .collect();
    let total = num.chunks_exact(n).map(|r| r.iter().sum::<f64>()).sum();
    (num, total)
}

/// `KL(P || Q)` of a 2-D layout.
pub fn kl_divergence(joint: &[f64], y: &[f64], n: usize) -> f64 {
    let (num, total) = student_kernel(y, n);
    joint
        .iter()
        .zip(&num)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, q)| p * (p / (q / total).max(MIN_Q)).ln())
        .sum()
}

fn initial_layout(points: &Tensor, config: &TsneConfig) -> Vec<f64> {
    let n = points.dim(0);
    if config.init == TsneInit::Pca {
        if let Some(y) = pca_2d(points) {
            return y;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, INIT_SCALE).expect("valid normal");
    (0..2 * n).map(|_| normal.sample(&mut rng)).collect()
}

/// Projection onto the top two principal axes, rescaled so the first
/// coordinate has standard deviation `INIT_SCALE`. `None` if the data has no
/// spread along some needed axis.
fn pca_2d(points: &Tensor) -> Option<Vec<f64>> {
    let (n, d) = (points.dim(0), points.dim(1));
    let x = points.data();
    let mut mean = vec![0.0; d];
    for row in x.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let centered: Vec<f64> = x
        .chunks_exact(d)
        .flat_map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect::<Vec<_>>())
        .collect();
    let mut cov = vec![0.0; d * d];
    for row in centered.chunks_exact(d) {
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += row[a] * row[b];
            }
        }
    }

    let mut axes: Vec<Vec<f64>> = Vec::new();
    for _ in 0..2.min(d) {
        let mut v: Vec<f64> = (0..d).map(|k| 1.0 + k as f64 / d as f64).collect();
        let mut eigen = 0.0;
        for _ in 0..500 {
            let mut w: Vec<f64> = (0..d)
                .map(|a| (0..d).map(|b| cov[a * d + b] * v[b]).sum())
                .collect();
            for axis in &axes {
                let proj: f64 = w.iter().zip(axis).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(axis).for_each(|(a, b)| *a -= proj * b);
            }
            let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < 1e-300 {
                return None;
            }
            w.iter_mut().for_each(|a| *a /= norm);
            let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
            v = w;
            eigen = norm;
            if delta < 1e-12 {
                break;
            }
        }
        if eigen <= 0.0 {
            return None;
        }
        // Fix the sign so the largest component is positive.
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |acc, a| if a.abs() > acc.abs() { a } else { acc });
        if pivot < 0.0 {
            v.iter_mut().for_each(|a| *a = -*a);
        }
        axes.push(v);
    }
    let mut y = vec![0.0; 2 * n];
    for (i, row) in centered.chunks_exact(d).enumerate() {
        for (k, axis) in axes.iter().enumerate() {
            y[2 * i + k] = row.iter().zip(axis).map(|(a, b)| a * b).sum();
        }
    }
    let sd = (y.iter().step_by(2).map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if sd <= 0.0 || !sd.is_finite() {
        return None;
    }
    y.iter_mut().for_each(|v| *v *= INIT_SCALE / sd);
    Some(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    /// `[N, 2]` coordinates.
    pub embedding: Tensor,
    pub affinities: Affinities,
    /// KL right after exaggeration ends, measured against the true `P`.
    pub kl_after_exaggeration: f64,
    pub final_kl: f64,
}

/// Embeds `points` (`[N, D]`, `N >= 4`) into two dimensions.
pub fn tsne(points: &Tensor, config: &TsneConfig) -> Result<TsneResult> {
    config.validate()?;
    if points.rank() != 2 {
        return Err(Error::shape(format!(
            "points must be [N, D], got {:?}",
            points.shape()
        )));
    }
    let n = points.dim(0);
    if n < 4 {
        return Err(Error::TooFewPoints(n));
    }
    if points.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-SNE input".into()));
    }
    let affinities = joint_probabilities(points, config.perplexity)?;
    let p = &affinities.joint;

    let mut y = initial_layout(points, config);
    let mut step = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut kl_after_exaggeration = f64::NAN;

    for iter in 0..config.n_iterations {
        if iter == config.exaggeration_iterations {
            kl_after_exaggeration = kl_divergence(p, &y, n);
        }
        let (exaggeration, momentum) = if iter < config.exaggeration_iterations {
            (config.early_exaggeration, config.initial_momentum)
        } else {
            (1.0, config.final_momentum)
        };
        let (num, total) = student_kernel(&y, n);
        let grad: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let (mut gx, mut gy) = (0.0, 0.0);
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let k = num[i * n + j];
                    let q = (k / total).max(MIN_Q);
                    let coeff = 4.0 * (exaggeration * p[i * n + j] - q) * k;
                    gx += coeff * (y[2 * i] - y[2 * j]);
                    gy += coeff * (y[2 * i + 1] - y[2 * j + 1]);
                }
                [gx, gy]
            })
            .collect();
        for k in 0..2 * n {
            let same_sign = (grad[k] > 0.0) == (step[k] > 0.0);
            gains[k] = if same_sign { gains[k] * 0.8 } else { gains[k] + 0.2 };
            gains[k] = gains[k].max(MIN_GAIN);
            step[k] = momentum * step[k] - config.learning_rate * gains[k] * grad[k];
            y[k] += step[k];
        }
        let (mx, my) = y.chunks_exact(2).fold((0.0, 0.0), |(a, b), c| (a + c[0], b + c[1]));
        for c in y.chunks_exact_mut(2) {
            c[0] -= mx / n as f64;
            c[1] -= my / n as f64;
        }
    }
    if config.n_iterations == config.exaggeration_iterations {
        kl_after_exaggeration = kl_divergence(p, &y, n);
    }
    let final_kl = kl_divergence(p, &y, n);
    Ok(TsneResult {
        embedding: Tensor::new(vec![n, 2], y)?,
        affinities,
        kl_after_exaggeration,
        final_kl,
    })
}
