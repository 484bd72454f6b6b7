//! A small forward-only Vision Transformer with seeded random weights.
//!
//! Pre-norm encoder: for each layer, `x += MSA(LN(x))` then
//! `x += MLP(LN(x))`, with a GELU MLP of width `4·D`. The CLS token sits at
//! position 0 and position embeddings are added after patch embedding. Class
//! scores come from the final-normed CLS embedding.
//!
//! Weights (including biases, CLS token and position embeddings) are drawn
//! uniformly from `[-0.05, 0.05]`; layer-norm gains start at 1 and offsets
//! at 0.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::FileEntry;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::npy;
use crate::scorer::Scorer;
use crate::tensor::{softmax_in_place, Tensor};

pub const INIT_RANGE: f64 = 0.05;
pub const MLP_RATIO: usize = 4;
const LN_EPS: f64 = 1e-6;
/// CLS rows whose patch mass falls below this cannot be renormalized.
pub const DEGENERATE_ROW_MASS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViTConfig {
    /// `[rows, cols, channels]`.
    pub image_size: [usize; 3],
    pub patch_size: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub embed_dim: usize,
    pub n_classes: usize,
    pub rng_seed: u64,
}

impl ViTConfig {
    /// 16×16 grayscale, 4×4 patches, 2 layers of 2 heads, `D = 16`.
    pub fn toy(n_classes: usize, rng_seed: u64) -> Self {
        Self {
            image_size: [16, 16, 1],
            patch_size: 4,
            n_layers: 2,
            n_heads: 2,
            embed_dim: 16,
            n_classes,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [rows, cols, ch] = self.image_size;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if rows == 0 || cols == 0 || ch == 0 {
            return bad(format!("image size {:?} has a zero dimension", self.image_size));
        }
        if self.patch_size == 0 || rows % self.patch_size != 0 || cols % self.patch_size != 0 {
            return bad(format!(
                "patch size {} does not divide {rows}x{cols}",
                self.patch_size
            ));
        }
        if self.n_layers == 0 || self.n_heads == 0 || self.n_classes == 0 {
            return bad("layers, heads and classes must be positive".into());
        }
        if self.embed_dim == 0 || !self.embed_dim.is_multiple_of(self.n_heads) {
            return bad(format!(
                "embed dim {} is not divisible by {} heads",
                self.embed_dim, self.n_heads
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> (usize, usize) {
        (
            self.image_size[0] / self.patch_size,
            self.image_size[1] / self.patch_size,
        )
    }

    pub fn n_patches(&self) -> usize {
        let (r, c) = self.grid();
        r * c
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }

    fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.image_size[2]
    }
}

/// Affine map `y = x W + b` with `W` stored `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn init(rng: &mut ParamRng, d_in: usize, d_out: usize) -> Self {
        Self {
            weight: rng.tensor(vec![d_in, d_out]),
            bias: rng.tensor(vec![d_out]),
        }
    }

    /// Applies the map to each of the `n` rows packed in `x`.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (d_in, d_out) = (self.weight.dim(0), self.weight.dim(1));
        let w = self.weight.data();
        let mut out = Vec::with_capacity(x.len() / d_in * d_out);
        for row in x.chunks_exact(d_in) {
            let mut acc = self.bias.data().to_vec();
            for (xi, w_row) in row.iter().zip(w.chunks_exact(d_out)) {
                for (a, wv) in acc.iter_mut().zip(w_row) {
                    *a += xi * wv;
                }
            }
            out.extend_from_slice(&acc);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub offset: Tensor,
}

impl LayerNorm {
    fn new(d: usize) -> Self {
        Self {
            gain: Tensor::from_parts_unchecked(vec![d], vec![1.0; d]),
            offset: Tensor::from_parts_unchecked(vec![d], vec![0.0; d]),
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.gain.len();
        let mut out = Vec::with_capacity(x.len());
        for row in x.chunks_exact(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for ((v, g), b) in row.iter().zip(self.gain.data()).zip(self.offset.data()) {
                out.push((v - mean) * inv * g + b);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub attn_norm: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub mlp_norm: LayerNorm,
    pub mlp_in: Linear,
    pub mlp_out: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViTModel {
    config: ViTConfig,
    pub patch_embed: Linear,
    pub cls_token: Tensor,
    /// `[P + 1, D]`, row 0 belongs to the CLS token.
    pub pos_embed: Tensor,
    pub layers: Vec<EncoderLayer>,
    pub final_norm: LayerNorm,
    pub head: Linear,
}

struct ParamRng {
    rng: ChaCha8Rng,
    dist: Uniform<f64>,
}

impl ParamRng {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dist: Uniform::new_inclusive(-INIT_RANGE, INIT_RANGE).expect("valid range"),
        }
    }

    fn tensor(&mut self, shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.dist.sample(&mut self.rng)).collect();
        Tensor::from_parts_unchecked(shape, data)
    }
}

/// Raw model outputs for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub scores: Vec<f64>,
    /// `[L, H, P + 1, P + 1]` post-softmax attention, token 0 is CLS.
    pub attention: Tensor,
}

/// What to do with the CLS→CLS entry when extracting CLS attention.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ClsEntry {
    /// Drop it and renormalize the `P` patch entries.
    #[default]
    Drop,
    /// Keep all `P + 1` entries of the CLS row as they are.
    Keep,
}

impl ViTModel {
    pub fn init(config: ViTConfig) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let mut rng = ParamRng::new(config.rng_seed);
        let patch_embed = Linear::init(&mut rng, config.patch_dim(), d);
        let cls_token = rng.tensor(vec![d]);
        let pos_embed = rng.tensor(vec![config.n_patches() + 1, d]);
        let layers = (0..config.n_layers)
            .map(|_| EncoderLayer {
                attn_norm: LayerNorm::new(d),
                query: Linear::init(&mut rng, d, d),
                key: Linear::init(&mut rng, d, d),
                value: Linear::init(&mut rng, d, d),
                output: Linear::init(&mut rng, d, d),
                mlp_norm: LayerNorm::new(d),
                mlp_in: Linear::init(&mut rng, d, MLP_RATIO * d),
                mlp_out: Linear::init(&mut rng, MLP_RATIO * d, d),
            })
            .collect();
        let head = Linear::init(&mut rng, d, config.n_classes);
        Ok(Self {
            config,
            patch_embed,
            cls_token,
            pos_embed,
            layers,
            final_norm: LayerNorm::new(d),
            head,
        })
    }

    pub fn config(&self) -> &ViTConfig {
        &self.config
    }

    /// Same model with all position embeddings set to zero, which makes the
    /// encoder equivariant to patch permutations.
    pub fn without_position_embeddings(mut self) -> Self {
        self.pos_embed.data_mut().fill(0.0);
        self
    }

    /// Flattens the image into `P` rows of `patch_size² · C` values, patches
    /// row-major, pixels inside a patch row-major, channels innermost.
    fn patchify(&self, image: &Tensor) -> Vec<f64> {
        let [_, cols, ch] = self.config.image_size;
        let ps = self.config.patch_size;
        let (gr, gc) = self.config.grid();
        let data = image.data();
        let mut out = Vec::with_capacity(data.len());
        for br in 0..gr {
            for bc in 0..gc {
                for r in br * ps..(br + 1) * ps {
                    let start = (r * cols + bc * ps) * ch;
                    out.extend_from_slice(&data[start..start + ps * ch]);
                }
            }
        }
        out
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        if image.shape() != self.config.image_size {
            return Err(Error::shape(format!(
                "model expects image {:?}, got {:?}",
                self.config.image_size,
                image.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, image: &Tensor) -> Result<ForwardOutput> {
        self.check_image(image)?;
        let cfg = &self.config;
        let (d, n_heads, dh) = (cfg.embed_dim, cfg.n_heads, cfg.head_dim());
        let t = cfg.n_patches() + 1;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut x = Vec::with_capacity(t * d);
        x.extend_from_slice(self.cls_token.data());
        x.extend(self.patch_embed.apply(&self.patchify(image)));
        for (xi, pi) in x.iter_mut().zip(self.pos_embed.data()) {
            *xi += pi;
        }

        let mut attention = Vec::with_capacity(cfg.n_layers * n_heads * t * t);
        for layer in &self.layers {
            let h = layer.attn_norm.apply(&x);
            let q = layer.query.apply(&h);
            let k = layer.key.apply(&h);
            let v = layer.value.apply(&h);
            let mut mixed = vec![0.0; t * d];
            for head in 0..n_heads {
                let off = head * dh;
                let start = attention.len();
                for i in 0..t {
                    let qi = &q[i * d + off..i * d + off + dh];
                    for j in 0..t {
                        let kj = &k[j * d + off..j * d + off + dh];
                        attention.push(qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale);
                    }
                }
                let probs = &mut attention[start..];
                for row in probs.chunks_exact_mut(t) {
                    softmax_in_place(row);
                }
                for (i, row) in probs.chunks_exact(t).enumerate() {
                    let out = &mut mixed[i * d + off..i * d + off + dh];
                    for (j, a) in row.iter().enumerate() {
                        let vj = &v[j * d + off..j * d + off + dh];
                        for (o, vv) in out.iter_mut().zip(vj) {
                            *o += a * vv;
                        }
                    }
                }
            }
            for (xi, yi) in x.iter_mut().zip(layer.output.apply(&mixed)) {
                *xi += yi;
            }

            let h = layer.mlp_norm.apply(&x);
            let hidden: Vec<f64> = layer.mlp_in.apply(&h).into_iter().map(gelu).collect();
            for (xi, yi) in x.iter_mut().zip(layer.mlp_out.apply(&hidden)) {
                *xi += yi;
            }
        }

        let cls = self.final_norm.apply(&x[..d]);
        let scores = self.head.apply(&cls);
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("model scores".into()));
        }
        Ok(ForwardOutput {
            scores,
            attention: Tensor::new(vec![cfg.n_layers, n_heads, t, t], attention)?,
        })
    }

    /// Every parameter tensor with a stable dotted name.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("patch_embed.weight".into(), &self.patch_embed.weight),
            ("patch_embed.bias".into(), &self.patch_embed.bias),
            ("cls_token".into(), &self.cls_token),
            ("pos_embed".into(), &self.pos_embed),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let norms = [("attn_norm", &l.attn_norm), ("mlp_norm", &l.mlp_norm)];
            for (name, norm) in norms {
                out.push((format!("layers.{i}.{name}.gain"), &norm.gain));
                out.push((format!("layers.{i}.{name}.offset"), &norm.offset));
            }
            let linears = [
                ("query", &l.query),
                ("key", &l.key),
                ("value", &l.value),
                ("output", &l.output),
                ("mlp_in", &l.mlp_in),
                ("mlp_out", &l.mlp_out),
            ];
            for (name, lin) in linears {
                out.push((format!("layers.{i}.{name}.weight"), &lin.weight));
                out.push((format!("layers.{i}.{name}.bias"), &lin.bias));
            }
        }
        out.push(("final_norm.gain".into(), &self.final_norm.gain));
        out.push(("final_norm.offset".into(), &self.final_norm.offset));
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    /// Writes `manifest.json` (config + file table) and one `.npy` per parameter.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fsutil::create_dir(dir)?;
        let mut files = BTreeMap::new();
        for (name, tensor) in self.named_params() {
            let file = format!("{name}.npy");
            let bytes = npy::encode_f64(tensor.shape(), tensor.data());
            fsutil::write_atomic(&dir.join(&file), &bytes)?;
            files.insert(
                name,
                FileEntry {
                    path: file,
                    shape: tensor.shape().to_vec(),
                    crc32: format!("{:08x}", crc32fast::hash(&bytes)),
                },
            );
        }
        let manifest = ModelManifest {
            config: self.config.clone(),
            files,
        };
        let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        json.push(b'\n');
        fsutil::write_atomic(&dir.join(crate::bundle::MANIFEST_FILE), &json)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(crate::bundle::MANIFEST_FILE);
        if !manifest_path.is_file() {
            return Err(Error::ManifestMissing(dir.to_path_buf()));
        }
        let manifest: ModelManifest = serde_json::from_slice(&fsutil::read(&manifest_path)?)
            .map_err(|e| Error::ManifestParse {
                path: manifest_path.clone(),
                msg: e.to_string(),
            })?;
        let mut model = Self::init(manifest.config.clone())?;
        let mut loaded = BTreeMap::new();
        for (name, template) in model.named_params() {
            let entry = manifest.files.get(&name).ok_or_else(|| Error::ManifestParse {
                path: manifest_path.clone(),
                msg: format!("no entry for parameter {name}"),
            })?;
            let bytes = fsutil::read(&dir.join(&entry.path))?;
            let found = crc32fast::hash(&bytes);
            let expected = u32::from_str_radix(&entry.crc32, 16).unwrap_or(!found);
            if found != expected {
                return Err(Error::ChecksumMismatch {
                    file: entry.path.clone(),
                    expected,
                    found,
                });
            }
            let arr = npy::decode(&bytes)?;
            if arr.shape != template.shape() {
                return Err(Error::shape(format!(
                    "{name}: expected {:?}, file holds {:?}",
                    template.shape(),
                    arr.shape
                )));
            }
            let shape = arr.shape.clone();
            loaded.insert(name, Tensor::new(shape, arr.into_f64())?);
        }
        model.replace_params(loaded);
        Ok(model)
    }

    fn replace_params(&mut self, mut params: BTreeMap<String, Tensor>) {
        let mut take = |name: String, slot: &mut Tensor| {
            if let Some(t) = params.remove(&name) {
                *slot = t;
            }
        };
        take("patch_embed.weight".into(), &mut self.patch_embed.weight);
        take("patch_embed.bias".into(), &mut self.patch_embed.bias);
        take("cls_token".into(), &mut self.cls_token);
        take("pos_embed".into(), &mut self.pos_embed);
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (name, norm) in [("attn_norm", &mut l.attn_norm), ("mlp_norm", &mut l.mlp_norm)] {
                take(format!("layers.{i}.{name}.gain"), &mut norm.gain);
                take(format!("layers.{i}.{name}.offset"), &mut norm.offset);
            }
            let linears = [
                ("query", &mut l.query),
                ("key", &mut l.key),
                ("value", &mut l.value),
                ("output", &mut l.output),
                ("mlp_in", &mut l.mlp_in),
                ("mlp_out", &mut l.mlp_out),
            ];
            for (name, lin) in linears {
                take(format!("layers.{i}.{name}.weight"), &mut lin.weight);
                take(format!("layers.{i}.{name}.bias"), &mut lin.bias);
            }
        }
        take("final_norm.gain".into(), &mut self.final_norm.gain);
        take("final_norm.offset".into(), &mut self.final_norm.offset);
        take("head.weight".into(), &mut self.head.weight);
        take("head.bias".into(), &mut self.head.bias);
    }
}

impl Scorer for ViTModel {
    fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    fn scores(&self, image: &Tensor) -> Result<Vec<f64>> {
        Ok(self.forward(image)?.scores)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelManifest {
    config: ViTConfig,
    files: BTreeMap<String, FileEntry>,
}

/// GELU, tanh approximation.
fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

/// CLS-query attention over patches, `[L, H, P]`, from a `[L, H, P+1, P+1]`
/// attention tensor. The CLS→CLS entry is dropped and the rest renormalized.
pub fn extract_cls_attention(attention: &Tensor) -> Result<Tensor> {
    extract_cls_attention_with(attention, ClsEntry::Drop)
}

pub fn extract_cls_attention_with(attention: &Tensor, cls: ClsEntry) -> Result<Tensor> {
    if attention.rank() != 4 || attention.dim(2) != attention.dim(3) || attention.dim(3) < 2 {
        return Err(Error::shape(format!(
            "attention must be [L, H, T, T] with T >= 2, got {:?}",
            attention.shape()
        )));
    }
    let (n_layers, n_heads, t) = (attention.dim(0), attention.dim(1), attention.dim(3));
    let width = match cls {
        ClsEntry::Drop => t - 1,
        ClsEntry::Keep => t,
    };
    let mut out = Vec::with_capacity(n_layers * n_heads * width);
    for layer in 0..n_layers {
        for head in 0..n_heads {
            let block = attention.slice(&[layer, head])?;
            let cls_row = &block[..t];
            match cls {
                ClsEntry::Keep => out.extend_from_slice(cls_row),
                ClsEntry::Drop => {
                    let patches = &cls_row[1..];
                    let mass: f64 = patches.iter().sum();
                    if mass < DEGENERATE_ROW_MASS {
                        return Err(Error::DegenerateRow { layer, head });
                    }
                    out.extend(patches.iter().map(|v| v / mass));
                }
            }
        }
    }
    Tensor::new(vec![n_layers, n_heads, width], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_head(row: &[f64]) -> Tensor {
        // [1, 1, T, T] with the given CLS row and uniform other rows.
        let t = row.len();
        let mut data = row.to_vec();
        data.extend(std::iter::repeat_n(1.0 / t as f64, t * (t - 1)));
        Tensor::new(vec![1, 1, t, t], data).unwrap()
    }

    #[test]
    fn extract_drops_cls_and_renormalizes() {
        let out = extract_cls_attention(&single_head(&[0.2, 0.4, 0.4])).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2]);
        assert!((out.data()[0] - 0.5).abs() < 1e-15 && (out.data()[1] - 0.5).abs() < 1e-15);

        let out = extract_cls_attention(&single_head(&[0.0, 1.0, 0.0])).unwrap();
        assert_eq!(out.data(), &[1.0, 0.0]);

        assert!(matches!(
            extract_cls_attention(&single_head(&[1.0, 0.0, 0.0])),
            Err(Error::DegenerateRow { layer: 0, head: 0 })
        ));
    }

    #[test]
    fn extract_keep_mode_returns_raw_row() {
        let out = extract_cls_attention_with(&single_head(&[0.2, 0.4, 0.4]), ClsEntry::Keep).unwrap();
        assert_eq!(out.data(), &[0.2, 0.4, 0.4]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ViTConfig::toy(3, 0);
        cfg.embed_dim = 6;
        cfg.n_heads = 4;
        assert!(matches!(ViTModel::init(cfg), Err(Error::InvalidConfig(_))));

        let mut cfg = ViTConfig::toy(3, 0);
        cfg.patch_size = 5;
        assert!(matches!(ViTModel::init(cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn init_is_seeded() {
        let a = ViTModel::init(ViTConfig::toy(3, 7)).unwrap();
        let b = ViTModel::init(ViTConfig::toy(3, 7)).unwrap();
        let c = ViTModel::init(ViTConfig::toy(3, 8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.patch_embed.weight, c.patch_embed.weight);
        for (_, t) in a.named_params() {
            assert!(t.data().iter().all(|v| v.abs() <= 1.0));
        }
        assert!(a
            .patch_embed
            .weight
            .data()
            .iter()
            .all(|v| v.abs() <= INIT_RANGE));
    }

    #[test]
    fn forward_rejects_wrong_image_shape() {
        let m = ViTModel::init(ViTConfig::toy(3, 1)).unwrap();
        let img = Tensor::zeros(vec![8, 8, 1]).unwrap();
        assert!(matches!(m.forward(&img), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn patchify_orders_patches_row_major() {
        let mut cfg = ViTConfig::toy(2, 0);
        cfg.image_size = [4, 4, 1];
        cfg.patch_size = 2;
        let m = ViTModel::init(cfg).unwrap();
        let img = Tensor::new(vec![4, 4, 1], (0..16).map(f64::from).collect()).unwrap();
        let flat = m.patchify(&img);
        assert_eq!(&flat[..4], &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(&flat[4..8], &[2.0, 3.0, 6.0, 7.0]);
        assert_eq!(&flat[8..12], &[8.0, 9.0, 12.0, 13.0]);
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_191_990_608_277).abs() < 1e-12);
        assert!((gelu(-3.0) + 0.003_637_392_081_773).abs() < 1e-12);
    }
}
