//! The on-disk analysis bundle: per-sample CLS attention, attribution maps,
//! labels, predictions and (optionally) the images themselves.
//!
//! A bundle directory holds `manifest.json` plus one `.npy` file per array:
//!
//! | file              | dtype | shape                                     |
//! |-------------------|-------|-------------------------------------------|
//! | `attention.npy`   | `<f8` | `[N, L, H, P]`                            |
//! | `attribution.npy` | `<f8` | `[N, P]`, `[N, K, P]`, or pixel `[N, R, C]` / `[N, K, R, C]` |
//! | `labels.npy`      | `<i8` | `[N]`                                     |
//! | `predictions.npy` | `<i8` | `[N]`                                     |
//! | `images.npy`      | `<f8` | `[N, R, C, channels]` (optional)          |
//!
//! Each file is listed in the manifest with its shape and CRC-32.
//!
//! In memory, attribution is always held at patch resolution as `[N, K, P]`,
//! where `K` is 1 for single-target maps and the class count for per-class
//! maps.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::npy;
use crate::tensor::{pool_to_patches, Tensor};

pub const FORMAT_VERSION: &str = "1.0";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Attention rows whose sum is off by more than this are rejected.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;
/// Rows within this distance of 1 are left untouched by renormalization, so
/// re-ingesting an already normalized bundle is bit-exact.
const RENORMALIZE_SKIP: f64 = 1e-12;

/// Which class label picks the attribution map for a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    Predicted,
    GroundTruth,
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelMode::Predicted => "predicted",
            LabelMode::GroundTruth => "ground_truth",
        })
    }
}

impl FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "predicted" => Ok(LabelMode::Predicted),
            "ground_truth" | "ground-truth" => Ok(LabelMode::GroundTruth),
            other => Err(Error::InvalidArgument(format!(
                "label mode must be predicted or ground-truth, got {other:?}"
            ))),
        }
    }
}

/// Which class the stored attribution maps explain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionTarget {
    /// One map per class per sample.
    PerClass,
    /// One map per sample, for its predicted class.
    Predicted,
    /// One map per sample, for its ground-truth class.
    GroundTruth,
}

/// Everything needed to assemble a bundle. Attribution may be given at pixel
/// resolution, in which case `patch_size` is required.
#[derive(Debug, Clone)]
pub struct BundleParts {
    pub attention: Tensor,
    pub attribution: Tensor,
    pub attribution_target: AttributionTarget,
    pub labels: Vec<usize>,
    pub predictions: Vec<usize>,
    pub images: Option<Tensor>,
    pub class_names: Vec<String>,
    pub attribution_method: String,
    pub checkpoint_tag: String,
    pub patch_size: Option<usize>,
}

/// What ingest changed while validating a bundle.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    /// Negative attribution entries set to zero.
    pub clamped_attribution: usize,
    /// Attention rows rescaled to sum to one.
    pub renormalized_rows: usize,
    pub pooled_from_pixels: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisBundle {
    attention: Tensor,
    attribution: Tensor,
    attribution_target: AttributionTarget,
    labels: Vec<usize>,
    predictions: Vec<usize>,
    images: Option<Tensor>,
    class_names: Vec<String>,
    attribution_method: String,
    checkpoint_tag: String,
    patch_size: Option<usize>,
}

impl AnalysisBundle {
    /// Validates `parts` and returns the bundle together with a report of the
    /// repairs applied (attribution clamping, attention renormalization).
    pub fn from_parts(parts: BundleParts) -> Result<(Self, IngestReport)> {
        let mut report = IngestReport::default();
        let BundleParts {
            mut attention,
            attribution,
            attribution_target,
            labels,
            predictions,
            images,
            class_names,
            attribution_method,
            checkpoint_tag,
            patch_size,
        } = parts;

        if attention.rank() != 4 {
            return Err(Error::shape(format!(
                "attention must be [N, L, H, P], got {:?}",
                attention.shape()
            )));
        }
        let (n, p) = (attention.dim(0), attention.dim(3));
        if n == 0 {
            return Err(Error::EmptyBundle);
        }
        let n_classes = class_names.len();
        if n_classes == 0 {
            return Err(Error::InvariantViolation("bundle declares no classes".into()));
        }

        for (row_idx, row) in attention.data_mut().chunks_exact_mut(p).enumerate() {
            if let Some(v) = row.iter().find(|v| **v < 0.0) {
                return Err(Error::InvariantViolation(format!(
                    "attention row {row_idx} has negative entry {v}"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvariantViolation(format!(
                    "attention row {row_idx} sums to {sum}"
                )));
            }
            if (sum - 1.0).abs() > RENORMALIZE_SKIP {
                row.iter_mut().for_each(|v| *v /= sum);
                report.renormalized_rows += 1;
            }
        }

        let mut attribution = to_patch_attribution(
            attribution,
            attribution_target,
            n,
            n_classes,
            p,
            patch_size,
            &mut report,
        )?;
        for v in attribution.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
                report.clamped_attribution += 1;
            }
        }

        for (what, values) in [("labels", &labels), ("predictions", &predictions)] {
            if values.len() != n {
                return Err(Error::shape(format!(
                    "{what} has {} entries for {n} samples",
                    values.len()
                )));
            }
            if let Some(bad) = values.iter().find(|c| **c >= n_classes) {
                return Err(Error::InvariantViolation(format!(
                    "{what} contains class {bad}, but only {n_classes} classes are declared"
                )));
            }
        }

        if let Some(images) = &images {
            if images.rank() != 4 || images.dim(0) != n {
                return Err(Error::shape(format!(
                    "images must be [{n}, rows, cols, channels], got {:?}",
                    images.shape()
                )));
            }
            if let Some(ps) = patch_size {
                let (r, c) = (images.dim(1), images.dim(2));
                if r % ps != 0 || c % ps != 0 || (r / ps) * (c / ps) != p {
                    return Err(Error::shape(format!(
                        "{r}x{c} images with patch size {ps} do not give {p} patches"
                    )));
                }
            }
        }

        Ok((
            Self {
                attention,
                attribution,
                attribution_target,
                labels,
                predictions,
                images,
                class_names,
                attribution_method,
                checkpoint_tag,
                patch_size,
            },
            report,
        ))
    }

    pub fn n_samples(&self) -> usize {
        self.attention.dim(0)
    }

    pub fn n_layers(&self) -> usize {
        self.attention.dim(1)
    }

    pub fn n_heads(&self) -> usize {
        self.attention.dim(2)
    }

    pub fn n_patches(&self) -> usize {
        self.attention.dim(3)
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn attention(&self) -> &Tensor {
        &self.attention
    }

    /// Stored attribution, `[N, K, P]` with `K` = 1 or the class count.
    pub fn attribution(&self) -> &Tensor {
        &self.attribution
    }

    pub fn attribution_target(&self) -> AttributionTarget {
        self.attribution_target
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn predictions(&self) -> &[usize] {
        &self.predictions
    }

    pub fn images(&self) -> Option<&Tensor> {
        self.images.as_ref()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn attribution_method(&self) -> &str {
        &self.attribution_method
    }

    pub fn checkpoint_tag(&self) -> &str {
        &self.checkpoint_tag
    }

    pub fn patch_size(&self) -> Option<usize> {
        self.patch_size
    }

    fn check_sample(&self, sample: usize) -> Result<()> {
        if sample >= self.n_samples() {
            return Err(Error::IndexOutOfRange {
                what: "sample",
                index: sample,
                limit: self.n_samples(),
            });
        }
        Ok(())
    }

    /// CLS attention of one head over the `P` patches.
    pub fn attention_row(&self, sample: usize, layer: usize, head: usize) -> Result<&[f64]> {
        self.check_sample(sample)?;
        if layer >= self.n_layers() {
            return Err(Error::IndexOutOfRange {
                what: "layer",
                index: layer,
                limit: self.n_layers(),
            });
        }
        if head >= self.n_heads() {
            return Err(Error::IndexOutOfRange {
                what: "head",
                index: head,
                limit: self.n_heads(),
            });
        }
        self.attention.slice(&[sample, layer, head])
    }

    /// The class a label mode selects for `sample`.
    pub fn class_for(&self, sample: usize, mode: LabelMode) -> Result<usize> {
        self.check_sample(sample)?;
        Ok(match mode {
            LabelMode::Predicted => self.predictions[sample],
            LabelMode::GroundTruth => self.labels[sample],
        })
    }

    /// Patch attribution explaining `class` for `sample`.
    ///
    /// Single-target bundles only hold the map for the class their target
    /// mode selects; other classes give [`Error::AttributionUnavailable`].
    pub fn attribution_for(&self, sample: usize, class: usize) -> Result<&[f64]> {
        self.check_sample(sample)?;
        if class >= self.n_classes() {
            return Err(Error::IndexOutOfRange {
                what: "class",
                index: class,
                limit: self.n_classes(),
            });
        }
        let stored = match self.attribution_target {
            AttributionTarget::PerClass => return self.attribution.slice(&[sample, class]),
            AttributionTarget::Predicted => self.predictions[sample],
            AttributionTarget::GroundTruth => self.labels[sample],
        };
        if stored != class {
            return Err(Error::AttributionUnavailable { sample, class });
        }
        self.attribution.slice(&[sample, 0])
    }

    /// The sample's image as a `[rows, cols, channels]` tensor.
    pub fn image(&self, sample: usize) -> Result<Tensor> {
        self.check_sample(sample)?;
        let images = self.images.as_ref().ok_or(Error::MissingImages)?;
        Tensor::new(images.shape()[1..].to_vec(), images.slice(&[sample])?.to_vec())
    }
}

fn to_patch_attribution(
    attribution: Tensor,
    target: AttributionTarget,
    n: usize,
    n_classes: usize,
    p: usize,
    patch_size: Option<usize>,
    report: &mut IngestReport,
) -> Result<Tensor> {
    let per_class = target == AttributionTarget::PerClass;
    let k = if per_class { n_classes } else { 1 };
    let shape = attribution.shape().to_vec();
    if shape.first() != Some(&n) {
        return Err(Error::shape(format!(
            "attribution shape {shape:?} does not start with N = {n}"
        )));
    }
    let maps_shape = if per_class {
        if shape.get(1) != Some(&n_classes) {
            return Err(Error::shape(format!(
                "per-class attribution {shape:?} must have {n_classes} classes on axis 1"
            )));
        }
        &shape[2..]
    } else {
        &shape[1..]
    };
    match maps_shape {
        [len] if *len == p => attribution.reshape(vec![n, k, p]),
        [rows, cols] => {
            let ps = patch_size.ok_or_else(|| {
                Error::shape("pixel-level attribution needs a patch size to pool with")
            })?;
            let mut pooled = Vec::with_capacity(n * k * p);
            for map in attribution.data().chunks_exact(rows * cols) {
                let map = Tensor::from_parts_unchecked(vec![*rows, *cols], map.to_vec());
                let patches = pool_to_patches(&map, ps)?;
                if patches.len() != p {
                    return Err(Error::shape(format!(
                        "{rows}x{cols} attribution pools to {} patches, attention has {p}",
                        patches.len()
                    )));
                }
                pooled.extend_from_slice(patches.data());
            }
            report.pooled_from_pixels = true;
            Tensor::new(vec![n, k, p], pooled)
        }
        other => Err(Error::shape(format!(
            "attribution maps of shape {other:?} match neither {p} patches nor a pixel grid"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestDims {
    pub n_samples: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub n_patches: usize,
    pub n_classes: usize,
    pub patch_size: Option<usize>,
    /// `[rows, cols, channels]` when images are stored.
    pub image: Option<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub shape: Vec<usize>,
    /// CRC-32 of the file bytes, as 8 lowercase hex digits.
    pub crc32: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub dims: ManifestDims,
    pub class_names: Vec<String>,
    pub attribution_method: String,
    pub attribution_target: AttributionTarget,
    #[serde(default)]
    pub checkpoint_tag: String,
    pub files: BTreeMap<String, FileEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(Error::ManifestMissing(dir.to_path_buf()));
        }
        let bytes = fsutil::read(&path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::ManifestParse {
            path,
            msg: e.to_string(),
        })
    }
}

fn crc_hex(bytes: &[u8]) -> String {
    format!("{:08x}", crc32fast::hash(bytes))
}

/// Reads and validates a bundle directory.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<AnalysisBundle> {
    load_bundle_with_report(dir).map(|(b, _)| b)
}

pub fn load_bundle_with_report(dir: impl AsRef<Path>) -> Result<(AnalysisBundle, IngestReport)> {
    let dir = dir.as_ref();
    let manifest = Manifest::read(dir)?;
    let read_array = |name: &str| -> Result<Option<npy::NpyArray>> {
        let Some(entry) = manifest.files.get(name) else {
            return Ok(None);
        };
        let bytes = fsutil::read(&dir.join(&entry.path))?;
        let found = crc32fast::hash(&bytes);
        let expected = u32::from_str_radix(&entry.crc32, 16).map_err(|_| Error::ManifestParse {
            path: dir.join(MANIFEST_FILE),
            msg: format!("bad crc32 {:?} for {name}", entry.crc32),
        })?;
        if found != expected {
            return Err(Error::ChecksumMismatch {
                file: entry.path.clone(),
                expected,
                found,
            });
        }
        let array = npy::decode(&bytes).map_err(|e| e.context(entry.path.clone()))?;
        if array.shape != entry.shape {
            return Err(Error::shape(format!(
                "{}: manifest declares {:?}, file holds {:?}",
                entry.path, entry.shape, array.shape
            )));
        }
        Ok(Some(array))
    };
    let require = |name: &str| -> Result<npy::NpyArray> {
        read_array(name)?.ok_or_else(|| Error::ManifestParse {
            path: dir.join(MANIFEST_FILE),
            msg: format!("no {name} entry in files"),
        })
    };
    let to_tensor = |a: npy::NpyArray| {
        let shape = a.shape.clone();
        Tensor::new(shape, a.into_f64())
    };
    let to_classes = |name: &str, a: npy::NpyArray| -> Result<Vec<usize>> {
        a.into_i64()?
            .into_iter()
            .map(|v| {
                usize::try_from(v).map_err(|_| {
                    Error::InvariantViolation(format!("{name} contains negative class {v}"))
                })
            })
            .collect()
    };

    let attention = to_tensor(require("attention")?)?;
    let d = &manifest.dims;
    let declared = [d.n_samples, d.n_layers, d.n_heads, d.n_patches];
    if attention.shape() != declared {
        return Err(Error::shape(format!(
            "attention is {:?}, manifest dims say {declared:?}",
            attention.shape()
        )));
    }
    if manifest.class_names.len() != d.n_classes {
        return Err(Error::shape(format!(
            "{} class names for n_classes = {}",
            manifest.class_names.len(),
            d.n_classes
        )));
    }
    let images = read_array("images")?.map(to_tensor).transpose()?;
    if let (Some(img), Some(dims)) = (&images, d.image) {
        if img.shape()[1..] != dims {
            return Err(Error::shape(format!(
                "images are {:?}, manifest dims say {dims:?}",
                img.shape()
            )));
        }
    }

    let parts = BundleParts {
        attention,
        attribution: to_tensor(require("attribution")?)?,
        attribution_target: manifest.attribution_target,
        labels: to_classes("labels", require("labels")?)?,
        predictions: to_classes("predictions", require("predictions")?)?,
        images,
        class_names: manifest.class_names.clone(),
        attribution_method: manifest.attribution_method.clone(),
        checkpoint_tag: manifest.checkpoint_tag.clone(),
        patch_size: d.patch_size,
    };
    AnalysisBundle::from_parts(parts)
}

/// Writes `bundle` to `dir`, array files first and the manifest last.
pub fn save_bundle(bundle: &AnalysisBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fsutil::create_dir(dir)?;

    let n = bundle.n_samples();
    let as_i64 = |v: &[usize]| v.iter().map(|&c| c as i64).collect::<Vec<_>>();
    let attribution_shape = match bundle.attribution_target {
        AttributionTarget::PerClass => bundle.attribution.shape().to_vec(),
        _ => vec![n, bundle.n_patches()],
    };

    let mut arrays: Vec<(&str, Vec<usize>, Vec<u8>)> = vec![
        (
            "attention",
            bundle.attention.shape().to_vec(),
            npy::encode_f64(bundle.attention.shape(), bundle.attention.data()),
        ),
        (
            "attribution",
            attribution_shape.clone(),
            npy::encode_f64(&attribution_shape, bundle.attribution.data()),
        ),
        ("labels", vec![n], npy::encode_i64(&[n], &as_i64(&bundle.labels))),
        (
            "predictions",
            vec![n],
            npy::encode_i64(&[n], &as_i64(&bundle.predictions)),
        ),
    ];
    if let Some(images) = &bundle.images {
        arrays.push((
            "images",
            images.shape().to_vec(),
            npy::encode_f64(images.shape(), images.data()),
        ));
    }

    let mut files = BTreeMap::new();
    for (name, shape, bytes) in arrays {
        let file = format!("{name}.npy");
        fsutil::write_atomic(&dir.join(&file), &bytes)?;
        files.insert(
            name.to_string(),
            FileEntry {
                path: file,
                shape,
                crc32: crc_hex(&bytes),
            },
        );
    }

    let manifest = Manifest {
        format_version: FORMAT_VERSION.to_string(),
        dims: ManifestDims {
            n_samples: n,
            n_layers: bundle.n_layers(),
            n_heads: bundle.n_heads(),
            n_patches: bundle.n_patches(),
            n_classes: bundle.n_classes(),
            patch_size: bundle.patch_size,
            image: bundle
                .images
                .as_ref()
                .map(|i| [i.dim(1), i.dim(2), i.dim(3)]),
        },
        class_names: bundle.class_names.clone(),
        attribution_method: bundle.attribution_method.clone(),
        attribution_target: bundle.attribution_target,
        checkpoint_tag: bundle.checkpoint_tag.clone(),
        files,
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    fsutil::write_atomic(&dir.join(MANIFEST_FILE), &json)
}
